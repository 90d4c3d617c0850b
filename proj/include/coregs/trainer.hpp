// SPDX-License-Identifier: Apache-2.0
#pragma once

// Photometric optimization of a splat scene: the optional warmup over full
// frames, and the point-of-interest refinement that trains against
// p*-composited targets and periodically prunes p*-colored splats.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coregs/core.hpp"
#include "coregs/filter.hpp"
#include "coregs/metrics.hpp"
#include "coregs/palette.hpp"
#include "coregs/poi.hpp"
#include "coregs/rasterizer.hpp"

namespace coregs {

struct LearningRates {
    double position_init = 1.6e-4;  // multiplied by the scene extent
    double position_final = 1.6e-6;
    double sh = 2.5e-3;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct DensifyConfig {
    bool enabled = false;
    int interval = 100;
    int start = 100;              // first refinement iteration eligible for densification
    int stop = -1;                // last eligible iteration; -1 = half of the run
    double grad_threshold = 2e-4; // mean |dL/d mean2d| (pixel units)
    double min_opacity = 0.005;   // epsilon_alpha
    double percent_dense = 0.01;  // clone below, split above this fraction of the extent
};

struct RefineConfig {
    int init_iters = 3000;
    int total_iters = 30000;
    int filter_period = 1000;
    double t_r = 0.5;
    double lambda = 0.2;
    LearningRates lr;
    DensifyConfig densify;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    int filter_view_stride = 1;
    FlagAggregation filter_aggregation = FlagAggregation::kAnyView;
    double scene_extent = 0.0;  // 0 = derive from the camera centers
    RasterSettings raster;

    int refine_iters() const { return total_iters - init_iters; }

    /// Full invariant set, including init_iters < total_iters.
    void validate() const {
        validate_schedule(false);
    }

    /// With allow_empty_refinement, init_iters == total_iters is accepted
    /// (refinement then runs zero iterations).
    void validate_schedule(bool allow_empty_refinement) const {
        if (init_iters < 0) throw InvalidInput("init_iters must be >= 0");
        if (!(init_iters < total_iters || (allow_empty_refinement && init_iters == total_iters)))
            throw InvalidInput("init_iters (" + std::to_string(init_iters) + ") must be < total_iters (" +
                               std::to_string(total_iters) + ")");
        if (filter_period < 1) throw InvalidInput("filter_period must be >= 1");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("lambda must be in [0,1]");
        if (!(t_r > 0.0)) throw InvalidInput("t_r must be positive");
        if (filter_view_stride < 1) throw InvalidInput("filter view stride must be >= 1");
    }
};

struct FilterPass {
    int iteration = 0;
    std::size_t flagged = 0;
    std::size_t remaining = 0;
};

struct DensifyPass {
    int iteration = 0;
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    std::size_t remaining = 0;
};

struct TrainLog {
    std::vector<double> losses;  // one per iteration
    std::vector<FilterPass> filter_passes;
    std::vector<DensifyPass> densify_passes;
    std::map<std::string, double> phase_seconds;
    std::optional<MetricReport> final_metrics;
};

/// Raised when refinement can no longer continue (e.g. everything was pruned).
class RefineAborted : public Error {
public:
    RefineAborted(const std::string& what, TrainLog log) : Error("refinement aborted: " + what), log_(std::move(log)) {}
    const TrainLog& log() const { return log_; }

private:
    TrainLog log_;
};

template <typename T>
struct TrainingView {
    CameraModel camera;
    ImageBuffer<T> target;
};

/// Targets for refinement: each retained view's image composited over p*.
template <typename T>
std::vector<TrainingView<T>> make_refine_views(std::span<const CameraModel> cams, std::span<const ImageBuffer<T>> images,
                                               const PoiSelection& sel, const ColorRGB& p_star) {
    if (cams.size() != images.size()) throw InvalidInput("camera / image count mismatch");
    std::vector<TrainingView<T>> out;
    for (std::size_t k = 0; k < sel.views.size(); ++k) {
        const std::size_t v = sel.views[k];
        if (v >= cams.size()) throw InvalidInput("selection references a missing view");
        out.push_back({cams[v], composite_target(images[v], sel.masks[k], p_star)});
    }
    return out;
}

/// 1.1 x the largest distance of a camera center from their mean.
inline double camera_extent(std::span<const CameraModel> cams) {
    if (cams.empty()) return 1.0;
    Vec3<double> mean = Vec3<double>::Zero();
    for (const auto& c : cams) mean += c.center();
    mean /= static_cast<double>(cams.size());
    double r = 0.0;
    for (const auto& c : cams) r = std::max(r, (c.center() - mean).norm());
    return r > 0.0 ? 1.1 * r : 1.0;
}

//------------------------------------------------------------------------------
// Optimizer

/// Adam over per-splat parameters. Only splats marked active receive a step
/// (and a moment update); bias correction uses the global step count.
template <typename T>
class SparseAdam {
public:
    static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-15;

    void resize_like(const SplatScene<T>& scene) {
        const auto zero = SplatParams<T>::zeros(sh_coeff_count(scene.sh_degree));
        m_.assign(scene.size(), zero);
        v_.assign(scene.size(), zero);
    }

    /// Re-index state after the scene changed: source[i] is the old index of
    /// new splat i, or -1 for a splat with fresh state.
    void remap(const std::vector<std::ptrdiff_t>& source, std::size_t sh_count) {
        const auto zero = SplatParams<T>::zeros(sh_count);
        std::vector<SplatParams<T>> m, v;
        m.reserve(source.size());
        v.reserve(source.size());
        for (const auto s : source) {
            m.push_back(s >= 0 ? m_[static_cast<std::size_t>(s)] : zero);
            v.push_back(s >= 0 ? v_[static_cast<std::size_t>(s)] : zero);
        }
        m_ = std::move(m);
        v_ = std::move(v);
    }

    void step(SplatScene<T>& scene, const std::vector<SplatParams<T>>& grads, const std::vector<std::uint8_t>& active,
              const LearningRates& lr, double position_lr, std::int64_t t) {
        const double bc1 = 1.0 - std::pow(kBeta1, double(t));
        const double bc2 = 1.0 - std::pow(kBeta2, double(t));
        for (std::size_t i = 0; i < scene.size(); ++i) {
            if (!active[i]) continue;
            auto& p = scene.gaussians[i];
            auto& m = m_[i];
            auto& v = v_[i];
            const auto& g = grads[i];
            for (std::size_t k = 0; k < p.param_count(); ++k) {
                const double gk = double(g.param(k));
                const double mk = kBeta1 * double(m.param(k)) + (1.0 - kBeta1) * gk;
                const double vk = kBeta2 * double(v.param(k)) + (1.0 - kBeta2) * gk * gk;
                m.param(k) = T(mk);
                v.param(k) = T(vk);
                const double rate = k < 3 ? position_lr : k < 6 ? lr.scale : k < 10 ? lr.rotation
                                                       : k == 10 ? lr.opacity : lr.sh;
                p.param(k) = T(double(p.param(k)) - rate * (mk / bc1) / (std::sqrt(vk / bc2) + kEps));
            }
        }
    }

private:
    std::vector<SplatParams<T>> m_, v_;
};

//------------------------------------------------------------------------------
// Densification

struct GradStats {
    std::vector<double> accum;
    std::vector<std::int64_t> count;

    void reset(std::size_t n) {
        accum.assign(n, 0.0);
        count.assign(n, 0);
    }
};

template <typename T>
struct DensifyResult {
    SplatScene<T> scene;
    std::vector<std::ptrdiff_t> source;  // old index per new splat, -1 for new children
    DensifyPass pass;
};

/// Clones small high-gradient splats, splits large ones into two, then drops
/// splats whose opacity fell below the floor. Children keep their parent's label.
template <typename T>
DensifyResult<T> densify_and_prune(const SplatScene<T>& scene, const GradStats& stats, const DensifyConfig& cfg,
                                   double extent, std::mt19937_64& rng) {
    if (stats.accum.size() != scene.size() || stats.count.size() != scene.size())
        throw InvalidInput("densify: gradient statistics do not match the scene");
    DensifyResult<T> out;
    out.scene = scene.empty_like();
    std::vector<Gaussian3D<T>> children;
    std::normal_distribution<double> normal(0.0, 1.0);
    const double size_limit = cfg.percent_dense * extent;

    std::vector<std::uint8_t> drop(scene.size(), 0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        const double mean_grad = stats.count[i] > 0 ? stats.accum[i] / double(stats.count[i]) : 0.0;
        if (!(mean_grad >= cfg.grad_threshold)) continue;
        const double max_scale = double(g.scale().maxCoeff());
        if (max_scale <= size_limit) {
            children.push_back(g);
            ++out.pass.cloned;
        } else {
            const Mat3<double> r = quat_to_rotation<double>(g.rotation.template cast<double>());
            const Vec3<double> s = g.scale().template cast<double>();
            for (int c = 0; c < 2; ++c) {
                auto child = g;
                const Vec3<double> offset = r * Vec3<double>(s[0] * normal(rng), s[1] * normal(rng), s[2] * normal(rng));
                child.position += offset.cast<T>();
                child.log_scale = (s / 1.6).array().log().matrix().template cast<T>();
                children.push_back(child);
            }
            drop[i] = 1;
            ++out.pass.split;
        }
    }

    const auto keep = [&](const Gaussian3D<T>& g) { return double(g.opacity()) >= cfg.min_opacity; };
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (drop[i]) continue;
        if (!keep(scene.gaussians[i])) {
            ++out.pass.pruned;
            continue;
        }
        out.scene.gaussians.push_back(scene.gaussians[i]);
        out.source.push_back(static_cast<std::ptrdiff_t>(i));
    }
    for (auto& c : children) {
        if (!keep(c)) {
            ++out.pass.pruned;
            continue;
        }
        out.scene.gaussians.push_back(std::move(c));
        out.source.push_back(-1);
    }
    out.pass.remaining = out.scene.size();
    return out;
}

//------------------------------------------------------------------------------
// Training loops

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Seeded epoch shuffle: each epoch visits every view once.
class ViewSampler {
public:
    ViewSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) { std::iota(order_.begin(), order_.end(), 0); }

    std::size_t next() {
        if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng_);
        const std::size_t v = order_[pos_];
        pos_ = (pos_ + 1) % order_.size();
        return v;
    }

private:
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

inline double position_lr(const LearningRates& lr, double extent, int iter, int total) {
    const double t = total > 1 ? std::clamp(double(iter) / double(total), 0.0, 1.0) : 0.0;
    return extent * std::exp(std::log(lr.position_init) * (1.0 - t) + std::log(lr.position_final) * t);
}

/// Hook run after iteration `iter` (1-based); may replace the scene and
/// returns the old-index mapping when it did.
template <typename T>
using PostStepHook = std::function<std::optional<std::vector<std::ptrdiff_t>>(int iter, SplatScene<T>&, TrainLog&)>;

/// `origin` tracks, for every current splat, its index in the input scene
/// (-1 for splats created by densification).
template <typename T>
void optimize(SplatScene<T>& scene, std::span<const TrainingView<T>> views, const ColorRGB& background,
              const RefineConfig& cfg, int iterations, double extent, TrainLog& log, const PostStepHook<T>& hook,
              std::vector<std::ptrdiff_t>* origin = nullptr) {
    if (origin) {
        origin->resize(scene.size());
        std::iota(origin->begin(), origin->end(), std::ptrdiff_t{0});
    }
    const auto track = [&](const std::vector<std::ptrdiff_t>& source) {
        if (!origin) return;
        std::vector<std::ptrdiff_t> next;
        next.reserve(source.size());
        for (const auto s : source) next.push_back(s >= 0 ? (*origin)[static_cast<std::size_t>(s)] : -1);
        *origin = std::move(next);
    };
    if (iterations <= 0) return;
    if (views.empty()) throw InvalidInput("no training views");
    SparseAdam<T> adam;
    adam.resize_like(scene);
    ViewSampler sampler(views.size(), cfg.seed);
    std::mt19937_64 densify_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    GradStats stats;
    stats.reset(scene.size());
    const int densify_stop = cfg.densify.stop >= 0 ? cfg.densify.stop : iterations / 2;
    RasterSettings rs = cfg.raster;
    rs.workers = cfg.workers;

    double t_optimize = 0.0, t_densify = 0.0;
    log.losses.reserve(log.losses.size() + static_cast<std::size_t>(iterations));
    for (int it = 1; it <= iterations; ++it) {
        Stopwatch sw;
        const auto& view = views[sampler.next()];
        const auto res = backward(scene, view.camera, view.target, background, cfg.lambda, rs);
        log.losses.push_back(res.loss);
        adam.step(scene, res.grads, res.contributed, cfg.lr, position_lr(cfg.lr, extent, it - 1, iterations), it);
        if (cfg.densify.enabled) {
            for (std::size_t i = 0; i < scene.size(); ++i)
                if (res.contributed[i]) {
                    stats.accum[i] += double(res.mean2d_grad_norm[i]);
                    ++stats.count[i];
                }
        }
        t_optimize += sw.seconds();

        if (cfg.densify.enabled && it >= cfg.densify.start && it <= densify_stop && it % cfg.densify.interval == 0) {
            Stopwatch dsw;
            auto d = densify_and_prune(scene, stats, cfg.densify, extent, densify_rng);
            d.pass.iteration = it;
            log.densify_passes.push_back(d.pass);
            scene = std::move(d.scene);
            adam.remap(d.source, sh_coeff_count(scene.sh_degree));
            track(d.source);
            stats.reset(scene.size());
            t_densify += dsw.seconds();
            if (scene.empty()) throw RefineAborted("densification removed every splat", log);
        }
        if (hook) {
            if (auto mapping = hook(it, scene, log)) {
                adam.remap(*mapping, sh_coeff_count(scene.sh_degree));
                track(*mapping);
                std::vector<double> acc;
                std::vector<std::int64_t> cnt;
                for (const auto s : *mapping) {
                    acc.push_back(s >= 0 ? stats.accum[static_cast<std::size_t>(s)] : 0.0);
                    cnt.push_back(s >= 0 ? stats.count[static_cast<std::size_t>(s)] : 0);
                }
                stats.accum = std::move(acc);
                stats.count = std::move(cnt);
            }
        }
    }
    log.phase_seconds["optimize"] += t_optimize;
    if (cfg.densify.enabled) log.phase_seconds["densify"] += t_densify;
}

}  // namespace detail

/// Plain photometric training over full frames for cfg.init_iters iterations.
/// Labels are carried along unchanged.
template <typename T>
SplatScene<T> warmup_train(SplatScene<T> scene, std::span<const TrainingView<T>> views, const RefineConfig& cfg,
                           const ColorRGB& background, TrainLog* log_out = nullptr) {
    if (scene.empty()) throw InvalidInput("warmup_train: empty scene");
    scene.validate();
    TrainLog log;
    if (cfg.init_iters > 0) {
        std::vector<CameraModel> cams;
        for (const auto& v : views) cams.push_back(v.camera);
        const double extent = cfg.scene_extent > 0.0 ? cfg.scene_extent : camera_extent(cams);
        detail::Stopwatch sw;
        detail::optimize<T>(scene, views, background, cfg, cfg.init_iters, extent, log, {});
        log.phase_seconds["warmup"] = sw.seconds();
    }
    if (log_out) *log_out = std::move(log);
    return scene;
}

template <typename T>
struct RefineResult {
    SplatScene<T> scene;
    TrainLog log;
    std::vector<std::ptrdiff_t> origin;  // input index of each final splat, -1 if created during training
};

/// Refines the point-of-interest splats against composited targets, with the
/// background fixed to p*. Every cfg.filter_period iterations, splats whose
/// color comes within t_r * d_avg of p* in the views are pruned.
template <typename T>
RefineResult<T> refine(SplatScene<T> poi_scene, std::span<const TrainingView<T>> views, const FurthestColor& palette,
                       const RefineConfig& cfg) {
    cfg.validate_schedule(true);
    if (poi_scene.empty()) throw InvalidInput("refine: empty point-of-interest scene");
    if (views.empty()) throw InvalidInput("refine: no retained views");
    poi_scene.validate();

    RefineResult<T> out;
    std::vector<CameraModel> cams;
    for (const auto& v : views) cams.push_back(v.camera);
    const double extent = cfg.scene_extent > 0.0 ? cfg.scene_extent : camera_extent(cams);
    const double d_remove = removal_distance(palette.d_avg, cfg.t_r);
    FilterConfig fcfg;
    fcfg.t_r = cfg.t_r;
    fcfg.period = cfg.filter_period;
    fcfg.view_stride = cfg.filter_view_stride;
    fcfg.aggregation = cfg.filter_aggregation;
    fcfg.workers = cfg.workers;

    double t_filter = 0.0;
    const detail::PostStepHook<T> filter_hook =
        [&](int it, SplatScene<T>& scene, TrainLog& log) -> std::optional<std::vector<std::ptrdiff_t>> {
        if (it % cfg.filter_period != 0) return std::nullopt;
        detail::Stopwatch sw;
        const auto report = flag_artifacts(scene, std::span<const CameraModel>(cams), palette.p_star, d_remove, fcfg);
        const auto keep = survivors(scene.size(), report.flagged);
        scene = prune(scene, report);
        log.filter_passes.push_back({it, report.flagged.size(), scene.size()});
        t_filter += sw.seconds();
        if (scene.empty())
            throw RefineAborted("color filter removed every splat at iteration " + std::to_string(it), log);
        return std::vector<std::ptrdiff_t>(keep.begin(), keep.end());
    };

    detail::Stopwatch sw;
    detail::optimize<T>(poi_scene, views, palette.p_star, cfg, cfg.refine_iters(), extent, out.log, filter_hook,
                        &out.origin);
    out.log.phase_seconds["filter"] = t_filter;
    out.log.phase_seconds["refine"] = sw.seconds();
    out.scene = std::move(poi_scene);
    return out;
}

template <typename T>
RefineResult<T> refine(SplatScene<T> poi_scene, const std::vector<TrainingView<T>>& views, const FurthestColor& palette,
                       const RefineConfig& cfg) {
    return refine(std::move(poi_scene), std::span<const TrainingView<T>>(views), palette, cfg);
}

}  // namespace coregs
