// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic ground-truth scenes for desk-scale experiments: a labeled object
// at the origin inside a background shell, an orbit of cameras, rendered
// images and segmentation maps, and color-matched floater injection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "coregs/core.hpp"
#include "coregs/metrics.hpp"
#include "coregs/palette.hpp"
#include "coregs/poi.hpp"
#include "coregs/rasterizer.hpp"
#include "coregs/trainer.hpp"

namespace coregs {

constexpr std::int32_t kBackgroundClass = 0;
constexpr std::int32_t kPoiClass = 1;

struct SynthSpec {
    std::uint64_t seed = 0;
    int n_poi_splats = 500;
    int n_background_splats = 1500;
    int n_floaters = 50;
    // Distance of floater colors from p*; negative means
    // floater_offset_fraction * d_avg.
    double floater_color_offset = -1.0;
    double floater_offset_fraction = 0.4;
    int n_cameras = 16;
    int width = 128;
    int height = 128;
    int sh_degree = 3;

    // Geometry and appearance of the generated world.
    double poi_radius = 0.8;
    double shell_radius = 7.0;
    double orbit_radius = 3.5;
    double orbit_height = 1.0;
    double fov_x_deg = 50.0;
    double view_dependence = 0.03;  // amplitude of non-DC SH coefficients on the object

    void validate() const {
        if (n_poi_splats < 0 || n_background_splats < 0 || n_floaters < 0 || n_cameras < 0)
            throw InvalidInput("synth: counts must be >= 0");
        if (floater_color_offset > std::sqrt(3.0)) throw InvalidInput("synth: floater offset exceeds sqrt(3)");
        if (width <= 0 || height <= 0) throw InvalidInput("synth: image size must be positive");
        if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidInput("synth: sh degree must be in [0,3]");
    }
};

template <typename T>
struct SynthView {
    CameraModel camera;
    ImageBuffer<T> image;
    SegmentationMap segmap;
};

template <typename T>
struct SynthDataset {
    SplatScene<T> scene;  // ground truth, labeled
    std::vector<SynthView<T>> views;
    std::vector<std::size_t> poi_ids;         // indices of class-1 splats in `scene`
    std::vector<std::size_t> background_ids;  // indices of class-0 splats

    std::vector<CameraModel> cameras() const {
        std::vector<CameraModel> c;
        for (const auto& v : views) c.push_back(v.camera);
        return c;
    }
    std::vector<ImageBuffer<T>> images() const {
        std::vector<ImageBuffer<T>> c;
        for (const auto& v : views) c.push_back(v.image);
        return c;
    }
    std::vector<SegmentationMap> segmaps() const {
        std::vector<SegmentationMap> c;
        for (const auto& v : views) c.push_back(v.segmap);
        return c;
    }
};

namespace detail {

inline Vec4<double> random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

inline Vec3<double> random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3<double> v;
    do v = Vec3<double>(n(rng), n(rng), n(rng));
    while (v.norm() < 1e-9);
    return v.normalized();
}

template <typename T>
Gaussian3D<T> make_splat(const Vec3<double>& pos, double scale, double anisotropy, double opacity,
                         const ColorRGB& color, int degree, double view_dependence, std::int32_t label,
                         std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Gaussian3D<T> g;
    g.position = pos.cast<T>();
    g.log_scale = Vec3<T>(T(std::log(scale)), T(std::log(scale * anisotropy)), T(std::log(scale / anisotropy)));
    g.rotation = random_rotation(rng).cast<T>();
    g.opacity_logit = T(inverse_sigmoid(opacity));
    g.sh.assign(sh_coeff_count(degree), Vec3<T>::Zero());
    g.sh[0] = Vec3<T>(T(rgb_to_sh_dc(color.r)), T(rgb_to_sh_dc(color.g)), T(rgb_to_sh_dc(color.b)));
    for (std::size_t k = 1; k < g.sh.size(); ++k)
        g.sh[k] = Vec3<T>(T(view_dependence * u(rng)), T(view_dependence * u(rng)), T(view_dependence * u(rng)));
    g.label = label;
    return g;
}

/// Per-pixel class with the largest composited weight; 0 where nothing renders.
template <typename T>
SegmentationMap render_segmentation(const SplatScene<T>& scene, const CameraModel& cam, const RasterSettings& rs) {
    std::set<std::int32_t> labels;
    for (const auto& g : scene.gaussians) labels.insert(g.label);
    SegmentationMap seg(cam.width, cam.height, 0);
    std::vector<double> best(seg.ids.size(), 1e-6);
    for (const std::int32_t label : labels) {
        SplatScene<T> weights = scene;
        for (auto& g : weights.gaussians) {
            for (auto& c : g.sh) c.setZero();
            g.sh[0] = Vec3<T>::Constant(T(rgb_to_sh_dc(g.label == label ? 1.0 : 0.0)));
        }
        const auto img = render(weights, cam, ColorRGB(0, 0, 0), rs).image;
        for (std::size_t p = 0; p < seg.ids.size(); ++p) {
            const double w = double(img[p * 3]);
            if (w > best[p]) {
                best[p] = w;
                seg.ids[p] = static_cast<std::uint32_t>(label);
            }
        }
    }
    return seg;
}

}  // namespace detail

/// Ground-truth scene, orbit views, images and segmentation maps.
template <typename T>
SynthDataset<T> generate(const SynthSpec& spec, const RasterSettings& rs = {}) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    SynthDataset<T> ds;
    ds.scene.sh_degree = spec.sh_degree;

    // Object: warm-colored splats filling a slightly squashed ball.
    const ColorRGB materials[] = {{0.80, 0.22, 0.15}, {0.92, 0.55, 0.12}, {0.85, 0.78, 0.30}, {0.55, 0.30, 0.20}};
    for (int i = 0; i < spec.n_poi_splats; ++i) {
        const Vec3<double> dir = detail::random_unit(rng);
        const double r = spec.poi_radius * std::cbrt(u01(rng));
        const Vec3<double> pos(dir[0] * r, dir[1] * r * 0.8, dir[2] * r);
        const ColorRGB& base = materials[static_cast<std::size_t>(u01(rng) * 4) % 4];
        const ColorRGB color(base.r + 0.05 * n01(rng), base.g + 0.05 * n01(rng), base.b + 0.05 * n01(rng));
        ds.poi_ids.push_back(ds.scene.size());
        ds.scene.gaussians.push_back(detail::make_splat<T>(pos, 0.06 + 0.05 * u01(rng), 0.7 + 0.6 * u01(rng),
                                                           0.6 + 0.35 * u01(rng), color, spec.sh_degree,
                                                           spec.view_dependence, kPoiClass, rng));
    }
    // Backdrop: green / gray splats on a shell around the camera orbit.
    for (int i = 0; i < spec.n_background_splats; ++i) {
        const Vec3<double> pos = detail::random_unit(rng) * spec.shell_radius * (1.0 + 0.05 * n01(rng));
        const double g = 0.25 + 0.4 * u01(rng);
        const ColorRGB color = u01(rng) < 0.6 ? ColorRGB(0.25 * g, g, 0.2 * g + 0.05 * u01(rng))
                                              : ColorRGB(0.35 * g + 0.2, 0.35 * g + 0.2, 0.3 * g + 0.2);
        ds.background_ids.push_back(ds.scene.size());
        ds.scene.gaussians.push_back(detail::make_splat<T>(pos, 0.45 + 0.35 * u01(rng), 0.8 + 0.4 * u01(rng),
                                                           0.8 + 0.15 * u01(rng), color, spec.sh_degree, 0.0,
                                                           kBackgroundClass, rng));
    }

    const double fov = spec.fov_x_deg * std::numbers::pi / 180.0;
    for (int c = 0; c < spec.n_cameras; ++c) {
        const double a = 2.0 * std::numbers::pi * c / spec.n_cameras;
        const Vec3<double> eye(spec.orbit_radius * std::cos(a), -spec.orbit_height, spec.orbit_radius * std::sin(a));
        SynthView<T> v;
        v.camera = CameraModel::look_at(eye, Vec3<double>::Zero(), Vec3<double>(0, -1, 0), spec.width, spec.height, fov);
        v.image = render(ds.scene, v.camera, ColorRGB(0, 0, 0), rs).image;
        v.segmap = detail::render_segmentation(ds.scene, v.camera, rs);
        ds.views.push_back(std::move(v));
    }
    return ds;
}

/// Color at exactly `offset` RGB distance from p*, inside the unit cube.
inline ColorRGB color_at_distance(const ColorRGB& p_star, double offset, std::mt19937_64& rng) {
    if (!(offset >= 0.0) || offset >= std::sqrt(3.0)) throw InvalidInput("floater color offset must be in [0, sqrt(3))");
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const Vec3<double> d = detail::random_unit(rng);
        const Vec3<double> c = Vec3<double>(p_star.r, p_star.g, p_star.b) + offset * d;
        if (c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0) return {c[0], c[1], c[2]};
    }
    throw InvalidInput("no color inside the unit cube at the requested distance from p*");
}

template <typename T>
struct InjectionResult {
    SplatScene<T> scene;
    std::vector<std::size_t> injected;  // indices in `scene`
};

/// Appends n constant-color splats labeled as the point of interest, scattered
/// in free space around it, each colored exactly `offset` away from p*.
template <typename T>
InjectionResult<T> inject_floaters(const SplatScene<T>& scene, const ColorRGB& p_star, int n, double offset,
                                   std::mt19937_64& rng, double inner_radius = 0.9, double outer_radius = 1.8) {
    if (!(offset >= 0.0) || offset >= std::sqrt(3.0)) throw InvalidInput("floater color offset must be in [0, sqrt(3))");
    InjectionResult<T> out{scene, {}};
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const double r = inner_radius + (outer_radius - inner_radius) * u01(rng);
        const Vec3<double> pos = detail::random_unit(rng) * r;
        const ColorRGB color = color_at_distance(p_star, offset, rng);
        auto g = detail::make_splat<T>(pos, 0.05 + 0.04 * u01(rng), 0.8 + 0.4 * u01(rng), 0.5 + 0.4 * u01(rng), color,
                                       scene.sh_degree, 0.0, kPoiClass, rng);
        out.injected.push_back(out.scene.size());
        out.scene.gaussians.push_back(std::move(g));
    }
    return out;
}

/// Coarse stand-in for an early training state: ground truth with jittered
/// geometry, colors and opacities.
template <typename T>
SplatScene<T> perturb_scene(const SplatScene<T>& gt, std::mt19937_64& rng, double position_sigma = 0.03,
                            double log_scale_sigma = 0.25, double color_sigma = 0.15, double opacity_sigma = 0.6) {
    std::normal_distribution<double> n01(0.0, 1.0);
    SplatScene<T> out = gt;
    for (auto& g : out.gaussians) {
        for (int k = 0; k < 3; ++k) {
            g.position[k] += T(position_sigma * n01(rng));
            g.log_scale[k] += T(log_scale_sigma * n01(rng));
            g.sh[0][k] += T(color_sigma / sh::kC0 * n01(rng));
        }
        g.opacity_logit += T(opacity_sigma * n01(rng));
    }
    return out;
}

//------------------------------------------------------------------------------
// Experiment

template <typename T>
struct HarnessScenario {
    SynthDataset<T> truth;
    PoiSelection selection;
    FurthestColor palette;
    SplatScene<T> coarse;                      // perturbed truth plus floaters
    std::vector<std::size_t> floater_ids;      // indices in `coarse`
    double floater_offset = 0.0;
};

/// Ground truth, p* from the point-of-interest views, and a coarse scene with
/// injected floaters.
template <typename T>
HarnessScenario<T> build_scenario(const SynthSpec& spec, const RasterSettings& rs = {}, int lattice = 16) {
    HarnessScenario<T> s;
    s.truth = generate<T>(spec, rs);
    s.selection = select_views(s.truth.segmaps(), kPoiClass);
    std::vector<ImageBuffer<T>> retained;
    for (const std::size_t v : s.selection.views) retained.push_back(s.truth.views[v].image);
    s.palette = furthest_color(collect_colors(retained, 0.5), CandidatePalette::lattice(lattice), IsolationMode::kMaxMin,
                               rs.workers);
    std::mt19937_64 rng(spec.seed ^ 0xc0ffee);
    s.coarse = perturb_scene(s.truth.scene, rng);
    s.floater_offset =
        spec.floater_color_offset >= 0.0 ? spec.floater_color_offset : spec.floater_offset_fraction * s.palette.d_avg;
    auto inj = inject_floaters(s.coarse, s.palette.p_star, spec.n_floaters, s.floater_offset, rng);
    s.coarse = std::move(inj.scene);
    s.floater_ids = std::move(inj.injected);
    return s;
}

struct ExperimentRow {
    std::string name;
    int iterations = 0;
    double wall_seconds = 0.0;
    double seconds_per_iter = 0.0;
    std::size_t splats_initial = 0;
    std::size_t splats_final = 0;
    double masked_psnr_initial = 0.0;
    double masked_ssim_initial = 0.0;
    double masked_psnr = 0.0;
    double masked_ssim = 0.0;
    std::size_t floaters_removed = 0;
    std::size_t floaters_remaining = 0;
};

struct ExperimentReport {
    SynthSpec spec;
    ColorRGB p_star;
    double d_avg = 0.0;
    double d_remove = 0.0;
    double floater_offset = 0.0;
    std::vector<ExperimentRow> rows;
};

/// Mean masked PSNR / SSIM over the retained views: renders of `scene` on
/// `background` against `reference[k]` inside the ground-truth masks.
template <typename T>
std::pair<double, double> masked_quality(const SplatScene<T>& scene, const HarnessScenario<T>& s,
                                         const std::vector<ImageBuffer<T>>& reference, const ColorRGB& background,
                                         const RasterSettings& rs) {
    double p = 0.0, q = 0.0;
    for (std::size_t k = 0; k < s.selection.views.size(); ++k) {
        const auto& cam = s.truth.views[s.selection.views[k]].camera;
        const auto img = render(scene, cam, background, rs).image;
        p += psnr(img, reference[k], &s.selection.masks[k]);
        q += ssim(img, reference[k], &s.selection.masks[k]);
    }
    const double n = static_cast<double>(s.selection.views.size());
    return {p / n, q / n};
}

/// Ground-truth references for the retained views: full-scene images, or the
/// ground-truth point-of-interest splats alone rendered over `background`.
template <typename T>
std::vector<ImageBuffer<T>> reference_images(const HarnessScenario<T>& s, bool poi_only, const ColorRGB& background,
                                             const RasterSettings& rs) {
    std::vector<ImageBuffer<T>> out;
    const auto gt_poi = poi_only ? extract_poi(s.truth.scene, kPoiClass) : SplatScene<T>{};
    for (const std::size_t v : s.selection.views) {
        const auto& view = s.truth.views[v];
        out.push_back(poi_only ? render(gt_poi, view.camera, background, rs).image : view.image);
    }
    return out;
}

/// Runs full-scene training and point-of-interest refinement from the same
/// coarse scene for the same number of iterations.
template <typename T>
ExperimentReport run_experiment(const SynthSpec& spec, const RefineConfig& cfg, bool include_full_scene = true) {
    RasterSettings rs = cfg.raster;
    rs.workers = cfg.workers;
    const auto s = build_scenario<T>(spec, rs);
    ExperimentReport rep;
    rep.spec = spec;
    rep.p_star = s.palette.p_star;
    rep.d_avg = s.palette.d_avg;
    rep.d_remove = removal_distance(s.palette.d_avg, cfg.t_r);
    rep.floater_offset = s.floater_offset;
    const int iters = cfg.refine_iters();
    const auto count_floaters = [&](const std::vector<std::ptrdiff_t>& origin, std::size_t offset_into_coarse) {
        std::set<std::size_t> ids(s.floater_ids.begin(), s.floater_ids.end());
        std::size_t remaining = 0;
        for (const auto o : origin)
            if (o >= 0 && ids.count(static_cast<std::size_t>(o) + offset_into_coarse)) ++remaining;
        return remaining;
    };

    if (include_full_scene) {
        ExperimentRow row;
        row.name = "full_scene";
        row.iterations = iters;
        row.splats_initial = s.coarse.size();
        const auto reference = reference_images(s, false, ColorRGB(0, 0, 0), rs);
        std::tie(row.masked_psnr_initial, row.masked_ssim_initial) =
            masked_quality(s.coarse, s, reference, ColorRGB(0, 0, 0), rs);
        std::vector<TrainingView<T>> views;
        for (const auto& v : s.truth.views) views.push_back({v.camera, v.image});
        RefineConfig full = cfg;
        full.init_iters = iters;
        TrainLog log;
        detail::Stopwatch sw;
        const auto trained = warmup_train(s.coarse, std::span<const TrainingView<T>>(views), full, ColorRGB(0, 0, 0), &log);
        row.wall_seconds = sw.seconds();
        row.splats_final = trained.size();
        std::tie(row.masked_psnr, row.masked_ssim) = masked_quality(trained, s, reference, ColorRGB(0, 0, 0), rs);
        // Full-scene training never removes splats unless densification prunes them.
        row.floaters_remaining = cfg.densify.enabled ? 0 : s.floater_ids.size();
        row.floaters_removed = s.floater_ids.size() - row.floaters_remaining;
        row.seconds_per_iter = iters > 0 ? row.wall_seconds / iters : 0.0;
        rep.rows.push_back(row);
    }

    {
        ExperimentRow row;
        row.name = "poi_refine";
        row.iterations = iters;
        // extract_poi keeps label order, so coarse index = poi_index_map[k].
        std::vector<std::size_t> poi_index_map;
        for (std::size_t i = 0; i < s.coarse.size(); ++i)
            if (s.coarse.gaussians[i].label == kPoiClass) poi_index_map.push_back(i);
        const auto poi = extract_poi(s.coarse, kPoiClass);
        row.splats_initial = poi.size();
        const auto reference = reference_images(s, true, s.palette.p_star, rs);
        std::tie(row.masked_psnr_initial, row.masked_ssim_initial) =
            masked_quality(poi, s, reference, s.palette.p_star, rs);
        const auto views = make_refine_views(std::span<const CameraModel>(s.truth.cameras()),
                                             std::span<const ImageBuffer<T>>(s.truth.images()), s.selection,
                                             s.palette.p_star);
        detail::Stopwatch sw;
        const auto res = refine(poi, views, s.palette, cfg);
        row.wall_seconds = sw.seconds();
        row.splats_final = res.scene.size();
        std::tie(row.masked_psnr, row.masked_ssim) = masked_quality(res.scene, s, reference, s.palette.p_star, rs);
        std::vector<std::ptrdiff_t> origin;
        for (const auto o : res.origin) origin.push_back(o >= 0 ? std::ptrdiff_t(poi_index_map[std::size_t(o)]) : -1);
        row.floaters_remaining = count_floaters(origin, 0);
        row.floaters_removed = s.floater_ids.size() - row.floaters_remaining;
        row.seconds_per_iter = iters > 0 ? row.wall_seconds / iters : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace coregs
