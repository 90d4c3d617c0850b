// SPDX-License-Identifier: Apache-2.0
#pragma once

// Color-based floater pruning. A splat whose view-dependent color lands
// within d_remove = t_r * d_avg of the background color is treated as an
// artifact and removed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coregs/core.hpp"
#include "coregs/palette.hpp"
#include "coregs/parallel.hpp"

namespace coregs {

/// How per-view decisions combine into the removal set.
enum class FlagAggregation {
    kAnyView,   // flagged if close to p* in at least one evaluated view
    kAllViews,  // flagged only if close in every evaluated view
};

struct FilterConfig {
    double t_r = 0.5;
    int period = 1000;
    int view_stride = 1;  // evaluate every k-th view; 1 = all views
    FlagAggregation aggregation = FlagAggregation::kAnyView;
    unsigned workers = 1;

    void validate() const {
        if (!(t_r > 0.0)) throw InvalidInput("filter: t_r must be positive");
        if (period < 1) throw InvalidInput("filter: period must be >= 1");
        if (view_stride < 1) throw InvalidInput("filter: view stride must be >= 1");
    }
};

struct RemovalReport {
    std::vector<std::size_t> flagged;          // ascending splat indices
    std::vector<std::size_t> views;            // evaluated view indices
    std::vector<std::size_t> per_view_counts;  // splats close to p* in each evaluated view
    double d_remove = 0.0;
};

inline double removal_distance(double d_avg, double t_r) {
    if (!(d_avg >= 0.0)) throw InvalidInput("removal_distance: d_avg must be >= 0");
    if (!(t_r > 0.0)) throw InvalidInput("removal_distance: t_r must be positive");
    return t_r * d_avg;
}

/// Color of a splat as seen from `cam`: SH evaluated along the direction from
/// the camera center to the splat center, clamped to [0,1].
template <typename T>
ColorRGB view_color(const Gaussian3D<T>& g, int sh_degree, const CameraModel& cam) {
    const Vec3<double> dir = g.position.template cast<double>() - cam.center();
    std::vector<Vec3<double>> coeffs;
    coeffs.reserve(g.sh.size());
    for (const auto& c : g.sh) coeffs.push_back(c.template cast<double>());
    return sh_eval(coeffs, sh_degree, dir.norm() > 0.0 ? dir : Vec3<double>(0, 0, 1));
}

template <typename T>
RemovalReport flag_artifacts(const SplatScene<T>& scene, std::span<const CameraModel> cams, const ColorRGB& p_star,
                             double d_remove, const FilterConfig& cfg = {}) {
    cfg.validate();
    if (cams.empty()) throw InvalidInput("flag_artifacts: no cameras");
    RemovalReport report;
    report.d_remove = d_remove;
    for (std::size_t v = 0; v < cams.size(); v += static_cast<std::size_t>(cfg.view_stride)) report.views.push_back(v);

    const std::size_t n = scene.size();
    std::vector<std::vector<std::uint8_t>> close(report.views.size());
    parallel_for(report.views.size(), cfg.workers, [&](std::size_t k) {
        const auto& cam = cams[report.views[k]];
        auto& bits = close[k];
        bits.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i)
            bits[i] = rgb_distance(view_color(scene.gaussians[i], scene.sh_degree, cam), p_star) < d_remove;
    });

    std::vector<std::uint8_t> flagged(n, cfg.aggregation == FlagAggregation::kAllViews ? 1 : 0);
    for (const auto& bits : close) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            count += bits[i];
            if (cfg.aggregation == FlagAggregation::kAnyView) flagged[i] |= bits[i];
            else flagged[i] &= bits[i];
        }
        report.per_view_counts.push_back(count);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (flagged[i]) report.flagged.push_back(i);
    return report;
}

template <typename T>
RemovalReport flag_artifacts(const SplatScene<T>& scene, const std::vector<CameraModel>& cams, const ColorRGB& p_star,
                             double d_remove, const FilterConfig& cfg = {}) {
    return flag_artifacts(scene, std::span<const CameraModel>(cams), p_star, d_remove, cfg);
}

/// Indices of the splats that survive removal of `flagged`, in order.
inline std::vector<std::size_t> survivors(std::size_t n, const std::vector<std::size_t>& flagged) {
    std::vector<std::uint8_t> drop(n, 0);
    for (const std::size_t i : flagged) {
        if (i >= n) throw InvalidInput("prune: index " + std::to_string(i) + " out of range");
        drop[i] = 1;
    }
    std::vector<std::size_t> keep;
    keep.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) keep.push_back(i);
    return keep;
}

template <typename T>
SplatScene<T> prune(const SplatScene<T>& scene, const RemovalReport& report) {
    SplatScene<T> out = scene.empty_like();
    for (const std::size_t i : survivors(scene.size(), report.flagged)) out.gaussians.push_back(scene.gaussians[i]);
    return out;
}

}  // namespace coregs
