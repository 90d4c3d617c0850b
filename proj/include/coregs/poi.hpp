// SPDX-License-Identifier: Apache-2.0
#pragma once

// Point-of-interest selection: per-view binary masks, view retention, splat
// extraction, and compositing of refinement targets over the background color.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coregs/core.hpp"

namespace coregs {

/// Per-pixel class / instance ids.
struct SegmentationMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> ids;

    SegmentationMap() = default;
    SegmentationMap(int w, int h, std::uint32_t fill = 0)
        : width(w), height(h), ids(static_cast<std::size_t>(w) * h, fill) {}

    std::uint32_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
    std::uint32_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * width + x]; }
};

struct PoiSelection {
    std::int64_t class_id = 0;
    double min_mask_fraction = 0.001;
    std::vector<std::size_t> views;     // retained view indices, ascending
    std::vector<MaskBuffer> masks;      // one per retained view
    std::vector<double> fractions;      // mask fraction of every input view

    bool empty() const { return views.empty(); }
};

inline MaskBuffer make_mask(const SegmentationMap& seg, std::int64_t class_id) {
    MaskBuffer m(seg.width, seg.height);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) m.set(i, static_cast<std::int64_t>(seg.ids[i]) == class_id);
    return m;
}

/// Keeps the views whose mask contains the class and covers at least
/// `min_mask_fraction` of the frame.
inline PoiSelection select_views(std::span<const SegmentationMap> segmaps, std::int64_t class_id,
                                 double min_mask_fraction = 0.001) {
    if (segmaps.empty()) throw InvalidInput("select_views: no views");
    if (!(min_mask_fraction >= 0.0 && min_mask_fraction < 1.0))
        throw InvalidInput("select_views: min_mask_fraction must be in [0,1)");
    PoiSelection sel;
    sel.class_id = class_id;
    sel.min_mask_fraction = min_mask_fraction;
    for (std::size_t v = 0; v < segmaps.size(); ++v) {
        auto mask = make_mask(segmaps[v], class_id);
        const double frac = mask.fraction();
        sel.fractions.push_back(frac);
        if (mask.count() > 0 && frac >= min_mask_fraction) {
            sel.views.push_back(v);
            sel.masks.push_back(std::move(mask));
        }
    }
    if (sel.views.empty()) throw PoiNotFound(class_id, "in any view");
    return sel;
}

inline PoiSelection select_views(const std::vector<SegmentationMap>& segmaps, std::int64_t class_id,
                                 double min_mask_fraction = 0.001) {
    return select_views(std::span<const SegmentationMap>(segmaps), class_id, min_mask_fraction);
}

/// Splats labeled `class_id`, original order preserved.
template <typename T>
SplatScene<T> extract_poi(const SplatScene<T>& scene, std::int64_t class_id) {
    SplatScene<T> out = scene.empty_like();
    for (const auto& g : scene.gaussians)
        if (g.label == class_id) out.gaussians.push_back(g);
    if (out.empty()) throw PoiNotFound(class_id, "among the scene's splats");
    return out;
}

/// Splats not labeled `class_id`.
template <typename T>
SplatScene<T> extract_complement(const SplatScene<T>& scene, std::int64_t class_id) {
    SplatScene<T> out = scene.empty_like();
    for (const auto& g : scene.gaussians)
        if (g.label != class_id) out.gaussians.push_back(g);
    return out;
}

/// True when the splat center projects inside the mask.
template <typename T>
bool center_in_mask(const Gaussian3D<T>& g, const CameraModel& cam, const MaskBuffer& mask, double near_plane = 0.01) {
    const Vec3<double> c = cam.to_camera(g.position.template cast<double>());
    if (!(c[2] > near_plane)) return false;
    const double u = cam.fx * c[0] / c[2] + cam.cx, v = cam.fy * c[1] / c[2] + cam.cy;
    const long x = std::lround(u), y = std::lround(v);
    if (x < 0 || y < 0 || x >= mask.width() || y >= mask.height()) return false;
    return mask.at(static_cast<int>(x), static_cast<int>(y));
}

/// Geometric fallback for unlabeled scenes: keep splats whose center falls
/// inside the mask in a strict majority of the retained views.
template <typename T>
SplatScene<T> extract_poi_by_projection(const SplatScene<T>& scene, std::span<const CameraModel> retained_cams,
                                        const PoiSelection& sel) {
    if (retained_cams.size() != sel.masks.size())
        throw InvalidInput("extract_poi_by_projection: camera / mask count mismatch");
    SplatScene<T> out = scene.empty_like();
    for (const auto& g : scene.gaussians) {
        std::size_t inside = 0;
        for (std::size_t v = 0; v < retained_cams.size(); ++v)
            if (center_in_mask(g, retained_cams[v], sel.masks[v])) ++inside;
        if (2 * inside > retained_cams.size()) out.gaussians.push_back(g);
    }
    if (out.empty()) throw PoiNotFound(sel.class_id, "by projected majority");
    return out;
}

/// out = image * M + p_star * (1 - M).
template <typename T>
ImageBuffer<T> composite_target(const ImageBuffer<T>& image, const MaskBuffer& mask, const ColorRGB& p_star) {
    if (image.width() != mask.width() || image.height() != mask.height())
        throw InvalidInput("composite_target: mask dimensions differ from image");
    ImageBuffer<T> out = image;
    for (std::size_t p = 0; p < image.pixel_count(); ++p)
        if (!mask[p]) out.set(p, p_star);
    return out;
}

}  // namespace coregs
