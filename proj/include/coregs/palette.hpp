// SPDX-License-Identifier: Apache-2.0
#pragma once

// Background color selection: gather the 8-bit colors present in the
// (downscaled) training images and pick the lattice color whose nearest
// image color is as far away as possible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "coregs/core.hpp"
#include "coregs/kdtree.hpp"
#include "coregs/parallel.hpp"

namespace coregs {

/// Deduplicated image colors, sorted by their packed 8-bit key.
struct ColorSet {
    std::vector<ColorRGB> colors;

    std::size_t size() const { return colors.size(); }
    bool empty() const { return colors.empty(); }
};

/// Uniform n x n x n lattice over [0,1]^3, endpoints included, ordered
/// lexicographically by (r, g, b).
struct CandidatePalette {
    int resolution = 16;
    std::vector<ColorRGB> candidates;

    static CandidatePalette lattice(int n) {
        if (n < 2) throw InvalidInput("palette lattice needs at least 2 samples per axis");
        CandidatePalette p;
        p.resolution = n;
        p.candidates.reserve(static_cast<std::size_t>(n) * n * n);
        const double step = 1.0 / (n - 1);
        for (int r = 0; r < n; ++r)
            for (int g = 0; g < n; ++g)
                for (int b = 0; b < n; ++b) p.candidates.emplace_back(r * step, g * step, b * step);
        return p;
    }
};

struct FurthestColor {
    ColorRGB p_star;
    double d_avg = 0.0;
};

/// How the isolation distance d_avg is derived from the candidate scores.
enum class IsolationMode {
    kMaxMin,   // min-distance achieved by the winning candidate
    kMeanMin,  // mean over all candidates of their min-distance
};

inline double rgb_distance(const ColorRGB& a, const ColorRGB& b) {
    const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

inline std::uint8_t quantize8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Area-averaging resample to floor(w*f) x floor(h*f) (at least 1x1).
template <typename T>
ImageBuffer<T> downscale_area(const ImageBuffer<T>& img, double factor) {
    if (!(factor > 0.0 && factor <= 1.0)) throw InvalidInput("downscale factor must be in (0,1]");
    if (factor == 1.0) return img;
    const int w = img.width(), h = img.height();
    const int ow = std::max(1, static_cast<int>(std::floor(w * factor)));
    const int oh = std::max(1, static_cast<int>(std::floor(h * factor)));
    const double sx = double(w) / ow, sy = double(h) / oh;
    ImageBuffer<T> out(ow, oh);
    for (int oy = 0; oy < oh; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < ow; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc[3] = {0, 0, 0}, area = 0.0;
            for (int y = static_cast<int>(std::floor(y0)); y < std::min(h, static_cast<int>(std::ceil(y1))); ++y) {
                const double wy = std::min(y1, y + 1.0) - std::max(y0, double(y));
                if (wy <= 0.0) continue;
                for (int x = static_cast<int>(std::floor(x0)); x < std::min(w, static_cast<int>(std::ceil(x1))); ++x) {
                    const double wx = std::min(x1, x + 1.0) - std::max(x0, double(x));
                    if (wx <= 0.0) continue;
                    const double a = wx * wy;
                    for (int c = 0; c < 3; ++c) acc[c] += a * double(img.at(x, y, c));
                    area += a;
                }
            }
            for (int c = 0; c < 3; ++c) out.at(ox, oy, c) = T(acc[c] / area);
        }
    }
    return out;
}

/// Union of the 8-bit colors of every image after area downscaling.
template <typename T>
ColorSet collect_colors(std::span<const ImageBuffer<T>> images, double downscale = 0.5) {
    if (images.empty()) throw InvalidInput("collect_colors: no images");
    std::vector<std::uint8_t> seen(1u << 24, 0);
    for (const auto& img : images) {
        const auto small = downscale_area(img, downscale);
        for (std::size_t p = 0; p < small.pixel_count(); ++p) {
            const std::uint32_t key = (std::uint32_t(quantize8(double(small[p * 3]))) << 16) |
                                      (std::uint32_t(quantize8(double(small[p * 3 + 1]))) << 8) |
                                      std::uint32_t(quantize8(double(small[p * 3 + 2])));
            seen[key] = 1;
        }
    }
    ColorSet set;
    for (std::uint32_t key = 0; key < seen.size(); ++key)
        if (seen[key])
            set.colors.emplace_back(((key >> 16) & 0xff) / 255.0, ((key >> 8) & 0xff) / 255.0, (key & 0xff) / 255.0);
    return set;
}

template <typename T>
ColorSet collect_colors(const std::vector<ImageBuffer<T>>& images, double downscale = 0.5) {
    return collect_colors(std::span<const ImageBuffer<T>>(images), downscale);
}

/// Candidate maximizing the distance to its nearest image color. Ties go to
/// the lexicographically smallest (r, g, b).
inline FurthestColor furthest_color(const ColorSet& colors, const CandidatePalette& palette,
                                    IsolationMode mode = IsolationMode::kMaxMin, unsigned workers = 1) {
    if (colors.empty()) throw InvalidInput("furthest_color: empty color set");
    if (palette.candidates.empty()) throw InvalidInput("furthest_color: empty candidate palette");

    std::vector<KdTree3::Point> pts;
    pts.reserve(colors.size());
    for (const auto& c : colors.colors) pts.push_back({c.r, c.g, c.b});
    const KdTree3 tree(std::move(pts));

    std::vector<double> score(palette.candidates.size());
    parallel_for(score.size(), workers, [&](std::size_t j) {
        const auto& p = palette.candidates[j];
        score[j] = std::sqrt(tree.nearest({p.r, p.g, p.b}).squared_distance);
    });

    std::size_t best = 0;
    for (std::size_t j = 1; j < score.size(); ++j) {
        const auto& a = palette.candidates[j];
        const auto& b = palette.candidates[best];
        const bool lex_smaller = std::tie(a.r, a.g, a.b) < std::tie(b.r, b.g, b.b);
        if (score[j] > score[best] || (score[j] == score[best] && lex_smaller)) best = j;
    }

    FurthestColor out;
    out.p_star = palette.candidates[best];
    if (mode == IsolationMode::kMaxMin) {
        out.d_avg = score[best];
    } else {
        double sum = 0.0;
        for (double s : score) sum += s;
        out.d_avg = sum / static_cast<double>(score.size());
    }
    return out;
}

}  // namespace coregs
