// SPDX-License-Identifier: Apache-2.0
#pragma once

// Structural similarity with an 11x11 Gaussian window (sigma 1.5), zero
// padded so the map has the image's size. Shared by the training loss and
// the evaluation metrics. All arithmetic is in double.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "coregs/core.hpp"

namespace coregs::ssim_kernel {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

inline const std::array<double, kWindow>& gaussian_window() {
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> g{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kRadius;
            g[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
            sum += g[i];
        }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return w;
}

/// Zero-padded separable Gaussian filter of a single-channel plane.
inline std::vector<double> blur(const std::vector<double>& in, int w, int h) {
    const auto& g = gaussian_window();
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w) s += g[k + kRadius] * in[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h) s += g[k + kRadius] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    return out;
}

/// Local statistics of one channel pair.
struct ChannelStats {
    std::vector<double> mu_x, mu_y, sxx, syy, sxy, map;
};

inline ChannelStats channel_stats(const std::vector<double>& x, const std::vector<double>& y, int w, int h) {
    const std::size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    ChannelStats s;
    s.mu_x = blur(x, w, h);
    s.mu_y = blur(y, w, h);
    s.sxx = blur(xx, w, h);
    s.syy = blur(yy, w, h);
    s.sxy = blur(xy, w, h);
    s.map.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mx = s.mu_x[i], my = s.mu_y[i];
        s.sxx[i] -= mx * mx;
        s.syy[i] -= my * my;
        s.sxy[i] -= mx * my;
        const double a1 = 2.0 * mx * my + kC1, a2 = 2.0 * s.sxy[i] + kC2;
        const double b1 = mx * mx + my * my + kC1, b2 = s.sxx[i] + s.syy[i] + kC2;
        s.map[i] = (a1 * a2) / (b1 * b2);
    }
    return s;
}

template <typename T>
std::vector<double> channel_plane(const ImageBuffer<T>& img, int c) {
    std::vector<double> p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(img[i * 3 + c]);
    return p;
}

/// Per-pixel, per-channel SSIM map laid out like the image (interleaved).
template <typename T>
std::vector<double> ssim_map(const ImageBuffer<T>& a, const ImageBuffer<T>& b) {
    if (!a.same_shape(b)) throw InvalidInput("ssim: image dimensions differ");
    std::vector<double> out(a.pixel_count() * 3);
    for (int c = 0; c < 3; ++c) {
        const auto s = channel_stats(channel_plane(a, c), channel_plane(b, c), a.width(), a.height());
        for (std::size_t i = 0; i < s.map.size(); ++i) out[i * 3 + c] = s.map[i];
    }
    return out;
}

/// Mean SSIM over all pixels and channels together with d(mean)/d(x).
template <typename T>
double mean_ssim_with_grad(const ImageBuffer<T>& x, const ImageBuffer<T>& y, std::vector<double>& grad_x) {
    if (!x.same_shape(y)) throw InvalidInput("ssim: image dimensions differ");
    const int w = x.width(), h = x.height();
    const std::size_t n = x.pixel_count();
    const double inv_count = 1.0 / static_cast<double>(n * 3);
    grad_x.assign(n * 3, 0.0);
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto xp = channel_plane(x, c);
        const auto yp = channel_plane(y, c);
        const auto s = channel_stats(xp, yp, w, h);
        std::vector<double> ga(n), gb(n), gc(n);
        for (std::size_t i = 0; i < n; ++i) {
            total += s.map[i];
            const double mx = s.mu_x[i], my = s.mu_y[i];
            const double a1 = 2.0 * mx * my + kC1, a2 = 2.0 * s.sxy[i] + kC2;
            const double b1 = mx * mx + my * my + kC1, b2 = s.sxx[i] + s.syy[i] + kC2;
            const double d_mu = (2.0 * my * a2) / (b1 * b2) - s.map[i] * (2.0 * mx) / b1;
            const double d_sxx = -s.map[i] / b2;
            const double d_sxy = 2.0 * a1 / (b1 * b2);
            // sxx = E[x^2] - mu_x^2, sxy = E[xy] - mu_x mu_y
            ga[i] = inv_count * (d_mu - 2.0 * mx * d_sxx - my * d_sxy);
            gb[i] = inv_count * d_sxx;
            gc[i] = inv_count * d_sxy;
        }
        // The zero-padded symmetric filter is self-adjoint.
        const auto ba = blur(ga, w, h), bb = blur(gb, w, h), bc = blur(gc, w, h);
        for (std::size_t i = 0; i < n; ++i) grad_x[i * 3 + c] = ba[i] + 2.0 * xp[i] * bb[i] + yp[i] * bc[i];
    }
    return total * inv_count;
}

}  // namespace coregs::ssim_kernel
