// SPDX-License-Identifier: Apache-2.0
#pragma once

// PSNR and SSIM, optionally restricted to a binary object mask.

#include <cmath>
#include <cstddef>
#include <optional>

#include "coregs/core.hpp"
#include "coregs/ssim.hpp"

namespace coregs {

/// PSNR reported for identical images (zero MSE).
constexpr double kPsnrCap = 100.0;

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> masked_psnr;
    std::optional<double> masked_ssim;
    std::size_t pixels = 0;
    std::size_t masked_pixels = 0;
};

namespace detail {

template <typename T>
void check_pair(const ImageBuffer<T>& a, const ImageBuffer<T>& b, const MaskBuffer* mask) {
    if (!a.same_shape(b)) throw InvalidInput("metrics: image dimensions differ");
    if (mask) {
        if (mask->width() != a.width() || mask->height() != a.height())
            throw InvalidInput("metrics: mask dimensions differ from images");
        if (mask->count() == 0) throw InvalidInput("metrics: mask selects no pixels");
    }
}

}  // namespace detail

/// 10 log10(1 / MSE) over all pixels, or over mask-1 pixels when a mask is given.
template <typename T>
double psnr(const ImageBuffer<T>& a, const ImageBuffer<T>& b, const MaskBuffer* mask = nullptr) {
    detail::check_pair(a, b, mask);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && !(*mask)[p]) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = double(a[p * 3 + c]) - double(b[p * 3 + c]);
            sum += d * d;
        }
        n += 3;
    }
    const double mse = sum / static_cast<double>(n);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Mean of the SSIM map; with a mask, mean over pixels whose window center is 1.
template <typename T>
double ssim(const ImageBuffer<T>& a, const ImageBuffer<T>& b, const MaskBuffer* mask = nullptr) {
    detail::check_pair(a, b, mask);
    if (std::min(a.width(), a.height()) < ssim_kernel::kWindow)
        throw InvalidInput("ssim: image smaller than the 11x11 window");
    const auto map = ssim_kernel::ssim_map(a, b);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && !(*mask)[p]) continue;
        for (int c = 0; c < 3; ++c) sum += map[p * 3 + c];
        n += 3;
    }
    return sum / static_cast<double>(n);
}

template <typename T>
MetricReport evaluate(const ImageBuffer<T>& a, const ImageBuffer<T>& b, const MaskBuffer* mask = nullptr) {
    MetricReport r;
    r.psnr = psnr(a, b);
    r.ssim = ssim(a, b);
    r.pixels = a.pixel_count();
    if (mask) {
        r.masked_psnr = psnr(a, b, mask);
        r.masked_ssim = ssim(a, b, mask);
        r.masked_pixels = mask->count();
    }
    return r;
}

}  // namespace coregs
