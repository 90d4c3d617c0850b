// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic CPU splat rasterizer: EWA projection, global front-to-back
// depth order, alpha compositing over a background color, and the analytic
// gradient of the photometric loss with respect to every splat parameter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "coregs/core.hpp"
#include "coregs/parallel.hpp"
#include "coregs/ssim.hpp"

namespace coregs {

struct RasterSettings {
    double near_plane = 0.01;
    double dilation = 0.3;         // px^2 added to the screen covariance diagonal
    double alpha_max = 0.99;
    double alpha_min = 1.0 / 255.0;
    unsigned workers = 1;
};

template <typename T>
struct Splat2D {
    Vec2<T> mean2d;
    Mat2<T> cov2d;
    T depth{};
    ColorRGB color;
    T alpha_base{};
};

template <typename T>
struct RenderOutput {
    ImageBuffer<T> image;
    std::vector<std::uint8_t> contributed;  // per splat: touched at least one pixel
    std::size_t culled = 0;
    std::size_t singular = 0;                // skipped by the covariance condition check
};

namespace detail {

inline int sh_degree_of(std::size_t coeffs) {
    for (int d = 0; d <= kMaxShDegree; ++d)
        if (sh_coeff_count(d) == coeffs) return d;
    throw InvalidInput("sh coefficient count is not a square in [1,16]");
}

/// Everything the forward pass derives from one splat for one camera.
template <typename T>
struct Projection {
    bool visible = false;
    bool singular = false;
    Vec3<T> cam_pos;      // camera-space center
    Mat3<T> rot;          // splat rotation from the normalized quaternion
    Vec3<T> scale;
    Mat3<T> sigma;        // world covariance
    Eigen::Matrix<T, 2, 3> jw;  // J * W
    Mat2<T> cov2d;
    T conic_xx{}, conic_xy{}, conic_yy{};
    Vec2<T> mean2d;
    Vec3<T> view_dir;     // unit, camera center -> splat
    T view_dist{};
    T jx{}, jy{};                    // tx/tz, ty/tz as used in J (clamped to the guard band)
    bool clamp_x = false, clamp_y = false;
    Vec3<T> raw_color;    // before clamping
    Vec3<T> color;
    T opacity{};
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds of possible contribution
};

template <typename T>
Projection<T> project_full(const SplatParams<T>& g, int degree, const CameraModel& cam, const RasterSettings& rs) {
    Projection<T> p;
    const Mat3<T> w = cam.rotation.cast<T>();
    p.cam_pos = w * g.position + cam.translation.cast<T>();
    if (!(p.cam_pos[2] > T(rs.near_plane))) return p;

    const T fx = T(cam.fx), fy = T(cam.fy);
    const T tx = p.cam_pos[0], ty = p.cam_pos[1], tz = p.cam_pos[2];
    p.mean2d = Vec2<T>(fx * tx / tz + T(cam.cx), fy * ty / tz + T(cam.cy));

    p.rot = quat_to_rotation(g.rotation);
    p.scale = g.scale();
    const Mat3<T> m = p.rot * p.scale.asDiagonal();
    p.sigma = m * m.transpose();

    Eigen::Matrix<T, 2, 3> j;
    // Off-screen splats use a Jacobian clamped to 1.3x the field of view.
    const T lim_x = T(1.3 * 0.5 * cam.width / cam.fx), lim_y = T(1.3 * 0.5 * cam.height / cam.fy);
    p.jx = tx / tz;
    p.jy = ty / tz;
    p.clamp_x = p.jx < -lim_x || p.jx > lim_x;
    p.clamp_y = p.jy < -lim_y || p.jy > lim_y;
    p.jx = std::clamp(p.jx, -lim_x, lim_x);
    p.jy = std::clamp(p.jy, -lim_y, lim_y);
    j << fx / tz, T(0), -fx * p.jx / tz, T(0), fy / tz, -fy * p.jy / tz;
    p.jw = j * w;
    p.cov2d = p.jw * p.sigma * p.jw.transpose();
    p.cov2d(0, 0) += T(rs.dilation);
    p.cov2d(1, 1) += T(rs.dilation);
    const T det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(1, 0);
    if (!std::isfinite(det) || !(det > T(1e-12))) {
        p.singular = true;
        return p;
    }
    p.conic_xx = p.cov2d(1, 1) / det;
    p.conic_xy = -p.cov2d(0, 1) / det;
    p.conic_yy = p.cov2d(0, 0) / det;

    const Vec3<T> offset = g.position - cam.center().cast<T>();
    p.view_dist = offset.norm();
    p.view_dir = p.view_dist > T(0) ? Vec3<T>(offset / p.view_dist) : Vec3<T>(0, 0, 1);
    p.raw_color = sh_eval_raw(g.sh, degree, p.view_dir);
    p.color = p.raw_color.cwiseMax(T(0)).cwiseMin(T(1));
    p.opacity = g.opacity();

    // Pixels outside the ellipse alpha_base * exp(-q/2) >= alpha_min never
    // contribute; its bounding box (plus one pixel of slack) bounds the work.
    const double ratio = double(p.opacity) / rs.alpha_min;
    if (!(ratio >= 1.0)) return p;
    const double q = 2.0 * std::log(ratio);
    const double ex = std::sqrt(q * double(p.cov2d(0, 0))) + 1.0;
    const double ey = std::sqrt(q * double(p.cov2d(1, 1))) + 1.0;
    const double u = double(p.mean2d[0]), v = double(p.mean2d[1]);
    p.x0 = static_cast<int>(std::max(0.0, std::ceil(u - ex)));
    p.x1 = static_cast<int>(std::min(double(cam.width - 1), std::floor(u + ex)));
    p.y0 = static_cast<int>(std::max(0.0, std::ceil(v - ey)));
    p.y1 = static_cast<int>(std::min(double(cam.height - 1), std::floor(v + ey)));
    p.visible = p.x0 <= p.x1 && p.y0 <= p.y1;
    return p;
}

constexpr int kTile = 16;

/// Projected scene, global depth order, and per-tile front-to-back lists.
template <typename T>
struct Frame {
    int width = 0, height = 0, tiles_x = 0, tiles_y = 0;
    std::vector<Projection<T>> proj;
    std::vector<std::vector<std::uint32_t>> tile_lists;
    std::size_t culled = 0, singular = 0;
};

template <typename T>
Frame<T> prepare_frame(const SplatScene<T>& scene, const CameraModel& cam, const RasterSettings& rs) {
    cam.validate();
    Frame<T> f;
    f.width = cam.width;
    f.height = cam.height;
    f.tiles_x = (cam.width + kTile - 1) / kTile;
    f.tiles_y = (cam.height + kTile - 1) / kTile;
    const int degree = scene.sh_degree;
    const std::size_t n = scene.size();
    f.proj.resize(n);
    parallel_for(n, rs.workers, [&](std::size_t i) { f.proj[i] = project_full(scene.gaussians[i], degree, cam, rs); });

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (f.proj[i].singular) ++f.singular;
        else if (!(f.proj[i].cam_pos[2] > T(rs.near_plane))) ++f.culled;
        if (f.proj[i].visible) order.push_back(static_cast<std::uint32_t>(i));
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return f.proj[a].cam_pos[2] < f.proj[b].cam_pos[2]; });

    f.tile_lists.assign(static_cast<std::size_t>(f.tiles_x) * f.tiles_y, {});
    for (const std::uint32_t i : order) {
        const auto& p = f.proj[i];
        for (int ty = p.y0 / kTile; ty <= p.y1 / kTile; ++ty)
            for (int tx = p.x0 / kTile; tx <= p.x1 / kTile; ++tx)
                f.tile_lists[static_cast<std::size_t>(ty) * f.tiles_x + tx].push_back(i);
    }
    return f;
}

/// Screen-space gradient accumulator of one splat.
template <typename T>
struct ScreenGrad {
    T mean[2]{};
    T conic[3]{};   // d/d conic_xx, conic_xy (scalar, used twice), conic_yy
    T color[3]{};
    T opacity{};    // d/d activated opacity

    void add(const ScreenGrad& o) {
        for (int k = 0; k < 2; ++k) mean[k] += o.mean[k];
        for (int k = 0; k < 3; ++k) conic[k] += o.conic[k];
        for (int k = 0; k < 3; ++k) color[k] += o.color[k];
        opacity += o.opacity;
    }
};

struct Hit {
    std::uint32_t splat;
    double alpha, gauss, transmittance, dx, dy;
    bool clamped;
};

}  // namespace detail

/// EWA projection of a single splat; nullopt when it lies behind the near plane.
template <typename T>
std::optional<Splat2D<T>> project(const Gaussian3D<T>& g, const CameraModel& cam, double near_plane,
                                  double dilation = 0.3) {
    RasterSettings rs;
    rs.near_plane = near_plane;
    rs.dilation = dilation;
    const auto p = detail::project_full<T>(g, detail::sh_degree_of(g.sh.size()), cam, rs);
    if (!(p.cam_pos[2] > T(near_plane))) return std::nullopt;
    Splat2D<T> s;
    s.mean2d = p.mean2d;
    s.cov2d = p.cov2d;
    s.depth = p.cam_pos[2];
    s.color = ColorRGB(double(p.color[0]), double(p.color[1]), double(p.color[2]));
    s.alpha_base = g.opacity();
    return s;
}

namespace detail {

template <typename T>
RenderOutput<T> render_frame(const Frame<T>& frame, std::size_t n, const CameraModel& cam, const ColorRGB& background,
                             const RasterSettings& rs) {
    RenderOutput<T> out;
    out.image = ImageBuffer<T>(cam.width, cam.height);
    out.culled = frame.culled;
    out.singular = frame.singular;
    std::vector<std::vector<std::uint8_t>> band_flags(frame.tiles_y, std::vector<std::uint8_t>(n, 0));
    const T bg[3] = {T(background.r), T(background.g), T(background.b)};
    const T amax = T(rs.alpha_max), amin = T(rs.alpha_min);

    parallel_for(static_cast<std::size_t>(frame.tiles_y), rs.workers, [&](std::size_t ty) {
        auto& flags = band_flags[ty];
        for (int tx = 0; tx < frame.tiles_x; ++tx) {
            const auto& list = frame.tile_lists[ty * frame.tiles_x + tx];
            const int px0 = tx * detail::kTile, py0 = static_cast<int>(ty) * detail::kTile;
            const int px1 = std::min(px0 + detail::kTile, cam.width), py1 = std::min(py0 + detail::kTile, cam.height);
            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    T trans = T(1);
                    T c[3] = {T(0), T(0), T(0)};
                    for (const std::uint32_t i : list) {
                        const auto& p = frame.proj[i];
                        if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
                        const T dx = T(x) - p.mean2d[0], dy = T(y) - p.mean2d[1];
                        const T power = T(-0.5) * (p.conic_xx * dx * dx + p.conic_yy * dy * dy) - p.conic_xy * dx * dy;
                        if (power > T(0)) continue;
                        const T alpha = std::min(amax, p.opacity * std::exp(power));
                        if (alpha < amin) continue;
                        for (int k = 0; k < 3; ++k) c[k] += p.color[k] * alpha * trans;
                        trans *= (T(1) - alpha);
                        flags[i] = 1;
                    }
                    for (int k = 0; k < 3; ++k) out.image.at(x, y, k) = c[k] + trans * bg[k];
                }
            }
        }
    });
    out.contributed.assign(n, 0);
    for (const auto& f : band_flags)
        for (std::size_t i = 0; i < f.size(); ++i) out.contributed[i] |= f[i];
    return out;
}

}  // namespace detail

template <typename T>
RenderOutput<T> render(const SplatScene<T>& scene, const CameraModel& cam, const ColorRGB& background,
                       const RasterSettings& rs = {}) {
    return detail::render_frame(detail::prepare_frame(scene, cam, rs), scene.size(), cam, background, rs);
}

//------------------------------------------------------------------------------
// Loss

template <typename T>
struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 1.0;
    std::vector<double> grad;  // dL/d(rendered), interleaved like the image
};

/// L = (1 - lambda) * L1 + lambda * (1 - SSIM), with its per-pixel gradient.
template <typename T>
LossResult<T> loss(const ImageBuffer<T>& rendered, const ImageBuffer<T>& target, double lambda) {
    if (!rendered.same_shape(target)) throw InvalidInput("loss: image dimensions differ");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("loss: lambda must be in [0,1]");
    LossResult<T> r;
    const std::size_t n = rendered.data().size();
    const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    r.grad.assign(n, 0.0);
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(rendered[i]) - double(target[i]);
        l1 += std::abs(d);
        r.grad[i] = (1.0 - lambda) * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
    r.l1 = l1 * inv;
    r.value = (1.0 - lambda) * r.l1;
    if (lambda > 0.0) {
        std::vector<double> g;
        r.ssim = ssim_kernel::mean_ssim_with_grad(rendered, target, g);
        r.value += lambda * (1.0 - r.ssim);
        for (std::size_t i = 0; i < n; ++i) r.grad[i] -= lambda * g[i];
    }
    return r;
}

//------------------------------------------------------------------------------
// Backward

template <typename T>
struct BackwardResult {
    double loss = 0.0;
    ImageBuffer<T> image;
    std::vector<SplatParams<T>> grads;      // same layout as the splat parameters
    std::vector<std::uint8_t> contributed;
    std::vector<T> mean2d_grad_norm;        // |dL/d mean2d| per splat, for densification
};

/// Renders, evaluates the loss against `target`, and returns the gradient of
/// the loss with respect to every splat parameter. Splats that touch no pixel
/// get an exactly zero gradient.
template <typename T>
BackwardResult<T> backward(const SplatScene<T>& scene, const CameraModel& cam, const ImageBuffer<T>& target,
                           const ColorRGB& background, double lambda, const RasterSettings& rs = {}) {
    if (target.width() != cam.width || target.height() != cam.height)
        throw InvalidInput("backward: target dimensions differ from camera");
    const auto frame = detail::prepare_frame(scene, cam, rs);
    const std::size_t n = scene.size();

    BackwardResult<T> res;
    {
        auto fwd = detail::render_frame(frame, n, cam, background, rs);
        res.image = std::move(fwd.image);
        res.contributed = std::move(fwd.contributed);
    }
    const auto lr = loss(res.image, target, lambda);
    res.loss = lr.value;

    // Per tile-row accumulators, reduced in row order so the sum does not
    // depend on the worker count.
    std::vector<std::vector<detail::ScreenGrad<T>>> band(frame.tiles_y);
    const double bg[3] = {background.r, background.g, background.b};
    parallel_for(static_cast<std::size_t>(frame.tiles_y), rs.workers, [&](std::size_t ty) {
        auto& acc = band[ty];
        acc.assign(n, {});
        std::vector<detail::Hit> hits;
        for (int tx = 0; tx < frame.tiles_x; ++tx) {
            const auto& list = frame.tile_lists[ty * frame.tiles_x + tx];
            const int px0 = tx * detail::kTile, py0 = static_cast<int>(ty) * detail::kTile;
            const int px1 = std::min(px0 + detail::kTile, cam.width), py1 = std::min(py0 + detail::kTile, cam.height);
            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                    const double dldc[3] = {lr.grad[pix * 3], lr.grad[pix * 3 + 1], lr.grad[pix * 3 + 2]};
                    if (dldc[0] == 0.0 && dldc[1] == 0.0 && dldc[2] == 0.0) continue;
                    hits.clear();
                    T trans = T(1);
                    for (const std::uint32_t i : list) {
                        const auto& p = frame.proj[i];
                        if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
                        const T dx = T(x) - p.mean2d[0], dy = T(y) - p.mean2d[1];
                        const T power = T(-0.5) * (p.conic_xx * dx * dx + p.conic_yy * dy * dy) - p.conic_xy * dx * dy;
                        if (power > T(0)) continue;
                        const T gauss = std::exp(power);
                        const T raw_alpha = p.opacity * gauss;
                        const T alpha = std::min(T(rs.alpha_max), raw_alpha);
                        if (alpha < T(rs.alpha_min)) continue;
                        hits.push_back({i, double(alpha), double(gauss), double(trans), double(dx), double(dy),
                                        raw_alpha > T(rs.alpha_max)});
                        trans *= (T(1) - alpha);
                    }
                    // Back to front: `after` holds the color composited behind the current splat.
                    double after[3] = {double(trans) * bg[0], double(trans) * bg[1], double(trans) * bg[2]};
                    for (auto h = hits.rbegin(); h != hits.rend(); ++h) {
                        const auto& p = frame.proj[h->splat];
                        auto& g = acc[h->splat];
                        double dl_dalpha = 0.0;
                        for (int k = 0; k < 3; ++k) {
                            const double ck = double(p.color[k]);
                            g.color[k] += T(h->alpha * h->transmittance * dldc[k]);
                            dl_dalpha += (ck * h->transmittance - after[k] / (1.0 - h->alpha)) * dldc[k];
                            after[k] += ck * h->alpha * h->transmittance;
                        }
                        if (h->clamped) continue;
                        g.opacity += T(dl_dalpha * h->gauss);
                        const double dl_dpower = dl_dalpha * h->alpha;
                        const double cxx = double(p.conic_xx), cxy = double(p.conic_xy), cyy = double(p.conic_yy);
                        g.mean[0] += T(dl_dpower * (cxx * h->dx + cxy * h->dy));
                        g.mean[1] += T(dl_dpower * (cyy * h->dy + cxy * h->dx));
                        g.conic[0] += T(dl_dpower * -0.5 * h->dx * h->dx);
                        g.conic[1] += T(dl_dpower * -h->dx * h->dy);
                        g.conic[2] += T(dl_dpower * -0.5 * h->dy * h->dy);
                    }
                }
            }
        }
    });

    std::vector<detail::ScreenGrad<T>> screen(n);
    for (const auto& b : band)
        for (std::size_t i = 0; i < n; ++i) screen[i].add(b[i]);

    const std::size_t k_sh = sh_coeff_count(scene.sh_degree);
    res.grads.assign(n, SplatParams<T>::zeros(k_sh));
    res.mean2d_grad_norm.assign(n, T(0));
    const Mat3<T> w = cam.rotation.cast<T>();
    const T fx = T(cam.fx), fy = T(cam.fy);

    parallel_for(n, rs.workers, [&](std::size_t i) {
        if (!res.contributed[i]) return;
        const auto& p = frame.proj[i];
        const auto& s = screen[i];
        const auto& g = scene.gaussians[i];
        auto& out = res.grads[i];
        res.mean2d_grad_norm[i] = std::sqrt(s.mean[0] * s.mean[0] + s.mean[1] * s.mean[1]);

        // Opacity.
        out.opacity_logit = s.opacity * p.opacity * (T(1) - p.opacity);

        // Color -> SH coefficients and view direction.
        Vec3<T> dl_draw;
        for (int k = 0; k < 3; ++k)
            dl_draw[k] = (p.raw_color[k] > T(0) && p.raw_color[k] < T(1)) ? s.color[k] : T(0);
        const auto basis = sh_basis(scene.sh_degree, p.view_dir);
        const auto dbasis = sh_basis_gradient(scene.sh_degree, p.view_dir);
        Vec3<T> dl_ddir = Vec3<T>::Zero();
        for (std::size_t k = 0; k < k_sh; ++k) {
            out.sh[k] = basis[k] * dl_draw;
            dl_ddir += dbasis[k] * g.sh[k].dot(dl_draw);
        }
        Vec3<T> dl_dpos = Vec3<T>::Zero();
        if (p.view_dist > T(0))
            dl_dpos += (dl_ddir - p.view_dir * p.view_dir.dot(dl_ddir)) / p.view_dist;

        // Conic -> screen covariance (full symmetric matrices).
        Mat2<T> q;
        q << p.conic_xx, p.conic_xy, p.conic_xy, p.conic_yy;
        Mat2<T> gq;
        gq << s.conic[0], T(0.5) * s.conic[1], T(0.5) * s.conic[1], s.conic[2];
        const Mat2<T> gcov = -q * gq * q;

        // Screen covariance -> world covariance and the projection Jacobian.
        const Mat3<T> gsigma = p.jw.transpose() * gcov * p.jw;
        const Eigen::Matrix<T, 2, 3> gjw = T(2) * gcov * p.jw * p.sigma;
        const Eigen::Matrix<T, 2, 3> gj = gjw * w.transpose();

        // Camera-space position from the mean and the Jacobian.
        const T tx = p.cam_pos[0], ty = p.cam_pos[1], tz = p.cam_pos[2];
        const T tz2 = tz * tz;
        Vec3<T> dl_dt;
        const T kx = p.clamp_x ? T(1) : T(2), ky = p.clamp_y ? T(1) : T(2);
        dl_dt[0] = s.mean[0] * fx / tz + (p.clamp_x ? T(0) : gj(0, 2) * (-fx / tz2));
        dl_dt[1] = s.mean[1] * fy / tz + (p.clamp_y ? T(0) : gj(1, 2) * (-fy / tz2));
        dl_dt[2] = s.mean[0] * (-fx * tx / tz2) + s.mean[1] * (-fy * ty / tz2) + gj(0, 0) * (-fx / tz2) +
                   gj(0, 2) * (kx * fx * p.jx / tz2) + gj(1, 1) * (-fy / tz2) + gj(1, 2) * (ky * fy * p.jy / tz2);
        dl_dpos += w.transpose() * dl_dt;
        out.position = dl_dpos;

        // Sigma = M M^T with M = R diag(s).
        const Mat3<T> m = p.rot * p.scale.asDiagonal();
        const Mat3<T> gm = T(2) * gsigma * m;
        for (int j = 0; j < 3; ++j) out.log_scale[j] = p.scale[j] * gm.col(j).dot(p.rot.col(j));
        const Mat3<T> gr = gm * p.scale.asDiagonal();

        const T qn = g.rotation.norm();
        const T qw = g.rotation[0] / qn, qx = g.rotation[1] / qn, qy = g.rotation[2] / qn, qz = g.rotation[3] / qn;
        Vec4<T> gn;
        gn[0] = T(2) * (-qz * gr(0, 1) + qy * gr(0, 2) + qz * gr(1, 0) - qx * gr(1, 2) - qy * gr(2, 0) + qx * gr(2, 1));
        gn[1] = T(2) * (qy * gr(0, 1) + qz * gr(0, 2) + qy * gr(1, 0) - T(2) * qx * gr(1, 1) - qw * gr(1, 2) +
                        qz * gr(2, 0) + qw * gr(2, 1) - T(2) * qx * gr(2, 2));
        gn[2] = T(2) * (-T(2) * qy * gr(0, 0) + qx * gr(0, 1) + qw * gr(0, 2) + qx * gr(1, 0) + qz * gr(1, 2) -
                        qw * gr(2, 0) + qz * gr(2, 1) - T(2) * qy * gr(2, 2));
        gn[3] = T(2) * (-T(2) * qz * gr(0, 0) - qw * gr(0, 1) + qx * gr(0, 2) + qw * gr(1, 0) - T(2) * qz * gr(1, 1) +
                        qy * gr(1, 2) + qx * gr(2, 0) + qy * gr(2, 1));
        const Vec4<T> nq(qw, qx, qy, qz);
        out.rotation = (gn - nq * nq.dot(gn)) / qn;
    });
    return res;
}

}  // namespace coregs
