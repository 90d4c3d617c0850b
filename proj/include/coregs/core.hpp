// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "coregs/error.hpp"

namespace coregs {

template <typename T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <typename T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <typename T> using Mat3 = Eigen::Matrix<T, 3, 3>;

constexpr int kMaxShDegree = 3;

constexpr std::size_t sh_coeff_count(int degree) {
    return static_cast<std::size_t>((degree + 1) * (degree + 1));
}

//------------------------------------------------------------------------------
// Colors and buffers

/// RGB triple in [0,1]^3. Non-finite channels become 0, others are clamped.
struct ColorRGB {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;

    constexpr ColorRGB() = default;
    ColorRGB(double r_, double g_, double b_) : r(clamp01(r_)), g(clamp01(g_)), b(clamp01(b_)) {}

    double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
    bool operator==(const ColorRGB&) const = default;

    static double clamp01(double v) {
        if (!std::isfinite(v)) return 0.0;
        return std::clamp(v, 0.0, 1.0);
    }
};

/// Interleaved RGB image, row-major, values nominally in [0,1].
template <typename T>
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, T fill = T(0))
        : width_(width), height_(height), data_(checked_size(width, height) * 3, fill) {}
    ImageBuffer(int width, int height, const ColorRGB& fill) : ImageBuffer(width, height) {
        for (std::size_t i = 0; i < pixel_count(); ++i) set(i, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool same_shape(const ImageBuffer& o) const { return width_ == o.width_ && height_ == o.height_; }

    T& at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    T at(int x, int y, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    ColorRGB pixel(std::size_t p) const {
        return {double(data_[p * 3]), double(data_[p * 3 + 1]), double(data_[p * 3 + 2])};
    }
    ColorRGB pixel(int x, int y) const { return pixel(static_cast<std::size_t>(y) * width_ + x); }
    void set(std::size_t p, const ColorRGB& c) {
        data_[p * 3] = T(c.r);
        data_[p * 3 + 1] = T(c.g);
        data_[p * 3 + 2] = T(c.b);
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    template <typename U>
    ImageBuffer<U> cast() const {
        ImageBuffer<U> out(width_, height_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const ImageBuffer&) const = default;

private:
    static std::size_t checked_size(int w, int h) {
        if (w < 0 || h < 0) throw InvalidInput("negative image dimensions");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Binary mask; every stored value is 0 or 1.
class MaskBuffer {
public:
    MaskBuffer() = default;
    MaskBuffer(int width, int height, bool fill = false)
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return data_.size(); }

    bool at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    bool operator[](std::size_t i) const { return data_[i] != 0; }
    void set(std::size_t i, bool v) { data_[i] = v ? 1 : 0; }
    void set(int x, int y, bool v) { set(static_cast<std::size_t>(y) * width_ + x, v); }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
    }
    double fraction() const {
        return data_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(data_.size());
    }

    bool operator==(const MaskBuffer&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

//------------------------------------------------------------------------------
// Camera

/// Pinhole camera, world-to-camera extrinsics, +z forward, +y down.
struct CameraModel {
    int width = 0;
    int height = 0;
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Mat3<double> rotation = Mat3<double>::Identity();
    Vec3<double> translation = Vec3<double>::Zero();

    Vec3<double> center() const { return -rotation.transpose() * translation; }
    Vec3<double> to_camera(const Vec3<double>& world) const { return rotation * world + translation; }

    void validate() const {
        if (width <= 0 || height <= 0) throw InvalidInput("camera dimensions must be positive");
        if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("camera focal lengths must be positive");
        if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
            throw InvalidInput("camera principal point outside image");
        const double err = (rotation.transpose() * rotation - Mat3<double>::Identity()).cwiseAbs().maxCoeff();
        if (!(err <= 1e-6)) throw InvalidInput("camera rotation is not orthonormal");
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear towards the top of the image.
    static CameraModel look_at(const Vec3<double>& eye, const Vec3<double>& target, const Vec3<double>& up,
                               int width, int height, double fov_x_rad) {
        CameraModel cam;
        cam.width = width;
        cam.height = height;
        cam.fx = 0.5 * width / std::tan(0.5 * fov_x_rad);
        cam.fy = cam.fx;
        cam.cx = 0.5 * width;
        cam.cy = 0.5 * height;
        const Vec3<double> z = (target - eye).normalized();
        const Vec3<double> x = z.cross(up).normalized();  // image right
        const Vec3<double> y = z.cross(x);                 // image down
        cam.rotation.row(0) = x.transpose();
        cam.rotation.row(1) = y.transpose();
        cam.rotation.row(2) = z.transpose();
        cam.translation = -cam.rotation * eye;
        return cam;
    }
};

//------------------------------------------------------------------------------
// Activations

template <typename T> T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }

template <typename T> T inverse_sigmoid(T p) { return std::log(p / (T(1) - p)); }

//------------------------------------------------------------------------------
// Splats

/// Optimizable parameters of one splat, in unconstrained storage space.
/// Gradients use the same layout.
template <typename T>
struct SplatParams {
    Vec3<T> position = Vec3<T>::Zero();
    Vec3<T> log_scale = Vec3<T>::Zero();
    Vec4<T> rotation = Vec4<T>(T(1), T(0), T(0), T(0));  // (w, x, y, z)
    T opacity_logit = T(0);
    std::vector<Vec3<T>> sh;  // (D+1)^2 RGB triplets, DC first

    static constexpr std::size_t kFixedParams = 11;

    std::size_t param_count() const { return kFixedParams + 3 * sh.size(); }

    /// Flat indexing: position(3) log_scale(3) rotation(4) opacity(1) sh(3K).
    T& param(std::size_t i) {
        if (i < 3) return position[i];
        if (i < 6) return log_scale[i - 3];
        if (i < 10) return rotation[i - 6];
        if (i == 10) return opacity_logit;
        i -= kFixedParams;
        return sh[i / 3][i % 3];
    }
    T param(std::size_t i) const { return const_cast<SplatParams&>(*this).param(i); }

    Vec3<T> scale() const { return log_scale.array().exp(); }
    T opacity() const { return sigmoid(opacity_logit); }

    void set_zero() {
        position.setZero();
        log_scale.setZero();
        rotation.setZero();
        opacity_logit = T(0);
        for (auto& c : sh) c.setZero();
    }

    static SplatParams zeros(std::size_t sh_count) {
        SplatParams p;
        p.sh.assign(sh_count, Vec3<T>::Zero());
        p.set_zero();
        return p;
    }
};

template <typename T>
struct Gaussian3D : SplatParams<T> {
    std::int32_t label = 0;

    bool operator==(const Gaussian3D& o) const {
        return this->position == o.position && this->log_scale == o.log_scale && this->rotation == o.rotation &&
               this->opacity_logit == o.opacity_logit && this->sh == o.sh && label == o.label;
    }

    template <typename U>
    Gaussian3D<U> cast() const {
        Gaussian3D<U> g;
        g.position = this->position.template cast<U>();
        g.log_scale = this->log_scale.template cast<U>();
        g.rotation = this->rotation.template cast<U>();
        g.opacity_logit = static_cast<U>(this->opacity_logit);
        g.sh.reserve(this->sh.size());
        for (const auto& c : this->sh) g.sh.push_back(c.template cast<U>());
        g.label = label;
        return g;
    }
};

template <typename T>
struct SplatScene {
    int sh_degree = kMaxShDegree;
    std::vector<Gaussian3D<T>> gaussians;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    bool operator==(const SplatScene&) const = default;

    /// Scene with the same degree and no splats.
    SplatScene empty_like() const { return SplatScene{sh_degree, {}}; }

    void validate() const {
        if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidInput("sh degree must be in [0,3]");
        const std::size_t k = sh_coeff_count(sh_degree);
        for (std::size_t i = 0; i < gaussians.size(); ++i) {
            if (gaussians[i].sh.size() != k)
                throw InvalidInput("gaussian " + std::to_string(i) + " has wrong sh coefficient count");
            if (gaussians[i].label < 0) throw InvalidInput("gaussian " + std::to_string(i) + " has negative label");
        }
    }

    template <typename U>
    SplatScene<U> cast() const {
        SplatScene<U> out{sh_degree, {}};
        out.gaussians.reserve(gaussians.size());
        for (const auto& g : gaussians) out.gaussians.push_back(g.template cast<U>());
        return out;
    }
};

//------------------------------------------------------------------------------
// Geometry

/// Rotation matrix of q = (w, x, y, z). q is renormalized; a zero quaternion
/// is rejected.
template <typename T>
Mat3<T> quat_to_rotation(const Vec4<T>& q) {
    const T n = q.norm();
    if (!(n > T(0)) || !std::isfinite(n)) throw InvalidInput("zero-norm quaternion");
    const T w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3<T> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
         T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
         T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

/// Sigma = R S S^T R^T for activated scale s and rotation q.
template <typename T>
Mat3<T> covariance3d(const Vec3<T>& scale, const Vec4<T>& q) {
    if (!(scale.minCoeff() > T(0))) throw InvalidInput("scales must be positive");
    const Mat3<T> m = quat_to_rotation(q) * scale.asDiagonal();
    Mat3<T> sigma = m * m.transpose();
    sigma = T(0.5) * (sigma + sigma.transpose());
    return sigma;
}

//------------------------------------------------------------------------------
// Spherical harmonics (real basis with Condon-Shortley phase, DC first)

namespace sh {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277, -0.5900435899266435};
}  // namespace sh

/// Basis values Y_k(d) for k < (degree+1)^2, d assumed unit length.
template <typename T>
std::array<T, 16> sh_basis(int degree, const Vec3<T>& d) {
    std::array<T, 16> y{};
    const T x = d[0], yy = d[1], z = d[2];
    y[0] = T(sh::kC0);
    if (degree < 1) return y;
    y[1] = -T(sh::kC1) * yy;
    y[2] = T(sh::kC1) * z;
    y[3] = -T(sh::kC1) * x;
    if (degree < 2) return y;
    const T xx = x * x, y2 = yy * yy, zz = z * z;
    y[4] = T(sh::kC2[0]) * x * yy;
    y[5] = T(sh::kC2[1]) * yy * z;
    y[6] = T(sh::kC2[2]) * (T(2) * zz - xx - y2);
    y[7] = T(sh::kC2[3]) * x * z;
    y[8] = T(sh::kC2[4]) * (xx - y2);
    if (degree < 3) return y;
    y[9] = T(sh::kC3[0]) * yy * (T(3) * xx - y2);
    y[10] = T(sh::kC3[1]) * x * yy * z;
    y[11] = T(sh::kC3[2]) * yy * (T(4) * zz - xx - y2);
    y[12] = T(sh::kC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * y2);
    y[13] = T(sh::kC3[4]) * x * (T(4) * zz - xx - y2);
    y[14] = T(sh::kC3[5]) * z * (xx - y2);
    y[15] = T(sh::kC3[6]) * x * (xx - T(3) * y2);
    return y;
}

/// Gradients of the basis polynomials with respect to (x, y, z).
template <typename T>
std::array<Vec3<T>, 16> sh_basis_gradient(int degree, const Vec3<T>& d) {
    std::array<Vec3<T>, 16> g;
    for (auto& v : g) v.setZero();
    if (degree < 1) return g;
    const T x = d[0], y = d[1], z = d[2];
    const T c1 = T(sh::kC1);
    g[1] = Vec3<T>(0, -c1, 0);
    g[2] = Vec3<T>(0, 0, c1);
    g[3] = Vec3<T>(-c1, 0, 0);
    if (degree < 2) return g;
    const T xx = x * x, yy = y * y, zz = z * z;
    g[4] = T(sh::kC2[0]) * Vec3<T>(y, x, 0);
    g[5] = T(sh::kC2[1]) * Vec3<T>(0, z, y);
    g[6] = T(sh::kC2[2]) * Vec3<T>(-T(2) * x, -T(2) * y, T(4) * z);
    g[7] = T(sh::kC2[3]) * Vec3<T>(z, 0, x);
    g[8] = T(sh::kC2[4]) * Vec3<T>(T(2) * x, -T(2) * y, 0);
    if (degree < 3) return g;
    g[9] = T(sh::kC3[0]) * Vec3<T>(T(6) * x * y, T(3) * xx - T(3) * yy, 0);
    g[10] = T(sh::kC3[1]) * Vec3<T>(y * z, x * z, x * y);
    g[11] = T(sh::kC3[2]) * Vec3<T>(-T(2) * x * y, T(4) * zz - xx - T(3) * yy, T(8) * y * z);
    g[12] = T(sh::kC3[3]) * Vec3<T>(-T(6) * x * z, -T(6) * y * z, T(6) * zz - T(3) * xx - T(3) * yy);
    g[13] = T(sh::kC3[4]) * Vec3<T>(T(4) * zz - T(3) * xx - yy, -T(2) * x * y, T(8) * x * z);
    g[14] = T(sh::kC3[5]) * Vec3<T>(T(2) * x * z, -T(2) * y * z, xx - yy);
    g[15] = T(sh::kC3[6]) * Vec3<T>(T(3) * xx - T(3) * yy, -T(6) * x * y, 0);
    return g;
}

/// Unclamped SH color 0.5 + sum_k c_k Y_k(dir) per channel.
template <typename T>
Vec3<T> sh_eval_raw(const std::vector<Vec3<T>>& coeffs, int degree, const Vec3<T>& dir) {
    const auto basis = sh_basis(degree, dir);
    Vec3<T> c = Vec3<T>::Constant(T(0.5));
    for (std::size_t k = 0; k < coeffs.size(); ++k) c += basis[k] * coeffs[k];
    return c;
}

/// View-dependent color, clamped to [0,1]. `view_dir` is normalized first.
template <typename T>
ColorRGB sh_eval(const std::vector<Vec3<T>>& coeffs, int degree, const Vec3<T>& view_dir) {
    if (degree < 0 || degree > kMaxShDegree || coeffs.size() != sh_coeff_count(degree))
        throw InvalidInput("sh degree / coefficient count mismatch");
    const T n = view_dir.norm();
    if (!(n > T(0))) throw InvalidInput("zero view direction");
    const Vec3<T> c = sh_eval_raw(coeffs, degree, Vec3<T>(view_dir / n));
    return {double(c[0]), double(c[1]), double(c[2])};
}

/// DC coefficient that renders constant color `value` (other coefficients 0).
inline double rgb_to_sh_dc(double value) { return (value - 0.5) / sh::kC0; }

}  // namespace coregs
