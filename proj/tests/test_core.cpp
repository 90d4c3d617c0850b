// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "coregs/core.hpp"
#include "test_util.hpp"

namespace coregs {
namespace {

// Real spherical harmonic with Condon-Shortley phase from associated Legendre
// polynomials; an independent route to the polynomial table in core.hpp.
double legendre(int l, int m, double x) {
    double pmm = 1.0;
    if (m > 0) {
        const double somx2 = std::sqrt((1.0 - x) * (1.0 + x));
        double fact = 1.0;
        for (int i = 1; i <= m; ++i) {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if (l == m) return pmm;
    double pmmp1 = x * (2.0 * m + 1.0) * pmm;
    if (l == m + 1) return pmmp1;
    double pll = 0.0;
    for (int ll = m + 2; ll <= l; ++ll) {
        pll = ((2.0 * ll - 1.0) * x * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    return pll;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

double real_sh(int l, int m, const Vec3<double>& d) {
    const double theta = std::acos(std::clamp(d[2], -1.0, 1.0));
    const double phi = std::atan2(d[1], d[0]);
    const int am = std::abs(m);
    const double k = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial(l - am) / factorial(l + am));
    if (m == 0) return k * legendre(l, 0, std::cos(theta));
    if (m > 0) return std::sqrt(2.0) * k * legendre(l, am, std::cos(theta)) * std::cos(am * phi);
    return std::sqrt(2.0) * k * legendre(l, am, std::cos(theta)) * std::sin(am * phi);
}

TEST(QuatToRotation, IdentityQuaternion) {
    const auto r = quat_to_rotation(Vec4<double>(1, 0, 0, 0));
    EXPECT_TRUE(r.isApprox(Mat3<double>::Identity(), 1e-15));
}

TEST(QuatToRotation, QuarterTurnAboutZ) {
    const double h = std::sqrt(0.5);
    const auto r = quat_to_rotation(Vec4<double>(h, 0, 0, h));
    Mat3<double> expected;
    expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(QuatToRotation, RandomIsOrthonormal) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
        q *= 1.0 + 1e-4 * n(rng) / q.norm();  // slightly off unit length
        const auto r = quat_to_rotation(q);
        EXPECT_LT((r.transpose() * r - Mat3<double>::Identity()).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-6);
    }
}

TEST(QuatToRotation, ZeroNormRejected) {
    EXPECT_THROW(quat_to_rotation(Vec4<double>::Zero().eval()), InvalidInput);
}

TEST(Covariance3d, UnitScaleIdentity) {
    EXPECT_TRUE(covariance3d(Vec3<double>(1, 1, 1), Vec4<double>(1, 0, 0, 0)).isApprox(Mat3<double>::Identity()));
}

TEST(Covariance3d, AxisScale) {
    const auto s = covariance3d(Vec3<double>(2, 1, 1), Vec4<double>(1, 0, 0, 0));
    EXPECT_TRUE(s.isApprox(Vec3<double>(4, 1, 1).asDiagonal().toDenseMatrix()));
}

TEST(Covariance3d, MatchesTripleProductAndIsPsd) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Vec3<double> s(u(rng), u(rng), u(rng));
        const Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
        const auto sigma = covariance3d(s, q);
        const auto r = quat_to_rotation(q);
        Mat3<double> oracle = Mat3<double>::Zero();
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int k = 0; k < 3; ++k) oracle(a, b) += r(a, k) * s[k] * s[k] * r(b, k);
        EXPECT_LT((sigma - oracle).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        Eigen::SelfAdjointEigenSolver<Mat3<double>> es(sigma);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
    }
}

TEST(ShEval, ZeroCoefficientsGiveGray) {
    std::vector<Vec3<double>> c(16, Vec3<double>::Zero());
    const auto col = sh_eval(c, 3, Vec3<double>(0.3, -0.2, 0.9));
    EXPECT_EQ(col, ColorRGB(0.5, 0.5, 0.5));
}

TEST(ShEval, DcTerm) {
    std::vector<Vec3<double>> c{Vec3<double>(0.7, -0.4, 3.0)};
    const auto col = sh_eval(c, 0, Vec3<double>(1, 0, 0));
    EXPECT_NEAR(col.r, 0.5 + 0.28209479 * 0.7, 1e-8);
    EXPECT_NEAR(col.g, 0.5 - 0.28209479 * 0.4, 1e-8);
    EXPECT_EQ(col.b, 1.0);  // clamped
    EXPECT_NEAR(sh::kC0, 1.0 / (2.0 * std::sqrt(std::numbers::pi)), 1e-15);
}

TEST(ShEval, FirstOrderMinusOneTerm) {
    std::vector<Vec3<double>> c(4, Vec3<double>::Zero());
    c[1] = Vec3<double>(0.5, 0.2, -0.3);
    const auto col = sh_eval(c, 1, Vec3<double>(0, 1, 0));
    EXPECT_NEAR(col.r - 0.5, -0.48860251 * 0.5, 1e-8);
    EXPECT_NEAR(col.g - 0.5, -0.48860251 * 0.2, 1e-8);
    EXPECT_NEAR(col.b - 0.5, 0.48860251 * 0.3, 1e-8);
}

TEST(ShEval, BasisMatchesLegendreOracle) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3<double> d = Vec3<double>(n(rng), n(rng), n(rng)).normalized();
        const auto basis = sh_basis(3, d);
        int k = 0;
        for (int l = 0; l <= 3; ++l)
            for (int m = -l; m <= l; ++m, ++k) EXPECT_NEAR(basis[k], real_sh(l, m, d), 1e-12) << "l=" << l << " m=" << m;
    }
}

TEST(ShEval, RandomCoefficientsMatchTermByTermOracle) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Vec3<double>> c(16);
        for (auto& v : c) v = Vec3<double>(n(rng), n(rng), n(rng));
        const Vec3<double> d = Vec3<double>(n(rng), n(rng), n(rng)).normalized();
        const auto col = sh_eval(c, 3, d);
        for (int ch = 0; ch < 3; ++ch) {
            double s = 0.5;
            int k = 0;
            for (int l = 0; l <= 3; ++l)
                for (int m = -l; m <= l; ++m, ++k) s += c[k][ch] * real_sh(l, m, d);
            EXPECT_NEAR(col[ch], std::clamp(s, 0.0, 1.0), 1e-12);
        }
    }
}

TEST(ShEval, ScaleInvariantDirection) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<Vec3<double>> c(16);
    for (auto& v : c) v = Vec3<double>(n(rng), n(rng), n(rng));
    const Vec3<double> d(0.2, -0.5, 0.7);
    const auto a = sh_eval(c, 3, d);
    for (double s : {1e-3, 0.5, 7.0, 1e4}) {
        const auto b = sh_eval(c, 3, Vec3<double>(s * d));
        EXPECT_NEAR(a.r, b.r, 1e-12);
        EXPECT_NEAR(a.g, b.g, 1e-12);
        EXPECT_NEAR(a.b, b.b, 1e-12);
    }
}

TEST(ShEval, CountMismatchRejected) {
    std::vector<Vec3<double>> c(4, Vec3<double>::Zero());
    EXPECT_THROW(sh_eval(c, 3, Vec3<double>(0, 0, 1)), InvalidInput);
}

TEST(ShBasisGradient, MatchesFiniteDifferences) {
    const Vec3<double> d(0.3, -0.6, 0.5);
    const auto g = sh_basis_gradient(3, d);
    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        Vec3<double> p = d, m = d;
        p[axis] += h;
        m[axis] -= h;
        const auto bp = sh_basis(3, p), bm = sh_basis(3, m);
        for (int k = 0; k < 16; ++k) EXPECT_NEAR(g[k][axis], (bp[k] - bm[k]) / (2 * h), 1e-8);
    }
}

TEST(Activation, OpacityIsMonotoneBijection) {
    double prev = 0.0;
    for (double x = -30.0; x <= 30.0; x += 0.25) {
        const double s = sigmoid(x);
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
        EXPECT_GT(s, prev);
        prev = s;
        if (std::abs(x) < 10) {
            EXPECT_NEAR(inverse_sigmoid(s), x, 1e-9);
        }
    }
}

TEST(ColorRGB, ClampsOnConstruction) {
    const ColorRGB c(-0.5, 2.0, std::nan(""));
    EXPECT_EQ(c, ColorRGB(0.0, 1.0, 0.0));
}

TEST(CameraModel, ValidatesIntrinsics) {
    auto cam = testing::front_camera(8, 8, 10, 4);
    EXPECT_NO_THROW(cam.validate());
    cam.fx = 0;
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = testing::front_camera(8, 8, 10, 4);
    cam.cx = 8;
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = testing::front_camera(8, 8, 10, 4);
    cam.rotation(0, 1) = 0.1;
    EXPECT_THROW(cam.validate(), InvalidInput);
}

TEST(CameraModel, LookAtPointsAtTarget) {
    const auto cam = CameraModel::look_at(Vec3<double>(3, 1, -2), Vec3<double>::Zero(), Vec3<double>(0, -1, 0), 64,
                                          48, 1.0);
    cam.validate();
    const Vec3<double> c = cam.to_camera(Vec3<double>::Zero());
    EXPECT_NEAR(c[0], 0.0, 1e-12);
    EXPECT_NEAR(c[1], 0.0, 1e-12);
    EXPECT_NEAR(c[2], std::sqrt(14.0), 1e-12);
    EXPECT_LT((cam.center() - Vec3<double>(3, 1, -2)).norm(), 1e-12);
}

TEST(SplatScene, ValidateChecksShCount) {
    SplatScene<float> s{3, {}};
    Gaussian3D<float> g;
    g.sh.assign(4, Vec3<float>::Zero());
    s.gaussians.push_back(g);
    EXPECT_THROW(s.validate(), InvalidInput);
    s.sh_degree = 1;
    EXPECT_NO_THROW(s.validate());
}

}  // namespace
}  // namespace coregs
