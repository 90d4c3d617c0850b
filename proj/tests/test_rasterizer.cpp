// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "coregs/rasterizer.hpp"
#include "test_util.hpp"

namespace coregs {
namespace {

using testing::front_camera;
using testing::random_image;
using testing::random_splat;

Gaussian3D<double> flat_splat(Vec3<double> pos, double scale, double opacity, ColorRGB color, int degree = 0) {
    Gaussian3D<double> g;
    g.position = pos;
    g.log_scale = Vec3<double>::Constant(std::log(scale));
    g.opacity_logit = inverse_sigmoid(opacity);
    g.sh.assign(sh_coeff_count(degree), Vec3<double>::Zero());
    g.sh[0] = Vec3<double>(rgb_to_sh_dc(color.r), rgb_to_sh_dc(color.g), rgb_to_sh_dc(color.b));
    return g;
}

double alpha_at(const Splat2D<double>& s, int x, int y) {
    const Mat2<double> inv = s.cov2d.inverse();
    const Vec2<double> d(x - s.mean2d[0], y - s.mean2d[1]);
    const double a = std::min(0.99, s.alpha_base * std::exp(-0.5 * d.dot(inv * d)));
    return a < 1.0 / 255.0 ? 0.0 : a;
}

TEST(Project, OnAxisLandsAtPrincipalPoint) {
    const auto cam = front_camera(16, 12, 20, 5);
    const auto s = project(flat_splat({0, 0, 0}, 0.2, 0.5, {0.2, 0.3, 0.4}), cam, 0.01);
    ASSERT_TRUE(s.has_value());
    EXPECT_DOUBLE_EQ(s->mean2d[0], 8.0);
    EXPECT_DOUBLE_EQ(s->mean2d[1], 6.0);
    EXPECT_DOUBLE_EQ(s->depth, 5.0);
}

TEST(Project, IsotropicCovarianceClosedForm) {
    const double f = 30.0, z = 4.0, sigma = 0.25;
    const auto cam = front_camera(64, 64, f, z);
    const auto s = project(flat_splat({0, 0, 0}, sigma, 0.5, {0.5, 0.5, 0.5}), cam, 0.01);
    ASSERT_TRUE(s.has_value());
    const double expected = (f * sigma / z) * (f * sigma / z) + 0.3;
    EXPECT_NEAR(s->cov2d(0, 0), expected, 1e-12);
    EXPECT_NEAR(s->cov2d(1, 1), expected, 1e-12);
    EXPECT_NEAR(s->cov2d(0, 1), 0.0, 1e-12);
}

TEST(Project, BehindNearPlaneIsCulled) {
    const auto cam = front_camera(16, 16, 20, 1);
    EXPECT_FALSE(project(flat_splat({0, 0, -1.0}, 0.2, 0.5, {0, 0, 0}), cam, 0.01).has_value());
    EXPECT_FALSE(project(flat_splat({0, 0, -0.995}, 0.2, 0.5, {0, 0, 0}), cam, 0.01).has_value());
    EXPECT_TRUE(project(flat_splat({0, 0, -0.98}, 0.2, 0.5, {0, 0, 0}), cam, 0.01).has_value());
}

TEST(Render, EmptySceneIsBackground) {
    const auto cam = front_camera(10, 7, 10, 3);
    const ColorRGB bg(0.1, 0.7, 0.3);
    const auto out = render(SplatScene<double>{0, {}}, cam, bg);
    EXPECT_EQ(out.image, ImageBuffer<double>(10, 7, bg));
}

TEST(Render, SingleSplatAtPixelCenter) {
    const auto cam = front_camera(8, 8, 10, 4);
    const ColorRGB c(0.9, 0.2, 0.4), bg(0.1, 0.1, 0.8);
    SplatScene<double> scene{0, {flat_splat({0, 0, 0}, 0.3, 0.7, c)}};
    const auto out = render(scene, cam, bg);
    const double a = 0.7;
    EXPECT_NEAR(out.image.at(4, 4, 0), a * c.r + (1 - a) * bg.r, 1e-12);
    EXPECT_NEAR(out.image.at(4, 4, 1), a * c.g + (1 - a) * bg.g, 1e-12);
    EXPECT_NEAR(out.image.at(4, 4, 2), a * c.b + (1 - a) * bg.b, 1e-12);
    EXPECT_EQ(out.contributed[0], 1);
}

TEST(Render, TwoOverlappingSplatsMatchCompositingOracle) {
    const auto cam = front_camera(12, 12, 14, 5);
    const ColorRGB bg(0.3, 0.3, 0.3);
    // Listed back-first so the renderer has to sort.
    const auto back = flat_splat({0.2, -0.1, 1.0}, 0.5, 0.8, {0.1, 0.9, 0.2});
    const auto front = flat_splat({-0.1, 0.1, -0.5}, 0.3, 0.6, {0.8, 0.1, 0.5});
    SplatScene<double> scene{0, {back, front}};
    const auto out = render(scene, cam, bg);
    const auto sb = *project(back, cam, 0.01), sf = *project(front, cam, 0.01);
    ASSERT_LT(sf.depth, sb.depth);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            const double af = alpha_at(sf, x, y), ab = alpha_at(sb, x, y);
            for (int c = 0; c < 3; ++c) {
                const double expected = sf.color[c] * af + sb.color[c] * ab * (1 - af) + bg[c] * (1 - af) * (1 - ab);
                EXPECT_NEAR(out.image.at(x, y, c), expected, 1e-12) << x << "," << y;
            }
        }
    }
}

TEST(Render, ZeroOpacityGivesBackground) {
    std::mt19937_64 rng(1);
    SplatScene<double> scene{2, {}};
    for (int i = 0; i < 20; ++i) scene.gaussians.push_back(random_splat<double>(rng, 2));
    for (auto& g : scene.gaussians) g.opacity_logit = -std::numeric_limits<double>::infinity();
    const ColorRGB bg(0.25, 0.5, 0.75);
    const auto cam = front_camera(16, 16, 16, 4);
    EXPECT_EQ(render(scene, cam, bg).image, ImageBuffer<double>(16, 16, bg));
}

TEST(Render, DeterministicAcrossCallsAndWorkers) {
    std::mt19937_64 rng(2);
    SplatScene<float> scene{3, {}};
    for (int i = 0; i < 200; ++i) scene.gaussians.push_back(random_splat<float>(rng, 3, 1.5));
    const auto cam = front_camera(48, 40, 40, 5);
    RasterSettings one, four;
    four.workers = 4;
    const auto a = render(scene, cam, ColorRGB(0, 0, 0), one);
    const auto b = render(scene, cam, ColorRGB(0, 0, 0), one);
    const auto c = render(scene, cam, ColorRGB(0, 0, 0), four);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.image, c.image);
    EXPECT_EQ(a.contributed, c.contributed);
}

TEST(Render, TransmittanceNonIncreasing) {
    // Adding splats in front can only darken a pixel towards the front colors:
    // with black splats over a white background the image never brightens.
    std::mt19937_64 rng(4);
    const auto cam = front_camera(24, 24, 24, 4);
    SplatScene<double> scene{0, {}};
    auto prev = render(scene, cam, ColorRGB(1, 1, 1)).image;
    for (int i = 0; i < 15; ++i) {
        auto g = random_splat<double>(rng, 0);
        g.sh[0] = Vec3<double>::Constant(rgb_to_sh_dc(0.0));
        scene.gaussians.push_back(g);
        const auto img = render(scene, cam, ColorRGB(1, 1, 1)).image;
        for (std::size_t k = 0; k < img.data().size(); ++k) EXPECT_LE(img[k], prev[k] + 1e-15);
        prev = img;
    }
}

TEST(Loss, IdenticalImagesGiveZero) {
    std::mt19937_64 rng(5);
    const auto a = random_image<double>(rng, 16, 16);
    const auto r = loss(a, a, 0.2);
    EXPECT_NEAR(r.value, 0.0, 1e-15);
    for (double g : r.grad) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Loss, UniformOffsetL1) {
    ImageBuffer<double> a(9, 9, 0.3), b(9, 9, 0.4);
    EXPECT_NEAR(loss(a, b, 0.0).value, 0.1, 1e-15);
}

TEST(Loss, DimensionMismatch) {
    EXPECT_THROW(loss(ImageBuffer<double>(4, 4), ImageBuffer<double>(4, 5), 0.2), InvalidInput);
}

// Independent per-term oracle: direct L1 and brute-force windowed SSIM.
double brute_ssim(const ImageBuffer<double>& a, const ImageBuffer<double>& b) {
    double w[11];
    double sum = 0;
    for (int i = 0; i < 11; ++i) sum += w[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
    double total = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const int u = x + dx, v = y + dy;
                        if (u < 0 || v < 0 || u >= a.width() || v >= a.height()) continue;
                        const double k = w[dx + 5] * w[dy + 5] / (sum * sum);
                        const double p = a.at(u, v, c), q = b.at(u, v, c);
                        mx += k * p;
                        my += k * q;
                        xx += k * p * p;
                        yy += k * q * q;
                        xy += k * p * q;
                    }
                const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += ((2 * mx * my + 1e-4) * (2 * cxy + 9e-4)) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
            }
    return total / (3.0 * a.pixel_count());
}

TEST(Loss, RandomPairMatchesPerTermOracle) {
    std::mt19937_64 rng(6);
    const auto a = random_image<double>(rng, 20, 17), b = random_image<double>(rng, 20, 17);
    double l1 = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) l1 += std::abs(a[i] - b[i]);
    l1 /= a.data().size();
    const double expected = 0.8 * l1 + 0.2 * (1.0 - brute_ssim(a, b));
    EXPECT_NEAR(loss(a, b, 0.2).value, expected, 1e-6);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    auto a = random_image<double>(rng, 13, 12);
    const auto b = random_image<double>(rng, 13, 12);
    const auto r = loss(a, b, 0.2);
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.data().size(); i += 7) {
        const double keep = a[i];
        a[i] = keep + h;
        const double lp = loss(a, b, 0.2).value;
        a[i] = keep - h;
        const double lm = loss(a, b, 0.2).value;
        a[i] = keep;
        EXPECT_NEAR(r.grad[i], (lp - lm) / (2 * h), 1e-8);
    }
}

SplatScene<double> gradient_scene() {
    std::mt19937_64 rng(42);
    SplatScene<double> scene{3, {}};
    for (int i = 0; i < 3; ++i) scene.gaussians.push_back(random_splat<double>(rng, 3, 0.5));
    return scene;
}

void check_gradients(double lambda, SplatScene<double> scene = gradient_scene()) {
    const auto cam = front_camera(8, 8, 10, 4);
    std::mt19937_64 rng(43);
    const auto target = random_image<double>(rng, 8, 8);
    const ColorRGB bg(0.2, 0.4, 0.6);
    const auto res = backward(scene, cam, target, bg, lambda);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        ASSERT_TRUE(res.contributed[i]);
        auto& g = scene.gaussians[i];
        for (std::size_t p = 0; p < g.param_count(); ++p) {
            const double keep = g.param(p);
            g.param(p) = keep + h;
            const double lp = loss(render(scene, cam, bg).image, target, lambda).value;
            g.param(p) = keep - h;
            const double lm = loss(render(scene, cam, bg).image, target, lambda).value;
            g.param(p) = keep;
            const double fd = (lp - lm) / (2 * h);
            const double err = testing::relative_error(res.grads[i].param(p), fd);
            worst = std::max(worst, err);
            EXPECT_LT(err, 1e-4) << "splat " << i << " param " << p << " analytic " << res.grads[i].param(p)
                                 << " fd " << fd;
        }
    }
    std::cout << "lambda " << lambda << " worst relative error " << worst << "\n";
}

TEST(Backward, MatchesFiniteDifferencesL1) { check_gradients(0.0); }
TEST(Backward, MatchesFiniteDifferencesL1Ssim) { check_gradients(0.2); }

TEST(Backward, GuardBandClampedSplatMatchesFiniteDifferences) {
    auto scene = gradient_scene();
    auto wide = scene.gaussians[2];
    wide.position = Vec3<double>(2.3, -0.3, 0.2);  // x/z beyond 1.3x the half field of view
    wide.log_scale = Vec3<double>(std::log(1.2), std::log(0.8), std::log(1.0));
    wide.opacity_logit = 2.0;
    scene.gaussians.push_back(wide);
    const auto cam = front_camera(8, 8, 10, 4);
    const auto p = detail::project_full(scene.gaussians[3], 3, cam, RasterSettings{});
    ASSERT_TRUE(p.clamp_x);
    ASSERT_TRUE(p.visible);
    check_gradients(0.2, scene);
}

TEST(Backward, ZeroLossGivesZeroGradient) {
    auto scene = gradient_scene();
    const auto cam = front_camera(8, 8, 10, 4);
    const ColorRGB bg(0.2, 0.4, 0.6);
    const auto target = render(scene, cam, bg).image;
    const auto res = backward(scene, cam, target, bg, 0.2);
    EXPECT_NEAR(res.loss, 0.0, 1e-12);
    for (const auto& g : res.grads)
        for (std::size_t p = 0; p < g.param_count(); ++p) EXPECT_NEAR(g.param(p), 0.0, 1e-8);
}

TEST(Backward, OutOfFrustumSplatHasExactlyZeroGradient) {
    auto scene = gradient_scene();
    auto far = scene.gaussians[0];
    far.position = Vec3<double>(50, 0, 0);
    scene.gaussians.push_back(far);
    auto behind = scene.gaussians[1];
    behind.position = Vec3<double>(0, 0, -10);
    scene.gaussians.push_back(behind);
    const auto cam = front_camera(8, 8, 10, 4);
    std::mt19937_64 rng(44);
    const auto res = backward(scene, cam, random_image<double>(rng, 8, 8), ColorRGB(0, 0, 0), 0.2);
    for (std::size_t k : {std::size_t{3}, std::size_t{4}}) {
        EXPECT_FALSE(res.contributed[k]);
        for (std::size_t p = 0; p < res.grads[k].param_count(); ++p) EXPECT_EQ(res.grads[k].param(p), 0.0);
    }
}

TEST(Backward, FloatModeRuns) {
    std::mt19937_64 rng(45);
    SplatScene<float> scene{3, {}};
    for (int i = 0; i < 30; ++i) scene.gaussians.push_back(random_splat<float>(rng, 3, 1.0));
    const auto cam = front_camera(32, 32, 30, 4);
    const auto target = random_image<float>(rng, 32, 32);
    const auto res = backward(scene, cam, target, ColorRGB(0, 0, 0), 0.2);
    EXPECT_GT(res.loss, 0.0);
    EXPECT_EQ(res.grads.size(), scene.size());
}

}  // namespace
}  // namespace coregs
