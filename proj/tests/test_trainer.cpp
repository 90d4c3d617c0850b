// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <random>

#include "coregs/trainer.hpp"
#include "test_util.hpp"

namespace coregs {
namespace {

using testing::front_camera;
using testing::random_splat;

struct Fixture {
    SplatScene<double> scene{2, {}};
    std::vector<TrainingView<double>> views;
    FurthestColor palette{ColorRGB(0, 1, 1), 0.5};
};

// A handful of splats in front of three cameras; targets rendered from a
// shifted copy so the loss is non-zero.
Fixture small_fixture(std::uint64_t seed, std::size_t n = 12) {
    std::mt19937_64 rng(seed);
    Fixture f;
    for (std::size_t i = 0; i < n; ++i) {
        auto g = random_splat<double>(rng, 2, 0.6);
        g.label = static_cast<std::int32_t>(i % 3);
        f.scene.gaussians.push_back(g);
    }
    auto truth = f.scene;
    for (auto& g : truth.gaussians) g.sh[0] += Vec3<double>(0.3, -0.2, 0.1);
    for (int v = 0; v < 3; ++v) {
        auto cam = front_camera(24, 24, 24, 4);
        cam.translation[0] = 0.3 * (v - 1);
        f.views.push_back({cam, render(truth, cam, f.palette.p_star).image});
    }
    return f;
}

RefineConfig short_config(int iters) {
    RefineConfig cfg;
    cfg.init_iters = 0;
    cfg.total_iters = iters;
    cfg.filter_period = 10;
    cfg.seed = 5;
    return cfg;
}

TEST(RefineConfig, Invariants) {
    RefineConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.refine_iters(), 27000);
    cfg.total_iters = cfg.init_iters;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    EXPECT_NO_THROW(cfg.validate_schedule(true));
    cfg = RefineConfig{};
    cfg.filter_period = 0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg = RefineConfig{};
    cfg.lambda = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(PositionLr, DecaysExponentially) {
    LearningRates lr;
    EXPECT_DOUBLE_EQ(detail::position_lr(lr, 2.0, 0, 100), 2.0 * 1.6e-4);
    EXPECT_NEAR(detail::position_lr(lr, 2.0, 100, 100), 2.0 * 1.6e-6, 1e-18);
    EXPECT_NEAR(detail::position_lr(lr, 1.0, 50, 100), 1.6e-5, 1e-18);
}

TEST(ViewSampler, EpochVisitsEveryViewOnce) {
    detail::ViewSampler s(7, 3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::vector<int> seen(7, 0);
        for (int i = 0; i < 7; ++i) ++seen[s.next()];
        for (int c : seen) EXPECT_EQ(c, 1);
    }
}

TEST(Refine, ZeroIterationsIsIdentity) {
    auto f = small_fixture(1);
    auto cfg = short_config(0);
    const auto r = refine(f.scene, f.views, f.palette, cfg);
    EXPECT_EQ(r.scene, f.scene);
    EXPECT_TRUE(r.log.losses.empty());
    EXPECT_TRUE(r.log.filter_passes.empty());
    std::vector<std::ptrdiff_t> ids(f.scene.size());
    std::iota(ids.begin(), ids.end(), 0);
    EXPECT_EQ(r.origin, ids);
}

TEST(Refine, FilterScheduleHitsEveryPeriod) {
    auto f = small_fixture(2);
    f.palette.d_avg = 1e-9;  // nothing gets removed
    const auto r = refine(f.scene, f.views, f.palette, short_config(270));
    ASSERT_EQ(r.log.filter_passes.size(), 27u);
    for (std::size_t k = 0; k < 27; ++k) EXPECT_EQ(r.log.filter_passes[k].iteration, int(10 * (k + 1)));
    EXPECT_EQ(r.log.losses.size(), 270u);
}

TEST(Refine, DeterministicInDoubleMode) {
    const auto f = small_fixture(3);
    auto cfg = short_config(60);
    cfg.workers = 1;
    const auto a = refine(f.scene, f.views, f.palette, cfg);
    cfg.workers = 3;
    const auto b = refine(f.scene, f.views, f.palette, cfg);
    EXPECT_EQ(a.log.losses, b.log.losses);
    EXPECT_EQ(a.scene, b.scene);
}

TEST(Refine, LossDecreases) {
    const auto f = small_fixture(4);
    const auto r = refine(f.scene, f.views, f.palette, short_config(300));
    const auto mean = [&](std::size_t a, std::size_t b) {
        return std::accumulate(r.log.losses.begin() + a, r.log.losses.begin() + b, 0.0) / double(b - a);
    };
    EXPECT_LT(mean(250, 300), mean(0, 50));
}

TEST(Refine, PrunedToEmptyAbortsWithLog) {
    auto f = small_fixture(5);
    f.palette.d_avg = 4.0;  // every color is within 0.5 * 4 of p*
    try {
        refine(f.scene, f.views, f.palette, short_config(30));
        FAIL() << "expected RefineAborted";
    } catch (const RefineAborted& e) {
        EXPECT_EQ(e.log().losses.size(), 10u);
        ASSERT_EQ(e.log().filter_passes.size(), 1u);
        EXPECT_EQ(e.log().filter_passes[0].remaining, 0u);
    }
}

TEST(Refine, SurvivorsAreFarFromPStarInFinalPass) {
    auto f = small_fixture(6, 40);
    f.palette.d_avg = 0.8;
    const auto r = refine(f.scene, f.views, f.palette, short_config(50));
    for (const auto& g : r.scene.gaussians)
        for (const auto& v : f.views)
            EXPECT_GE(rgb_distance(view_color(g, r.scene.sh_degree, v.camera), f.palette.p_star), 0.4);
    // Origins point at the input splats they came from.
    ASSERT_EQ(r.origin.size(), r.scene.size());
    for (std::size_t i = 0; i < r.scene.size(); ++i)
        EXPECT_EQ(r.scene.gaussians[i].label, f.scene.gaussians[std::size_t(r.origin[i])].label);
}

TEST(SparseAdam, NonContributingSplatsUntouched) {
    auto f = small_fixture(7);
    auto hidden = f.scene.gaussians[0];
    hidden.position = Vec3<double>(0, 0, -20);  // behind every camera
    f.scene.gaussians.push_back(hidden);
    auto off = f.scene.gaussians[1];
    off.position = Vec3<double>(60, 0, 0);
    f.scene.gaussians.push_back(off);
    const auto r = refine(f.scene, f.views, f.palette, short_config(20));
    const std::size_t n = f.scene.size();
    ASSERT_EQ(r.scene.size(), n);
    EXPECT_EQ(r.scene.gaussians[n - 2], f.scene.gaussians[n - 2]);
    EXPECT_EQ(r.scene.gaussians[n - 1], f.scene.gaussians[n - 1]);
    EXPECT_NE(r.scene.gaussians[0], f.scene.gaussians[0]);
}

TEST(SparseAdam, StepMatchesHandComputedUpdate) {
    SplatScene<double> scene{0, {}};
    scene.gaussians.push_back(Gaussian3D<double>{});
    scene.gaussians[0].sh.assign(1, Vec3<double>::Zero());
    scene.gaussians[0].rotation = Vec4<double>(1, 0, 0, 0);
    SparseAdam<double> adam;
    adam.resize_like(scene);
    auto grad = SplatParams<double>::zeros(1);
    grad.opacity_logit = 0.7;
    LearningRates lr;
    adam.step(scene, {grad}, {1}, lr, 0.0, 1);
    // First step: m/bc1 = g, v/bc2 = g^2, so the update is lr * sign(g).
    EXPECT_NEAR(scene.gaussians[0].opacity_logit, -lr.opacity, 1e-12);
    adam.step(scene, {grad}, {0}, lr, 0.0, 2);
    EXPECT_NEAR(scene.gaussians[0].opacity_logit, -lr.opacity, 1e-12);
}

TEST(Refine, MaskedRegionDoesNotAffectLoss) {
    // Two datasets whose raw images differ only outside the mask produce the
    // same targets after compositing, hence identical loss sequences.
    const auto f = small_fixture(8);
    std::vector<CameraModel> cams;
    std::vector<ImageBuffer<double>> a, b;
    std::vector<SegmentationMap> segs;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (const auto& v : f.views) {
        cams.push_back(v.camera);
        a.push_back(v.target);
        auto noisy = v.target;
        SegmentationMap s(v.target.width(), v.target.height());
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                s.at(x, y) = (x > 5 && x < 18) ? 1 : 0;
                if (!s.at(x, y))
                    for (int c = 0; c < 3; ++c) noisy.at(x, y, c) = u(rng);
            }
        b.push_back(noisy);
        segs.push_back(s);
    }
    const auto sel = select_views(segs, 1);
    const auto va = make_refine_views(std::span<const CameraModel>(cams), std::span<const ImageBuffer<double>>(a), sel,
                                      f.palette.p_star);
    const auto vb = make_refine_views(std::span<const CameraModel>(cams), std::span<const ImageBuffer<double>>(b), sel,
                                      f.palette.p_star);
    const auto ra = refine(f.scene, va, f.palette, short_config(40));
    const auto rb = refine(f.scene, vb, f.palette, short_config(40));
    EXPECT_EQ(ra.log.losses, rb.log.losses);
}

TEST(WarmupTrain, ImprovesPsnrAndKeepsLabels) {
    const auto f = small_fixture(9, 20);
    auto cfg = short_config(0);
    cfg.init_iters = 200;
    cfg.total_iters = 300;
    const ColorRGB bg = f.palette.p_star;
    TrainLog log;
    const auto out = warmup_train(f.scene, std::span<const TrainingView<double>>(f.views), cfg, bg, &log);
    EXPECT_EQ(log.losses.size(), 200u);
    double before = 0, after = 0;
    for (const auto& v : f.views) {
        before += psnr(render(f.scene, v.camera, bg).image, v.target);
        after += psnr(render(out, v.camera, bg).image, v.target);
    }
    EXPECT_GT(after, before);
    ASSERT_EQ(out.size(), f.scene.size());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.gaussians[i].label, f.scene.gaussians[i].label);

    cfg.init_iters = 0;
    EXPECT_EQ(warmup_train(f.scene, std::span<const TrainingView<double>>(f.views), cfg, bg), f.scene);
    EXPECT_THROW(warmup_train(SplatScene<double>{2, {}}, std::span<const TrainingView<double>>(f.views), cfg, bg),
                 InvalidInput);
}

TEST(Densify, UnchangedWhenQuiet) {
    const auto f = small_fixture(10);
    GradStats stats;
    stats.reset(f.scene.size());
    std::mt19937_64 rng(1);
    const auto r = densify_and_prune(f.scene, stats, DensifyConfig{}, 4.0, rng);
    EXPECT_EQ(r.scene, f.scene);
}

TEST(Densify, LowOpacityRemoved) {
    auto f = small_fixture(11);
    f.scene.gaussians[3].opacity_logit = inverse_sigmoid(1e-4);
    GradStats stats;
    stats.reset(f.scene.size());
    std::mt19937_64 rng(1);
    DensifyConfig cfg;
    cfg.min_opacity = 0.005;
    const auto r = densify_and_prune(f.scene, stats, cfg, 4.0, rng);
    EXPECT_EQ(r.scene.size(), f.scene.size() - 1);
    EXPECT_EQ(r.pass.pruned, 1u);
    for (const auto s : r.source) EXPECT_NE(s, 3);
}

TEST(Densify, ChildrenInheritLabels) {
    auto f = small_fixture(12);
    GradStats stats;
    stats.reset(f.scene.size());
    for (std::size_t i = 0; i < f.scene.size(); ++i) {
        stats.accum[i] = 1.0;
        stats.count[i] = 1;
    }
    f.scene.gaussians[0].log_scale = Vec3<double>::Constant(std::log(0.001));  // clone
    std::mt19937_64 rng(1);
    const auto r = densify_and_prune(f.scene, stats, DensifyConfig{}, 4.0, rng);
    EXPECT_EQ(r.pass.cloned, 1u);
    EXPECT_EQ(r.pass.split, f.scene.size() - 1);
    EXPECT_EQ(r.scene.size(), 1 + 1 + 2 * (f.scene.size() - 1));
    std::map<std::int32_t, int> before, after;
    for (const auto& g : f.scene.gaussians) before[g.label] += 2;
    for (const auto& g : r.scene.gaussians) after[g.label] += 1;
    EXPECT_EQ(before, after);
}

}  // namespace
}  // namespace coregs
