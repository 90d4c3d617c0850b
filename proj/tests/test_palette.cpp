// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "coregs/palette.hpp"
#include "test_util.hpp"

namespace coregs {
namespace {

// Exhaustive O(|P| |C|) argmax-min with lexicographic tie-break.
FurthestColor exhaustive_furthest(const ColorSet& c, const CandidatePalette& p) {
    FurthestColor best;
    double best_score = -1.0;
    for (const auto& cand : p.candidates) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& col : c.colors) m = std::min(m, rgb_distance(cand, col));
        if (m > best_score || (m == best_score && std::tie(cand.r, cand.g, cand.b) <
                                                      std::tie(best.p_star.r, best.p_star.g, best.p_star.b))) {
            best_score = m;
            best.p_star = cand;
        }
    }
    best.d_avg = best_score;
    return best;
}

ColorSet random_set(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> q(0, 255);
    std::set<std::tuple<int, int, int>> keys;
    while (keys.size() < n) keys.insert({q(rng), q(rng), q(rng)});
    ColorSet s;
    for (auto [r, g, b] : keys) s.colors.emplace_back(r / 255.0, g / 255.0, b / 255.0);
    return s;
}

TEST(RgbDistance, Basics) {
    EXPECT_NEAR(rgb_distance({0, 0, 0}, {1, 1, 1}), 1.7320508, 1e-7);
    const ColorRGB a(0.3, 0.6, 0.1);
    EXPECT_EQ(rgb_distance(a, a), 0.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        const ColorRGB x(u(rng), u(rng), u(rng)), y(u(rng), u(rng), u(rng));
        const double oracle =
            std::sqrt(std::pow(x.r - y.r, 2) + std::pow(x.g - y.g, 2) + std::pow(x.b - y.b, 2));
        EXPECT_NEAR(rgb_distance(x, y), oracle, 1e-12);
        EXPECT_EQ(rgb_distance(x, y), rgb_distance(y, x));
    }
}

TEST(CandidatePalette, LatticeIncludesEndpoints) {
    const auto p = CandidatePalette::lattice(16);
    EXPECT_EQ(p.candidates.size(), 4096u);
    EXPECT_EQ(p.candidates.front(), ColorRGB(0, 0, 0));
    EXPECT_EQ(p.candidates.back(), ColorRGB(1, 1, 1));
    EXPECT_THROW(CandidatePalette::lattice(1), InvalidInput);
}

TEST(CollectColors, UniformBlack) {
    std::vector<ImageBuffer<float>> imgs{ImageBuffer<float>(8, 6, ColorRGB(0, 0, 0))};
    const auto s = collect_colors(imgs, 0.5);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.colors[0], ColorRGB(0, 0, 0));
}

TEST(CollectColors, UnionOfDisjointImages) {
    std::vector<ImageBuffer<float>> imgs{ImageBuffer<float>(4, 4, ColorRGB(1, 0, 0)),
                                         ImageBuffer<float>(4, 4, ColorRGB(0, 0, 1))};
    const auto s = collect_colors(imgs, 0.5);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.colors[0], ColorRGB(0, 0, 1));
    EXPECT_EQ(s.colors[1], ColorRGB(1, 0, 0));
}

TEST(CollectColors, EmptyListRejected) {
    EXPECT_THROW(collect_colors(std::vector<ImageBuffer<float>>{}, 0.5), InvalidInput);
}

TEST(CollectColors, MatchesBlockAverageScanOracle) {
    std::mt19937_64 rng(2);
    const auto img = testing::random_image<double>(rng, 20, 14);
    const auto s = collect_colors(std::vector<ImageBuffer<double>>{img}, 0.5);
    std::set<std::tuple<int, int, int>> oracle;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 10; ++x) {
            int q[3];
            for (int c = 0; c < 3; ++c) {
                const double avg = (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                    img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c)) / 4.0;
                q[c] = static_cast<int>(std::lround(avg * 255.0));
            }
            oracle.insert({q[0], q[1], q[2]});
        }
    std::set<std::tuple<int, int, int>> got;
    for (const auto& c : s.colors)
        got.insert({int(std::lround(c.r * 255)), int(std::lround(c.g * 255)), int(std::lround(c.b * 255))});
    EXPECT_EQ(got, oracle);
    EXPECT_EQ(got.size(), s.size());
}

TEST(Downscale, OddSizeUsesAreaWeights) {
    ImageBuffer<double> img(3, 1);
    for (int x = 0; x < 3; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, 0, c) = x;
    const auto d = downscale_area(img, 0.5);  // 1x1... floor(0.5)=0 -> clamped to 1
    ASSERT_EQ(d.width(), 1);
    EXPECT_NEAR(d.at(0, 0, 0), 1.0, 1e-12);
}

TEST(FurthestColor, SingleBlackColor) {
    ColorSet c{{ColorRGB(0, 0, 0)}};
    const auto f = furthest_color(c, CandidatePalette::lattice(2));
    EXPECT_EQ(f.p_star, ColorRGB(1, 1, 1));
    EXPECT_NEAR(f.d_avg, std::sqrt(3.0), 1e-15);
}

TEST(FurthestColor, TieBreakIsLexicographic) {
    ColorSet c{{ColorRGB(0, 0, 0), ColorRGB(1, 1, 1)}};
    const auto f = furthest_color(c, CandidatePalette::lattice(2));
    EXPECT_EQ(f.p_star, ColorRGB(0, 0, 1));
    EXPECT_EQ(f.d_avg, 1.0);
    const auto o = exhaustive_furthest(c, CandidatePalette::lattice(2));
    EXPECT_EQ(o.p_star, f.p_star);
}

TEST(FurthestColor, EmptySetRejected) {
    EXPECT_THROW(furthest_color(ColorSet{}, CandidatePalette::lattice(4)), InvalidInput);
}

TEST(FurthestColor, MatchesExhaustiveOracle) {
    std::mt19937_64 rng(3);
    const auto p = CandidatePalette::lattice(16);
    std::uniform_int_distribution<std::size_t> sz(1, 600);
    for (int trial = 0; trial < 25; ++trial) {
        const auto c = random_set(rng, sz(rng));
        const auto f = furthest_color(c, p);
        const auto o = exhaustive_furthest(c, p);
        EXPECT_EQ(f.p_star, o.p_star);
        EXPECT_EQ(f.d_avg, o.d_avg);
        for (const auto& col : c.colors) EXPECT_GE(rgb_distance(f.p_star, col), f.d_avg);
    }
}

TEST(FurthestColor, PermutationInvariantAndWorkerIndependent) {
    std::mt19937_64 rng(4);
    auto c = random_set(rng, 300);
    const auto p = CandidatePalette::lattice(12);
    const auto a = furthest_color(c, p);
    std::shuffle(c.colors.begin(), c.colors.end(), rng);
    const auto b = furthest_color(c, p, IsolationMode::kMaxMin, 4);
    EXPECT_EQ(a.p_star, b.p_star);
    EXPECT_EQ(a.d_avg, b.d_avg);
}

TEST(FurthestColor, AddingColorNeverIncreasesIsolation) {
    std::mt19937_64 rng(5);
    const auto p = CandidatePalette::lattice(10);
    auto c = random_set(rng, 5);
    double prev = furthest_color(c, p).d_avg;
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 40; ++i) {
        c.colors.emplace_back(u(rng), u(rng), u(rng));
        const double d = furthest_color(c, p).d_avg;
        EXPECT_LE(d, prev);
        prev = d;
    }
}

TEST(FurthestColor, MeanMinModeAveragesAllCandidates) {
    ColorSet c{{ColorRGB(0, 0, 0)}};
    const auto p = CandidatePalette::lattice(2);
    const auto f = furthest_color(c, p, IsolationMode::kMeanMin);
    const double expected = (0 + 1 + 1 + std::sqrt(2.0) + 1 + std::sqrt(2.0) + std::sqrt(2.0) + std::sqrt(3.0)) / 8;
    EXPECT_NEAR(f.d_avg, expected, 1e-12);
    EXPECT_EQ(f.p_star, ColorRGB(1, 1, 1));
}

TEST(KdTree, NearestEqualsLinearScan) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<KdTree3::Point> pts(2000);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    pts.push_back(pts[10]);  // duplicate point
    const KdTree3 tree(pts);
    for (int q = 0; q < 500; ++q) {
        const KdTree3::Point x{u(rng), u(rng), u(rng)};
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) best = std::min(best, KdTree3::squared_distance(p, x));
        EXPECT_EQ(tree.nearest(x).squared_distance, best);
    }
}

}  // namespace
}  // namespace coregs
