// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace coregs {

/// Static 3-d tree answering exact nearest-neighbour queries. Distances are
/// squared Euclidean, summed in (x, y, z) order, so a query returns the same
/// value a linear scan computing the same expression would.
class KdTree3 {
public:
    using Point = std::array<double, 3>;

    explicit KdTree3(std::vector<Point> points) : points_(std::move(points)) {
        index_.resize(points_.size());
        std::iota(index_.begin(), index_.end(), 0u);
        if (!points_.empty()) root_ = build(0, static_cast<std::uint32_t>(points_.size()));
    }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    static double squared_distance(const Point& a, const Point& b) {
        const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
        return dx * dx + dy * dy + dz * dz;
    }

    struct Result {
        std::size_t index = 0;
        double squared_distance = std::numeric_limits<double>::infinity();
    };

    Result nearest(const Point& q) const {
        Result best;
        if (root_ >= 0) search(root_, q, best);
        return best;
    }

private:
    static constexpr std::uint32_t kLeafSize = 8;

    struct Node {
        std::uint32_t begin = 0, end = 0;  // range in index_
        int axis = -1;                     // -1: leaf
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::uint32_t begin, std::uint32_t end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= kLeafSize) return id;

        Point lo{}, hi{};
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (std::uint32_t i = begin; i < end; ++i)
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], points_[index_[i]][a]);
                hi[a] = std::max(hi[a], points_[index_[i]][a]);
            }
        int axis = 0;
        for (int a = 1; a < 3; ++a)
            if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
        if (hi[axis] == lo[axis]) return id;  // all points identical

        const std::uint32_t mid = begin + (end - begin) / 2;
        std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             return points_[a][axis] < points_[b][axis] ||
                                    (points_[a][axis] == points_[b][axis] && a < b);
                         });
        const double split = points_[index_[mid]][axis];
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    // Left subtree holds coordinates <= split, right subtree >= split.
    void search(int id, const Point& q, Result& best) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const double d = squared_distance(points_[index_[i]], q);
                if (d < best.squared_distance || (d == best.squared_distance && index_[i] < best.index)) {
                    best.squared_distance = d;
                    best.index = index_[i];
                }
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff <= 0.0 ? n.left : n.right;
        const int far = diff <= 0.0 ? n.right : n.left;
        search(near, q, best);
        if (diff * diff <= best.squared_distance) search(far, q, best);
    }

    std::vector<Point> points_;
    std::vector<std::uint32_t> index_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace coregs
