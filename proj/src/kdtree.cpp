// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

namespace gsloc {

KdTree3::KdTree3(std::span<const Eigen::Vector3d> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
        build(0, points_.size());
    }
}

std::size_t KdTree3::build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, -1, 0.0, 0, 0});
    if (end - begin <= leaf_size_) {
        return id;
    }
    Eigen::Vector3d lo = points_[order_[begin]];
    Eigen::Vector3d hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                         const double pa = points_[a][axis];
                         const double pb = points_[b][axis];
                         return pa != pb ? pa < pb : a < b;
                     });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<std::size_t> KdTree3::knn(const Eigen::Vector3d& query, std::size_t k) const {
    k = std::min(k, points_.size());
    if (k == 0) {
        return {};
    }
    // Max-heap of the current best (distance, index) pairs.
    std::vector<std::pair<double, std::size_t>> best;
    best.reserve(k + 1);
    auto worse = [](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) { return a < b; };

    auto visit = [&](auto&& self, std::size_t node_id) -> void {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const std::pair<double, std::size_t> cand{(points_[idx] - query).squaredNorm(), idx};
                if (best.size() < k) {
                    best.push_back(cand);
                    std::push_heap(best.begin(), best.end(), worse);
                } else if (cand < best.front()) {
                    std::pop_heap(best.begin(), best.end(), worse);
                    best.back() = cand;
                    std::push_heap(best.begin(), best.end(), worse);
                }
            }
            return;
        }
        const double diff = query[node.axis] - node.split;
        const std::size_t near = diff < 0.0 ? node.left : node.right;
        const std::size_t far = diff < 0.0 ? node.right : node.left;
        self(self, near);
        // <= keeps equidistant candidates with lower indices reachable.
        if (best.size() < k || diff * diff <= best.front().first) {
            self(self, far);
        }
    };
    visit(visit, 0);

    std::sort(best.begin(), best.end());
    std::vector<std::size_t> out(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) {
        out[i] = best[i].second;
    }
    return out;
}

} // namespace gsloc
