// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace gsloc {

/// Static 3D kd-tree over a point set for exact k-nearest-neighbor queries.
/// Neighbors are ordered by (squared distance, index), so equidistant points
/// resolve to the lowest index.
class KdTree3 {
  public:
    explicit KdTree3(std::span<const Eigen::Vector3d> points, std::size_t leaf_size = 16);

    /// The k nearest points to `query` (fewer if the set is smaller).
    std::vector<std::size_t> knn(const Eigen::Vector3d& query, std::size_t k) const;

    std::size_t size() const { return points_.size(); }

  private:
    struct Node {
        std::size_t begin, end; // range into order_
        int axis;               // -1 for leaves
        double split;
        std::size_t left, right;
    };

    std::size_t build(std::size_t begin, std::size_t end);

    std::vector<Eigen::Vector3d> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

} // namespace gsloc
