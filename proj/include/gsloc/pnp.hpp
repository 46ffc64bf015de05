// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/scene.hpp"

#include <array>
#include <span>
#include <vector>

namespace gsloc {

/// Minimal absolute pose from three bearing/point pairs (Grunert's quartic).
/// Bearings need not be normalized. Returns up to four world-to-camera poses.
std::vector<Pose> solve_p3p(const std::array<Eigen::Vector3d, 3>& bearings,
                            const std::array<Eigen::Vector3d, 3>& points);

/// Least-squares rigid transform with dst = R * src + t (Kabsch).
Pose rigid_align(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst);

/// Levenberg-Marquardt minimization of pixel reprojection error.
Pose refine_pose_lm(const Pose& initial, std::span<const Eigen::Vector2d> pixels,
                    std::span<const Eigen::Vector3d> points, const Intrinsics& k, int max_iterations = 30);

/// Real roots of c[0] x^4 + c[1] x^3 + c[2] x^2 + c[3] x + c[4].
std::vector<double> real_quartic_roots(const std::array<double, 5>& c);

} // namespace gsloc
