// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/scene.hpp"

#include <array>
#include <cstdint>

namespace gsloc {

inline constexpr double kDefaultBeta = 1.4;

/// Parameters of the symmetric three-component mixture
///   q(x) = l N(-b s, S^2) + l0 N(0, S^2) + l N(+b s, S^2)
/// that matches the first four moments of N(0, s^2).
struct SplitParams {
    double beta = kDefaultBeta;
    double lambda_side = 1.0 / 6.0;
    double lambda_center = 2.0 / 3.0;
    double sigma_ratio_sq = 1.0 - kDefaultBeta * kDefaultBeta / 3.0; // S^2 / s^2
};

/// Throws DomainError unless 0 < beta < sqrt(3) (positive semi-definiteness
/// of the child covariance).
SplitParams split_parameters(double beta);

/// Splits along the major axis into (minus, center, plus). Children keep the
/// parent rotation and minor scales; the major scale shrinks to s*sqrt(U).
std::array<Gaussian, 3> split_gaussian(const Gaussian& g, const SplitParams& params, std::int64_t parent_id);

/// 3N Gaussians, contiguous triples in parent order, parent_id = parent index.
/// Feature rows are copied to all children.
GaussianScene split_scene(const GaussianScene& scene, double beta);

/// Closed-form raw moment E[x^order] of the 1D mixture for a parent scale s.
/// Supports orders 1..4; throws DomainError otherwise.
double mixture_moment(int order, double s, const SplitParams& params);

} // namespace gsloc
