// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/splitter.hpp"

#include "gsloc/error.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gsloc {

SplitParams split_parameters(double beta) {
    if (!(beta > 0.0 && beta < std::sqrt(3.0))) {
        throw DomainError("beta = " + std::to_string(beta) +
                          " violates the positive semi-definiteness constraint 0 < beta < sqrt(3)");
    }
    SplitParams p;
    p.beta = beta;
    p.lambda_center = 2.0 / 3.0;
    p.lambda_side = 1.0 / 6.0;
    p.sigma_ratio_sq = 1.0 - beta * beta / 3.0;
    return p;
}

std::array<Gaussian, 3> split_gaussian(const Gaussian& g, const SplitParams& params, std::int64_t parent_id) {
    const int axis = major_axis(g);
    const double s = g.scale[axis];
    const Eigen::Vector3d u = g.rotation * Eigen::Vector3d::Unit(axis);
    const Eigen::Vector3d offset = params.beta * s * u;
    const double child_scale = s * std::sqrt(params.sigma_ratio_sq);

    std::array<Gaussian, 3> out{g, g, g};
    out[0].mean = g.mean - offset;
    out[2].mean = g.mean + offset;
    out[0].opacity = params.lambda_side * g.opacity;
    out[1].opacity = params.lambda_center * g.opacity;
    out[2].opacity = params.lambda_side * g.opacity;
    for (Gaussian& c : out) {
        c.scale[axis] = child_scale;
        c.parent_id = parent_id;
    }
    return out;
}

GaussianScene split_scene(const GaussianScene& scene, double beta) {
    const SplitParams params = split_parameters(beta);
    const std::size_t n = scene.size();
    const std::size_t dim = scene.feature_dim();
    std::vector<Gaussian> children(3 * n);
    std::vector<double> features(3 * n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto triple = split_gaussian(scene[i], params, static_cast<std::int64_t>(i));
        for (std::size_t k = 0; k < 3; ++k) {
            children[3 * i + k] = triple[k];
        }
        if (dim > 0) {
            const auto z = scene.feature(i);
            for (std::size_t k = 0; k < 3; ++k) {
                std::copy(z.begin(), z.end(), features.begin() + static_cast<std::ptrdiff_t>((3 * i + k) * dim));
            }
        }
    }
    return GaussianScene(std::move(children), dim, std::move(features));
}

double mixture_moment(int order, double s, const SplitParams& params) {
    const double var = params.sigma_ratio_sq * s * s;
    const double m = params.beta * s;
    switch (order) {
    case 1:
    case 3:
        return 0.0; // symmetric mixture
    case 2:
        return 2.0 * params.lambda_side * (var + m * m) + params.lambda_center * var;
    case 4:
        return 2.0 * params.lambda_side * (3.0 * var * var + 6.0 * var * m * m + m * m * m * m) +
               params.lambda_center * 3.0 * var * var;
    default:
        throw DomainError("mixture_moment supports orders 1..4, got " + std::to_string(order));
    }
}

} // namespace gsloc
