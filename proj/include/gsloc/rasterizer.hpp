// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/image.hpp"
#include "gsloc/scene.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace gsloc {

/// Rendering constants. Pixel (row, col) has its center at continuous image
/// coordinates (col + 0.5, row + 0.5).
struct RasterConfig {
    double near_plane = 0.01;
    double low_pass = 0.3;           // px^2 added to the projected covariance
    double alpha_clamp = 0.99;
    double transmittance_stop = 1e-4; // 0 disables early termination
    double support_sigma = 3.0;      // Mahalanobis radius of a splat's support
    int tile_size = 16;
    int workers = 1;
};

struct ScreenGaussian {
    std::size_t source_index = 0;
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity(); // cov2d^-1
    double depth = 0.0;
    double opacity = 0.0;
    // Inclusive pixel bounds of the support, clipped to the image.
    int row_min = 0, row_max = -1, col_min = 0, col_max = -1;
};

/// EWA projection: mean via the pinhole model, cov2d = J W Sigma W^T J^T +
/// low_pass * I. Returns nullopt behind the near plane or when the support
/// ellipse misses every pixel center.
std::optional<ScreenGaussian> project_gaussian(const Gaussian& g, const CameraView& cam,
                                               const RasterConfig& cfg = {}, std::size_t source_index = 0);

/// Squared Mahalanobis distance of a pixel center to a projected splat.
inline double splat_distance2(const ScreenGaussian& sg, double px, double py) {
    const double dx = px - sg.mean2d.x();
    const double dy = py - sg.mean2d.y();
    return dx * (sg.conic(0, 0) * dx + sg.conic(0, 1) * dy) + dy * (sg.conic(1, 0) * dx + sg.conic(1, 1) * dy);
}

struct PixelContribution {
    std::size_t gaussian_index = 0;
    int row = 0;
    int col = 0;
    double weight = 0.0;
};

struct RenderOutput {
    ColorImage color;
    FeatureImage features;    // empty unless requested
    Image transmittance;      // final per-pixel transmittance, 1 channel
    /// Contributions with weight >= floor, ordered by pixel (row-major), then
    /// front to back. Compositing always uses every contributor.
    std::vector<PixelContribution> contributions;
};

/// Depth-sorted, tiled alpha compositing. Weight of the n-th splat along a
/// ray is a_n * prod_{k<n}(1 - a_k) with a_n = min(clamp, alpha * exp(-q/2)).
/// Throws DataError on an empty scene and DomainError on floor <= 0.
RenderOutput rasterize(const GaussianScene& scene, const CameraView& cam, double floor = 0.01,
                       const RasterConfig& cfg = {}, bool with_features = false);

/// f_ij = sum_n w(g_n, I_ij) z_n with the same weights as rasterize.
FeatureImage render_feature_image(const GaussianScene& scene, const CameraView& cam, const RasterConfig& cfg = {});

/// Projects every Gaussian and returns the visible ones sorted front to back
/// (ties by source index).
std::vector<ScreenGaussian> project_scene(const GaussianScene& scene, const CameraView& cam,
                                          const RasterConfig& cfg = {});

double psnr(const ColorImage& a, const ColorImage& b);

} // namespace gsloc
