// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/image.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/scene.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gsloc {

struct Keypoint {
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero(); // continuous image coordinates
    Eigen::VectorXd descriptor;                      // unit norm
    double response = 0.0;                           // feature magnitude at the peak
};

struct KeypointConfig {
    std::size_t max_keypoints = 1024;
    double min_response = 1e-9;
    bool subpixel = true;
};

/// Local maxima of the per-pixel feature magnitude over a 3x3 window
/// (plateaus resolve to the first pixel in raster order), strongest first.
/// Throws DataError when `expected_dim` is non-zero and differs from the image.
std::vector<Keypoint> extract_query_keypoints(const FeatureImage& image, const KeypointConfig& cfg = {},
                                              std::size_t expected_dim = 0);

struct Correspondence {
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    std::size_t point_index = 0;
    double similarity = 0.0;
};

struct MatchConfig {
    double min_similarity = 0.5;
    bool mutual = true; // false: one-way nearest neighbor (diagnostic)
};

/// Cosine nearest-neighbor matching; ties go to the lowest map index.
std::vector<Correspondence> match(std::span<const Keypoint> query, const LocalizationMap& map,
                                  const MatchConfig& cfg = {});

/// Correspondences whose point_index is shared with at least one other.
std::size_t count_many_to_one(std::span<const Correspondence> correspondences);

struct RansacConfig {
    std::size_t min_iterations = 1000;
    std::size_t max_iterations = 100000;
    double reprojection_px = 4.0;
    double confidence = 0.9999;
    std::uint64_t seed = 0;
    bool refine = true;

    static RansacConfig efficient() { return {100, 1000}; }
    static RansacConfig standard() { return {1000, 100000}; }
    /// "efficient" or "default".
    static RansacConfig preset(const std::string& name);
};

struct PoseEstimate {
    Pose pose;
    bool success = false;
    std::size_t inlier_count = 0;
    std::size_t iterations_run = 0;
    std::size_t many_to_one_count = 0;
    double runtime_ms = 0.0;
    std::vector<std::size_t> inliers; // indices into the correspondence list
};

/// P3P in a seeded RANSAC loop with adaptive termination bounded by
/// [min_iterations, max_iterations], then LM refinement on the inliers.
/// Throws DataError with fewer than four correspondences; success is false
/// when no hypothesis reaches four inliers.
PoseEstimate solve_pnp_ransac(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics,
                              const RansacConfig& cfg = {});

struct PoseError {
    double translation_cm = 0.0;
    double rotation_deg = 0.0;
};

/// Camera-center distance (cm) and the angle of R_est * R_gt^T (degrees).
PoseError pose_error(const Pose& estimate, const Pose& ground_truth);

} // namespace gsloc
