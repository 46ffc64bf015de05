// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/image.hpp"
#include "gsloc/scene.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace gsloc {

/// SH degree-0 normalization constant used by the splat color encoding.
inline constexpr double kShC0 = 0.28209479177387814;

/// Scales below this are clamped at load time to keep covariances positive definite.
inline constexpr double kMinScale = 1e-8;

/// Reads a binary little-endian splat PLY. Required vertex properties:
/// x y z opacity scale_0..2 rot_0..3 f_dc_0..2 (float32). Other properties
/// are skipped, except feat_0..feat_{D-1}, which populate the feature block
/// when present. A sidecar `<path>.parents` (one integer per line, -1 for
/// none) restores parent ids.
GaussianScene load_splat_ply(const std::filesystem::path& path);

/// Writes the same layout (float32). Opacity is stored as a logit, scale as
/// log, color as f_dc. Writes the parent-id sidecar when any Gaussian has one.
void save_splat_ply(const GaussianScene& scene, const std::filesystem::path& path);

/// JSON camera file: {"cameras": [{view_id, fx, fy, cx, cy, width, height,
/// q_wc: [w,x,y,z], t_wc: [x,y,z]}, ...]} or a bare top-level array.
std::vector<CameraView> load_cameras(const std::filesystem::path& path);
void save_cameras(std::span<const CameraView> cameras, const std::filesystem::path& path);

/// "GSFM" feature image: u32 H, W, D then H*W*D float32, row-major, channels last.
FeatureImage read_feature_image(const std::filesystem::path& path);
void write_feature_image(const FeatureImage& image, const std::filesystem::path& path);

/// 8-bit RGB PNG; channels are clamped to [0, 1].
void write_png(const ColorImage& image, const std::filesystem::path& path);

} // namespace gsloc
