// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/localizer.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gsloc {

/// Synthetic benchmark description. Gaussians fill a cube of side `extent`
/// centered at the origin; cameras sit on a horizontal ring looking inward.
struct SceneSpec {
    std::size_t gaussian_count = 2000;
    double extent = 4.0;
    std::pair<double, double> anisotropy_range = {1.0, 1.0}; // major / minor scale
    std::size_t camera_count = 16;  // training views
    std::size_t query_count = 8;
    double ring_radius = 8.0;
    double ring_height = 1.0;       // train views alternate between +-ring_height
    std::pair<int, int> image_size = {96, 128}; // (H, W)
    double focal_px = 120.0;
    std::size_t feature_dim = 16;
    double noise = 0.0;             // relative query descriptor noise
    std::uint64_t seed = 0;
    std::pair<double, double> minor_scale_range = {0.02, 0.04}; // meters
    std::pair<double, double> opacity_range = {0.5, 0.95};
    // Appearance detail: each Gaussian's footprint is textured by this many
    // small blobs along its major axis whose descriptors drift by
    // `descriptor_gradient` per major-axis standard deviation. 0 renders
    // features straight from the Gaussians.
    std::size_t detail_blobs = 0;
    double descriptor_gradient = 0.5;
    double blob_scale = 0.35;       // blob major scale relative to the parent major scale
};

void validate(const SceneSpec& spec);
SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& path);

struct QuerySet {
    std::vector<CameraView> cameras; // poses are ground truth
    std::vector<FeatureImage> features;
};

struct SyntheticData {
    GaussianScene scene;             // with per-Gaussian descriptors
    GaussianScene appearance;        // what the feature images were rendered from
    std::vector<CameraView> train_cameras;
    FeatureImageSet train_features;
    QuerySet queries;
};

/// Deterministic given spec.seed. Regenerates (with a warning) when a camera
/// sees no Gaussian; throws DataError after 10 attempts.
SyntheticData generate_synthetic_scene(const SceneSpec& spec);

/// Scene directory layout written by `save_synthetic` / `gsloc synth`:
///   spec.json scene.ply appearance.ply train_cameras.json queries.json
///   features/train_<id>.gsfm features/query_<id>.gsfm
void save_synthetic(const SyntheticData& data, const SceneSpec& spec, const std::filesystem::path& dir);
SyntheticData load_synthetic(const std::filesystem::path& dir);

/// queries.json: {"queries": [{camera record..., "features": "<relative path>"}]}
QuerySet load_queries(const std::filesystem::path& path);
void save_queries(const QuerySet& queries, const std::filesystem::path& path, const std::string& feature_prefix);

/// Training feature images referenced in a camera file: for every view,
/// `<dir>/train_<view_id>.gsfm`.
FeatureImageSet load_feature_dir(const std::filesystem::path& dir, std::span<const CameraView> cameras);

struct LocalizeConfig {
    KeypointConfig keypoints;
    MatchConfig matching;
    RansacConfig ransac;
};

struct QueryResult {
    int query_id = 0;
    bool success = false;
    double translation_cm = 0.0;
    double rotation_deg = 0.0;
    std::size_t keypoints = 0;
    std::size_t correspondences = 0;
    std::size_t inliers = 0;
    std::size_t many_to_one = 0;
    std::size_t iterations = 0;
    double runtime_ms = 0.0;
    Pose pose;
};

/// Keypoints, matching and PnP for one query image. The RANSAC seed is
/// offset by `query_id`.
QueryResult localize_query(const FeatureImage& features, const Intrinsics& intrinsics, const LocalizationMap& map,
                           const LocalizeConfig& cfg, int query_id = 0);

struct EvalConfig {
    LocalizeConfig localize;
    bool record_timing = true; // false writes runtime_ms = 0 for byte-stable reports
};

struct EvalReport {
    std::vector<QueryResult> queries;
    double median_translation_cm = 0.0;
    double median_rotation_deg = 0.0;
    double median_inliers = 0.0;
    double median_many_to_one = 0.0;
    double recall_25cm_2deg = 0.0;
    double recall_50cm_5deg = 0.0;
    std::size_t failures = 0;
    MapMeta map_meta;
};

/// Median of a sample (mean of the two central values for even sizes).
double median(std::vector<double> values);

/// Localizes every query; failed queries count as infinite error.
/// Throws DataError on an empty query set.
EvalReport run_eval(const LocalizationMap& map, const QuerySet& queries, const EvalConfig& cfg = {});

/// report.json (aggregates, map meta, per-query rows) and per_query.csv.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

enum class SweepParam { Tau, Beta, MapSize };
SweepParam parse_sweep_param(const std::string& name);

struct SweepRow {
    double value = 0.0;
    std::string variant; // "unsplit" / "split"
    std::optional<EvalReport> report;
    std::string error;   // set when the value was rejected
};

struct SweepReport {
    SweepParam param = SweepParam::Tau;
    std::vector<SweepRow> rows;
};

/// One evaluation per value. tau and beta vary the base map; map_size builds
/// an unsplit map with n samples and a split map with n/3 sampled parents.
SweepReport sweep(SweepParam param, std::span<const double> values, const SyntheticData& data,
                  const MapConfig& base_map, const EvalConfig& eval);

/// sweep.csv, one report directory per row, and sweep.png when `plot` is set.
void write_sweep(const SweepReport& report, const std::filesystem::path& dir, bool plot = true);

/// Line plot of y against x for named series into an RGB image (axes and
/// markers only, no text).
ColorImage plot_series(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                       int height = 360, int width = 480);

} // namespace gsloc
