// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsloc/image.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/scene.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsloc {

inline constexpr double kDefaultTau = 0.1;
inline constexpr std::size_t kDefaultMaxAnchors = 16384;
inline constexpr std::size_t kDefaultRegionK = 8;

/// Strongest per-view composition weight of one Gaussian and the pixel it
/// was observed at.
struct WeightEntry {
    int view_id = 0;
    int row = 0;
    int col = 0;
    double weight = 0.0;
};

/// Per-Gaussian multi-view evidence; entries are sorted by view_id and hold
/// at most one entry per view.
struct InformativeWeightSet {
    std::size_t gaussian_index = 0;
    std::vector<WeightEntry> entries;
};

/// Feature images keyed by view_id.
using FeatureImageSet = std::map<int, FeatureImage>;

/// Keeps contributions with w >= tau, reduces each (Gaussian, view) pair to
/// its maximum-weight pixel (ties: lowest row-major pixel), and drops
/// Gaussians that never pass. Output is sorted by gaussian_index and is
/// independent of camera order and worker count.
std::vector<InformativeWeightSet> aggregate_weights(const GaussianScene& scene, std::span<const CameraView> cameras,
                                                    double tau, const RasterConfig& cfg = {}, int workers = 1);

struct PrefilterResult {
    GaussianScene scene;
    std::vector<std::size_t> kept;                      // new index -> old index
    std::vector<std::optional<std::size_t>> old_to_new; // old index -> new index
};

/// Retains exactly the Gaussians that own a weight set. Throws DataError when
/// nothing survives.
PrefilterResult prefilter(const GaussianScene& scene, std::span<const InformativeWeightSet> weightsets);

/// Rewrites gaussian_index through a prefilter remap, dropping filtered sets.
std::vector<InformativeWeightSet> remap_weightsets(std::span<const InformativeWeightSet> weightsets,
                                                   const PrefilterResult& remap);

/// Mean weight of the set. Throws DataError on an empty set.
double score(const InformativeWeightSet& ws);

/// Parent score from its three children; missing children pass 0.
double aggregate_child_scores(double minus, double center, double plus);

struct SamplingConfig {
    std::size_t anchor_count = 0;
    std::size_t k = kDefaultRegionK;
    std::uint64_t seed = 0;
};

/// Region-based sampling over the Gaussians with positive score: anchors are
/// drawn uniformly without replacement, each region (anchor plus its k
/// nearest centers) keeps its highest-score member (ties: lowest index).
/// Returns the sorted, deduplicated winners.
std::vector<std::size_t> sample_gaussians(std::span<const Eigen::Vector3d> positions, std::span<const double> scores,
                                          const SamplingConfig& cfg);

/// Split-mode sampling: positions are parent centers, scores are aggregated
/// parent scores, and each winning parent expands to all of its surviving
/// children (indices into the filtered child scene). Returns sorted child
/// indices.
std::vector<std::size_t> sample_split_gaussians(std::span<const Eigen::Vector3d> parent_positions,
                                                std::span<const double> parent_scores,
                                                std::span<const std::vector<std::size_t>> children,
                                                const SamplingConfig& cfg);

struct MapPoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::VectorXd descriptor;
};

struct MapMeta {
    std::string mode = "pluggs";
    double tau = kDefaultTau;
    std::optional<double> beta;
    std::uint64_t seed = 0;
    std::size_t k = kDefaultRegionK;
    std::size_t anchor_count = 0;
    std::size_t input_gaussians = 0;
    std::size_t retained_gaussians = 0; // after prefilter
    std::size_t point_count = 0;
    std::size_t zero_feature_warnings = 0;
    Aabb extent;
};

struct LocalizationMap {
    std::vector<MapPoint> points;
    std::size_t feature_dim = 0;
    MapMeta meta;
};

/// Registers a descriptor for every selected Gaussian as the softmax(weight)
/// weighted sum of unit-normalized pixel features at its informative pixels.
/// `weightsets` must contain an entry for every selected index (index space of
/// `scene`). Zero-norm pixel features contribute nothing and are counted in
/// meta.zero_feature_warnings.
LocalizationMap register_features(const GaussianScene& scene, std::span<const std::size_t> selected,
                                  std::span<const InformativeWeightSet> weightsets,
                                  const FeatureImageSet& feature_images);

/// Baseline: average of unit pixel features at the nearest pixel of each
/// view the center projects into, with no visibility reasoning.
LocalizationMap register_projection_average(const GaussianScene& scene, std::span<const std::size_t> selected,
                                            std::span<const CameraView> cameras,
                                            const FeatureImageSet& feature_images,
                                            const RasterConfig& cfg = {});

/// Baseline densification: inserts the midpoint of every point and each of
/// its k nearest map neighbors with the averaged descriptor.
LocalizationMap nn_upsample(const LocalizationMap& map, std::size_t k = 3);

enum class MapMode { PlugGS, ProjectionAverage, NNUpsample };

struct MapConfig {
    double tau = kDefaultTau;
    std::optional<std::size_t> anchors; // default min(16384, N_retained); doubled when splitting
    std::size_t k = kDefaultRegionK;
    std::uint64_t seed = 0;
    bool split = false;
    double beta = 1.4;
    bool double_split_anchors = true;
    MapMode mode = MapMode::PlugGS;
    std::size_t upsample_k = 3;
    RasterConfig raster;
    int workers = 1;
};

/// Full construction: optional split, weight aggregation, prefilter,
/// re-aggregation on the filtered scene, scoring, sampling, registration.
LocalizationMap build_map(const GaussianScene& scene, std::span<const CameraView> cameras,
                          const FeatureImageSet& feature_images, const MapConfig& cfg);

/// Anchor count actually used by build_map for a population of `population`
/// sampling candidates.
std::size_t effective_anchor_count(const MapConfig& cfg, std::size_t population);

/// "GSLM" map file (u32 version, count, D; per point 3 + D float32) and a
/// JSON meta sidecar `<path>.json`.
void write_map(const LocalizationMap& map, const std::filesystem::path& path);
LocalizationMap read_map(const std::filesystem::path& path);

MapMode parse_map_mode(const std::string& name);
std::string to_string(MapMode mode);

} // namespace gsloc
