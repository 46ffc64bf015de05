// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/mapper.hpp"

#include "gsloc/error.hpp"
#include "gsloc/kdtree.hpp"
#include "gsloc/log.hpp"
#include "gsloc/rng.hpp"
#include "gsloc/splitter.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

namespace gsloc {

namespace {

struct ViewBest {
    double weight = -1.0;
    int row = 0;
    int col = 0;
};

std::vector<ViewBest> best_per_gaussian(const GaussianScene& scene, const CameraView& cam, double tau,
                                        const RasterConfig& cfg) {
    std::vector<ViewBest> best(scene.size());
    const RenderOutput out = rasterize(scene, cam, tau, cfg);
    for (const PixelContribution& c : out.contributions) {
        ViewBest& b = best[c.gaussian_index];
        if (c.weight > b.weight) { // row-major order keeps the first pixel on ties
            b = {c.weight, c.row, c.col};
        }
    }
    return best;
}

std::vector<std::size_t> index_of_weightsets(std::span<const InformativeWeightSet> weightsets, std::size_t n) {
    std::vector<std::size_t> lookup(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < weightsets.size(); ++i) {
        if (weightsets[i].gaussian_index >= n) {
            throw DataError("weight set references Gaussian " + std::to_string(weightsets[i].gaussian_index) +
                            " outside the scene");
        }
        lookup[weightsets[i].gaussian_index] = i;
    }
    return lookup;
}

Eigen::VectorXd unit_pixel_feature(const FeatureImage& img, int row, int col, bool& zero) {
    const auto f = img.at(row, col);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    const double n = v.norm();
    zero = !(n > 0.0);
    if (zero) {
        return Eigen::VectorXd::Zero(v.size());
    }
    return v / n;
}

std::size_t common_dim(const FeatureImageSet& images) {
    if (images.empty()) {
        throw DataError("no feature images supplied");
    }
    const std::size_t dim = images.begin()->second.channels();
    for (const auto& [id, img] : images) {
        if (img.channels() != dim) {
            throw DataError("feature images disagree on channel count (view " + std::to_string(id) + ")");
        }
    }
    return dim;
}

const FeatureImage& feature_for(const FeatureImageSet& images, int view_id) {
    const auto it = images.find(view_id);
    if (it == images.end()) {
        throw DataError("no feature image for view " + std::to_string(view_id));
    }
    return it->second;
}

} // namespace

std::vector<InformativeWeightSet> aggregate_weights(const GaussianScene& scene, std::span<const CameraView> cameras,
                                                    double tau, const RasterConfig& cfg, int workers) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw DomainError("tau must lie in (0, 1)");
    }
    std::vector<const CameraView*> order;
    for (const CameraView& c : cameras) {
        order.push_back(&c);
    }
    std::sort(order.begin(), order.end(), [](const CameraView* a, const CameraView* b) { return a->view_id < b->view_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->view_id == order[i - 1]->view_id) {
            throw DataError("duplicate view_id " + std::to_string(order[i]->view_id));
        }
    }

    std::vector<std::vector<ViewBest>> per_view(order.size());
    const int pool_size = std::clamp(workers, 1, std::max(1, static_cast<int>(order.size())));
    if (pool_size == 1) {
        for (std::size_t v = 0; v < order.size(); ++v) {
            per_view[v] = best_per_gaussian(scene, *order[v], tau, cfg);
        }
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < pool_size; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t v = static_cast<std::size_t>(w); v < order.size(); v += static_cast<std::size_t>(pool_size)) {
                    per_view[v] = best_per_gaussian(scene, *order[v], tau, cfg);
                }
            });
        }
    }

    std::vector<InformativeWeightSet> out;
    for (std::size_t g = 0; g < scene.size(); ++g) {
        InformativeWeightSet ws{g, {}};
        for (std::size_t v = 0; v < order.size(); ++v) {
            const ViewBest& b = per_view[v][g];
            if (b.weight >= tau) {
                ws.entries.push_back({order[v]->view_id, b.row, b.col, b.weight});
            }
        }
        if (!ws.entries.empty()) {
            out.push_back(std::move(ws));
        }
    }
    return out;
}

PrefilterResult prefilter(const GaussianScene& scene, std::span<const InformativeWeightSet> weightsets) {
    std::vector<char> keep(scene.size(), 0);
    for (const InformativeWeightSet& ws : weightsets) {
        if (ws.gaussian_index >= scene.size()) {
            throw DataError("weight set references a Gaussian outside the scene");
        }
        if (!ws.entries.empty()) {
            keep[ws.gaussian_index] = 1;
        }
    }
    PrefilterResult res;
    res.old_to_new.assign(scene.size(), std::nullopt);
    std::vector<Gaussian> kept;
    std::vector<double> features;
    const std::size_t dim = scene.feature_dim();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (keep[i] == 0) {
            continue;
        }
        res.old_to_new[i] = res.kept.size();
        res.kept.push_back(i);
        kept.push_back(scene[i]);
        const auto z = scene.feature(i);
        features.insert(features.end(), z.begin(), z.end());
    }
    if (kept.empty()) {
        throw DataError("prefilter removed every Gaussian (tau too high for this scene)");
    }
    res.scene = GaussianScene(std::move(kept), dim, std::move(features));
    return res;
}

std::vector<InformativeWeightSet> remap_weightsets(std::span<const InformativeWeightSet> weightsets,
                                                   const PrefilterResult& remap) {
    std::vector<InformativeWeightSet> out;
    for (const InformativeWeightSet& ws : weightsets) {
        if (ws.gaussian_index < remap.old_to_new.size() && remap.old_to_new[ws.gaussian_index]) {
            out.push_back({*remap.old_to_new[ws.gaussian_index], ws.entries});
        }
    }
    return out;
}

double score(const InformativeWeightSet& ws) {
    if (ws.entries.empty()) {
        throw DataError("cannot score an empty weight set (Gaussian " + std::to_string(ws.gaussian_index) + ")");
    }
    double sum = 0.0;
    for (const WeightEntry& e : ws.entries) {
        sum += e.weight;
    }
    return sum / static_cast<double>(ws.entries.size());
}

double aggregate_child_scores(double minus, double center, double plus) { return (minus + center + plus) / 3.0; }

namespace {

// Region winners as indices into `positions`.
std::vector<std::size_t> sample_regions(std::span<const Eigen::Vector3d> positions, std::span<const double> scores,
                                        const SamplingConfig& cfg) {
    if (scores.empty()) {
        throw DataError("sampling requires a non-empty score list");
    }
    if (positions.size() != scores.size()) {
        throw DataError("positions and scores differ in length");
    }
    if (cfg.k < 1) {
        throw DomainError("region size k must be at least 1");
    }
    std::vector<std::size_t> population;
    std::vector<Eigen::Vector3d> pts;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > 0.0) {
            population.push_back(i);
            pts.push_back(positions[i]);
        }
    }
    if (cfg.anchor_count > population.size()) {
        throw DomainError("anchor_count " + std::to_string(cfg.anchor_count) + " exceeds the sampling population " +
                          std::to_string(population.size()));
    }
    if (population.empty() || cfg.anchor_count == 0) {
        return {};
    }

    // Partial Fisher-Yates: the first anchor_count slots are the anchors.
    Rng rng(cfg.seed);
    std::vector<std::size_t> slots(population.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.anchor_count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(slots.size() - i));
        std::swap(slots[i], slots[j]);
    }

    const KdTree3 tree(pts);
    std::set<std::size_t> winners;
    for (std::size_t a = 0; a < cfg.anchor_count; ++a) {
        const std::vector<std::size_t> region = tree.knn(pts[slots[a]], cfg.k + 1);
        std::size_t best = region.front();
        for (std::size_t m : region) {
            const double sm = scores[population[m]];
            const double sb = scores[population[best]];
            if (sm > sb || (sm == sb && population[m] < population[best])) {
                best = m;
            }
        }
        winners.insert(population[best]);
    }
    return {winners.begin(), winners.end()};
}

} // namespace

std::vector<std::size_t> sample_gaussians(std::span<const Eigen::Vector3d> positions, std::span<const double> scores,
                                          const SamplingConfig& cfg) {
    return sample_regions(positions, scores, cfg);
}

std::vector<std::size_t> sample_split_gaussians(std::span<const Eigen::Vector3d> parent_positions,
                                                std::span<const double> parent_scores,
                                                std::span<const std::vector<std::size_t>> children,
                                                const SamplingConfig& cfg) {
    if (children.size() != parent_scores.size()) {
        throw DataError("children table and parent scores differ in length");
    }
    std::vector<std::size_t> out;
    for (std::size_t p : sample_regions(parent_positions, parent_scores, cfg)) {
        out.insert(out.end(), children[p].begin(), children[p].end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

LocalizationMap register_features(const GaussianScene& scene, std::span<const std::size_t> selected,
                                  std::span<const InformativeWeightSet> weightsets,
                                  const FeatureImageSet& feature_images) {
    const std::size_t dim = common_dim(feature_images);
    const std::vector<std::size_t> lookup = index_of_weightsets(weightsets, scene.size());

    LocalizationMap map;
    map.feature_dim = dim;
    map.points.reserve(selected.size());
    std::size_t zero_count = 0;
    for (std::size_t idx : selected) {
        if (idx >= scene.size()) {
            throw DataError("selected index " + std::to_string(idx) + " outside the scene");
        }
        if (lookup[idx] == std::numeric_limits<std::size_t>::max() || weightsets[lookup[idx]].entries.empty()) {
            throw DataError("selected Gaussian " + std::to_string(idx) + " has an empty weight set");
        }
        const auto& entries = weightsets[lookup[idx]].entries;
        double wmax = -std::numeric_limits<double>::infinity();
        for (const WeightEntry& e : entries) {
            wmax = std::max(wmax, e.weight);
        }
        double denom = 0.0;
        for (const WeightEntry& e : entries) {
            denom += std::exp(e.weight - wmax);
        }
        Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        for (const WeightEntry& e : entries) {
            const FeatureImage& img = feature_for(feature_images, e.view_id);
            if (e.row < 0 || e.row >= img.height() || e.col < 0 || e.col >= img.width()) {
                throw DataError("informative pixel outside the feature image of view " + std::to_string(e.view_id));
            }
            bool zero = false;
            const Eigen::VectorXd f = unit_pixel_feature(img, e.row, e.col, zero);
            zero_count += zero ? 1 : 0;
            z += (std::exp(e.weight - wmax) / denom) * f;
        }
        map.points.push_back({scene[idx].mean, std::move(z)});
    }
    if (zero_count > 0) {
        warn(std::to_string(zero_count) + " informative pixels had zero-norm features");
    }
    map.meta.zero_feature_warnings = zero_count;
    map.meta.point_count = map.points.size();
    map.meta.extent = scene.extent();
    return map;
}

LocalizationMap register_projection_average(const GaussianScene& scene, std::span<const std::size_t> selected,
                                            std::span<const CameraView> cameras,
                                            const FeatureImageSet& feature_images, const RasterConfig& cfg) {
    const std::size_t dim = common_dim(feature_images);
    LocalizationMap map;
    map.feature_dim = dim;
    for (std::size_t idx : selected) {
        const Eigen::Vector3d& x = scene[idx].mean;
        Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        std::size_t used = 0;
        for (const CameraView& cam : cameras) {
            const Eigen::Vector3d p = cam.pose.transform(x);
            if (!(p.z() > cfg.near_plane)) {
                continue;
            }
            const Eigen::Vector2d uv = cam.intrinsics.project(p);
            const int col = static_cast<int>(std::floor(uv.x()));
            const int row = static_cast<int>(std::floor(uv.y()));
            if (col < 0 || row < 0 || col >= cam.intrinsics.width || row >= cam.intrinsics.height) {
                continue;
            }
            bool zero = false;
            const Eigen::VectorXd f = unit_pixel_feature(feature_for(feature_images, cam.view_id), row, col, zero);
            if (!zero) {
                z += f;
                ++used;
            }
        }
        if (used > 0) {
            z /= static_cast<double>(used);
        }
        map.points.push_back({x, std::move(z)});
    }
    map.meta.mode = "projection_average";
    map.meta.point_count = map.points.size();
    map.meta.extent = scene.extent();
    return map;
}

LocalizationMap nn_upsample(const LocalizationMap& map, std::size_t k) {
    LocalizationMap out = map;
    std::vector<Eigen::Vector3d> pts;
    for (const MapPoint& p : map.points) {
        pts.push_back(p.position);
    }
    const KdTree3 tree(pts);
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j : tree.knn(pts[i], k + 1)) {
            if (j != i) {
                pairs.insert({std::min(i, j), std::max(i, j)});
            }
        }
    }
    for (const auto& [a, b] : pairs) {
        out.points.push_back({0.5 * (pts[a] + pts[b]), 0.5 * (map.points[a].descriptor + map.points[b].descriptor)});
    }
    out.meta.mode = "nn_upsample";
    out.meta.point_count = out.points.size();
    return out;
}

std::size_t effective_anchor_count(const MapConfig& cfg, std::size_t population) {
    std::size_t anchors = cfg.anchors.value_or(std::min(kDefaultMaxAnchors, population));
    if (cfg.split && cfg.double_split_anchors) {
        anchors *= 2;
    }
    return std::min(anchors, population);
}

LocalizationMap build_map(const GaussianScene& scene, std::span<const CameraView> cameras,
                          const FeatureImageSet& feature_images, const MapConfig& cfg) {
    if (cfg.split && cfg.mode != MapMode::PlugGS) {
        throw DomainError("splitting combines only with the pluggs registration mode");
    }
    const GaussianScene working = cfg.split ? split_scene(scene, cfg.beta) : scene;

    const auto first_pass = aggregate_weights(working, cameras, cfg.tau, cfg.raster, cfg.workers);
    const PrefilterResult filtered = prefilter(working, first_pass);
    // Weights on the cleaned scene: removed splats no longer attenuate rays.
    const auto weightsets = aggregate_weights(filtered.scene, cameras, cfg.tau, cfg.raster, cfg.workers);

    const GaussianScene& fs = filtered.scene;
    std::vector<double> scores(fs.size(), 0.0);
    for (const InformativeWeightSet& ws : weightsets) {
        scores[ws.gaussian_index] = score(ws);
    }

    std::vector<std::size_t> selected;
    std::size_t anchors = 0;
    if (cfg.split) {
        std::vector<std::vector<std::size_t>> children(scene.size());
        std::vector<std::array<double, 3>> child_scores(scene.size(), {0.0, 0.0, 0.0});
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const std::size_t parent = static_cast<std::size_t>(*fs[i].parent_id);
            const std::size_t slot = filtered.kept[i] - 3 * parent; // 0 minus, 1 center, 2 plus
            children[parent].push_back(i);
            child_scores[parent][slot] = scores[i];
        }
        std::vector<double> parent_scores(scene.size());
        std::vector<Eigen::Vector3d> parent_pos(scene.size());
        std::size_t live = 0;
        for (std::size_t p = 0; p < scene.size(); ++p) {
            parent_scores[p] = aggregate_child_scores(child_scores[p][0], child_scores[p][1], child_scores[p][2]);
            parent_pos[p] = scene[p].mean;
            live += parent_scores[p] > 0.0 ? 1 : 0;
        }
        anchors = effective_anchor_count(cfg, live);
        selected = sample_split_gaussians(parent_pos, parent_scores, children, {anchors, cfg.k, cfg.seed});
    } else {
        std::vector<Eigen::Vector3d> pos(fs.size());
        for (std::size_t i = 0; i < fs.size(); ++i) {
            pos[i] = fs[i].mean;
        }
        anchors = effective_anchor_count(cfg, fs.size());
        selected = sample_gaussians(pos, scores, {anchors, cfg.k, cfg.seed});
    }

    LocalizationMap map;
    switch (cfg.mode) {
    case MapMode::PlugGS:
        map = register_features(fs, selected, weightsets, feature_images);
        break;
    case MapMode::ProjectionAverage:
        map = register_projection_average(fs, selected, cameras, feature_images, cfg.raster);
        break;
    case MapMode::NNUpsample:
        map = nn_upsample(register_features(fs, selected, weightsets, feature_images), cfg.upsample_k);
        break;
    }
    map.meta.mode = to_string(cfg.mode);
    map.meta.tau = cfg.tau;
    map.meta.beta = cfg.split ? std::optional<double>(cfg.beta) : std::nullopt;
    map.meta.seed = cfg.seed;
    map.meta.k = cfg.k;
    map.meta.anchor_count = anchors;
    map.meta.input_gaussians = scene.size();
    map.meta.retained_gaussians = fs.size();
    map.meta.point_count = map.points.size();
    map.meta.extent = scene.extent();
    return map;
}

MapMode parse_map_mode(const std::string& name) {
    if (name == "pluggs") {
        return MapMode::PlugGS;
    }
    if (name == "projection_average") {
        return MapMode::ProjectionAverage;
    }
    if (name == "nn_upsample") {
        return MapMode::NNUpsample;
    }
    throw DomainError("unknown map mode '" + name + "'");
}

std::string to_string(MapMode mode) {
    switch (mode) {
    case MapMode::PlugGS:
        return "pluggs";
    case MapMode::ProjectionAverage:
        return "projection_average";
    case MapMode::NNUpsample:
        return "nn_upsample";
    }
    return "pluggs";
}

namespace {

std::filesystem::path meta_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".json";
    return p;
}

nlohmann::json meta_to_json(const MapMeta& m) {
    return {{"mode", m.mode},
            {"tau", m.tau},
            {"beta", m.beta ? nlohmann::json(*m.beta) : nlohmann::json(nullptr)},
            {"seed", m.seed},
            {"k", m.k},
            {"anchor_count", m.anchor_count},
            {"input_gaussians", m.input_gaussians},
            {"retained_gaussians", m.retained_gaussians},
            {"point_count", m.point_count},
            {"zero_feature_warnings", m.zero_feature_warnings},
            {"extent_min", {m.extent.min.x(), m.extent.min.y(), m.extent.min.z()}},
            {"extent_max", {m.extent.max.x(), m.extent.max.y(), m.extent.max.z()}}};
}

MapMeta meta_from_json(const nlohmann::json& j) {
    MapMeta m;
    m.mode = j.value("mode", "pluggs");
    m.tau = j.value("tau", kDefaultTau);
    if (j.contains("beta") && !j["beta"].is_null()) {
        m.beta = j["beta"].get<double>();
    }
    m.seed = j.value("seed", std::uint64_t{0});
    m.k = j.value("k", kDefaultRegionK);
    m.anchor_count = j.value("anchor_count", std::size_t{0});
    m.input_gaussians = j.value("input_gaussians", std::size_t{0});
    m.retained_gaussians = j.value("retained_gaussians", std::size_t{0});
    m.point_count = j.value("point_count", std::size_t{0});
    m.zero_feature_warnings = j.value("zero_feature_warnings", std::size_t{0});
    if (j.contains("extent_min") && j.contains("extent_max")) {
        const auto lo = j["extent_min"].get<std::array<double, 3>>();
        const auto hi = j["extent_max"].get<std::array<double, 3>>();
        m.extent.min = {lo[0], lo[1], lo[2]};
        m.extent.max = {hi[0], hi[1], hi[2]};
    }
    return m;
}

} // namespace

void write_map(const LocalizationMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const std::uint32_t header[3] = {1u, static_cast<std::uint32_t>(map.points.size()),
                                     static_cast<std::uint32_t>(map.feature_dim)};
    out.write("GSLM", 4);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::vector<float> row(3 + map.feature_dim);
    for (const MapPoint& p : map.points) {
        if (static_cast<std::size_t>(p.descriptor.size()) != map.feature_dim) {
            throw DataError("map point descriptor has the wrong dimension");
        }
        for (int k = 0; k < 3; ++k) {
            row[static_cast<std::size_t>(k)] = static_cast<float>(p.position[k]);
        }
        for (std::size_t d = 0; d < map.feature_dim; ++d) {
            row[3 + d] = static_cast<float>(p.descriptor[static_cast<Eigen::Index>(d)]);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    std::ofstream meta(meta_path(path));
    meta << meta_to_json(map.meta).dump(2) << '\n';
}

LocalizationMap read_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open map file " + path.string());
    }
    char magic[4];
    std::uint32_t header[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "GSLM", 4) != 0) {
        throw SchemaError("not a GSLM map file: " + path.string());
    }
    if (header[0] != 1u) {
        throw SchemaError("unsupported GSLM version " + std::to_string(header[0]));
    }
    LocalizationMap map;
    map.feature_dim = header[2];
    std::vector<float> row(3 + map.feature_dim);
    for (std::uint32_t i = 0; i < header[1]; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
        if (!in) {
            throw SchemaError("map file is truncated");
        }
        MapPoint p;
        p.position = {row[0], row[1], row[2]};
        p.descriptor.resize(static_cast<Eigen::Index>(map.feature_dim));
        for (std::size_t d = 0; d < map.feature_dim; ++d) {
            p.descriptor[static_cast<Eigen::Index>(d)] = row[3 + d];
        }
        map.points.push_back(std::move(p));
    }
    const auto mp = meta_path(path);
    if (std::filesystem::exists(mp)) {
        std::ifstream meta(mp);
        map.meta = meta_from_json(nlohmann::json::parse(meta));
    }
    map.meta.point_count = map.points.size();
    return map;
}

} // namespace gsloc
