// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/harness.hpp"

#include "gsloc/error.hpp"
#include "gsloc/io.hpp"
#include "gsloc/log.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/rng.hpp"
#include "gsloc/splitter.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace gsloc {

namespace {

using nlohmann::json;

Eigen::VectorXd random_unit(Rng& rng, std::size_t dim) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = rng.normal();
    }
    return v / v.norm();
}

double log_uniform(Rng& rng, std::pair<double, double> range) {
    return std::exp(rng.uniform(std::log(range.first), std::log(range.second)));
}

Eigen::Quaterniond random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q;
}

std::string fmt(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json camera_to_json(const CameraView& c) {
    const auto& q = c.pose.rotation_wc;
    const auto& t = c.pose.translation_wc;
    return {{"view_id", c.view_id},
            {"fx", c.intrinsics.fx},
            {"fy", c.intrinsics.fy},
            {"cx", c.intrinsics.cx},
            {"cy", c.intrinsics.cy},
            {"width", c.intrinsics.width},
            {"height", c.intrinsics.height},
            {"q_wc", {q.w(), q.x(), q.y(), q.z()}},
            {"t_wc", {t.x(), t.y(), t.z()}}};
}

std::string view_file(const std::string& prefix, int id) {
    std::ostringstream ss;
    ss << prefix << '_' << id << ".gsfm";
    return ss.str();
}

SyntheticData generate_once(const SceneSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    const double half = 0.5 * spec.extent;
    const std::size_t dim = spec.feature_dim;

    std::vector<Gaussian> gaussians(spec.gaussian_count);
    std::vector<double> features;
    features.reserve(spec.gaussian_count * dim);
    std::vector<Gaussian> blobs;
    std::vector<double> blob_features;
    for (Gaussian& g : gaussians) {
        g.mean = {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
        g.rotation = random_rotation(rng);
        // Log-uniform, matching the log parameterization splat scales live in.
        const double minor = log_uniform(rng, spec.minor_scale_range);
        const double ratio = log_uniform(rng, spec.anisotropy_range);
        g.scale = {minor * ratio, minor, minor};
        g.opacity = rng.uniform(spec.opacity_range.first, spec.opacity_range.second);
        g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
        const Eigen::VectorXd base = random_unit(rng, dim);
        features.insert(features.end(), base.data(), base.data() + base.size());

        if (spec.detail_blobs > 0) {
            const Eigen::VectorXd drift = random_unit(rng, dim);
            const Eigen::Vector3d axis = g.rotation * Eigen::Vector3d::UnitX();
            for (std::size_t b = 0; b < spec.detail_blobs; ++b) {
                // Uniform on [-sqrt3, sqrt3] has the parent's unit variance.
                const double t = rng.uniform(-std::sqrt(3.0), std::sqrt(3.0));
                Gaussian blob = g;
                blob.mean = g.mean + t * g.scale.x() * axis;
                blob.scale.x() = std::max(minor, spec.blob_scale * g.scale.x());
                blobs.push_back(blob);
                const Eigen::VectorXd d = (base + spec.descriptor_gradient * t * drift).normalized();
                blob_features.insert(blob_features.end(), d.data(), d.data() + d.size());
            }
        }
    }

    SyntheticData data;
    data.scene = GaussianScene(std::move(gaussians), dim, std::move(features));
    data.appearance = spec.detail_blobs > 0 ? GaussianScene(std::move(blobs), dim, std::move(blob_features))
                                            : data.scene;

    Intrinsics k;
    k.height = spec.image_size.first;
    k.width = spec.image_size.second;
    k.fx = k.fy = spec.focal_px;
    k.cx = 0.5 * k.width;
    k.cy = 0.5 * k.height;

    for (std::size_t i = 0; i < spec.camera_count; ++i) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(spec.camera_count);
        const double z = (i % 2 == 0 ? 1.0 : -1.0) * spec.ring_height;
        const Eigen::Vector3d eye(spec.ring_radius * std::cos(theta), spec.ring_radius * std::sin(theta), z);
        CameraView cam{k, look_at(eye, Eigen::Vector3d::Zero()), static_cast<int>(i)};
        data.train_features.emplace(cam.view_id, render_feature_image(data.appearance, cam));
        data.train_cameras.push_back(cam);
    }
    for (std::size_t j = 0; j < spec.query_count; ++j) {
        const double theta = 2.0 * std::numbers::pi * (static_cast<double>(j) + 0.5) /
                                 static_cast<double>(spec.query_count) +
                             rng.uniform(-0.05, 0.05);
        const double radius = spec.ring_radius * rng.uniform(0.95, 1.05);
        const double z = rng.uniform(-spec.ring_height, spec.ring_height);
        const Eigen::Vector3d eye(radius * std::cos(theta), radius * std::sin(theta), z);
        const Eigen::Vector3d target(rng.uniform(-0.05, 0.05) * spec.extent, rng.uniform(-0.05, 0.05) * spec.extent,
                                     rng.uniform(-0.05, 0.05) * spec.extent);
        CameraView cam{k, look_at(eye, target), static_cast<int>(1000 + j)};
        FeatureImage f = render_feature_image(data.appearance, cam);
        if (spec.noise > 0.0) {
            const double scale = spec.noise / std::sqrt(static_cast<double>(dim));
            for (int r = 0; r < f.height(); ++r) {
                for (int c = 0; c < f.width(); ++c) {
                    auto px = f.at(r, c);
                    double n2 = 0.0;
                    for (double x : px) {
                        n2 += x * x;
                    }
                    const double mag = std::sqrt(n2);
                    for (double& x : px) {
                        x += scale * mag * rng.normal();
                    }
                }
            }
        }
        data.queries.cameras.push_back(cam);
        data.queries.features.push_back(std::move(f));
    }
    return data;
}

bool every_camera_sees(const SyntheticData& data) {
    auto sees = [&](const CameraView& cam) { return !project_scene(data.scene, cam).empty(); };
    return std::all_of(data.train_cameras.begin(), data.train_cameras.end(), sees) &&
           std::all_of(data.queries.cameras.begin(), data.queries.cameras.end(), sees);
}

} // namespace

void validate(const SceneSpec& s) {
    if (s.gaussian_count == 0 || s.camera_count == 0 || s.feature_dim == 0) {
        throw DataError("scene spec counts (gaussian_count, camera_count, feature_dim) must be positive");
    }
    if (s.image_size.first <= 0 || s.image_size.second <= 0) {
        throw DataError("scene spec image_size must be positive");
    }
    if (!(s.extent > 0.0) || !(s.ring_radius > 0.0) || !(s.focal_px > 0.0)) {
        throw DataError("scene spec extent, ring_radius and focal_px must be positive");
    }
    if (!(s.anisotropy_range.first >= 1.0) || s.anisotropy_range.second < s.anisotropy_range.first) {
        throw DataError("anisotropy_range must satisfy 1 <= min <= max");
    }
    if (!(s.minor_scale_range.first > 0.0) || s.minor_scale_range.second < s.minor_scale_range.first) {
        throw DataError("minor_scale_range must be positive and ordered");
    }
    if (!(s.opacity_range.first > 0.0) || s.opacity_range.second > 1.0 ||
        s.opacity_range.second < s.opacity_range.first) {
        throw DataError("opacity_range must lie in (0, 1] and be ordered");
    }
    if (s.noise < 0.0) {
        throw DataError("noise must be non-negative");
    }
}

SyntheticData generate_synthetic_scene(const SceneSpec& spec) {
    validate(spec);
    for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
        SyntheticData data = generate_once(spec, spec.seed + attempt * 0x9E3779B97F4A7C15ULL);
        if (every_camera_sees(data)) {
            return data;
        }
        warn("synthetic scene attempt " + std::to_string(attempt) + " left a camera without visible Gaussians; regenerating");
    }
    throw DataError("could not generate a scene visible from every camera after 10 attempts");
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError("cannot open scene spec " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError("scene spec is not valid JSON: " + std::string(e.what()));
    }
    SceneSpec s;
    try {
        s.gaussian_count = j.value("gaussian_count", s.gaussian_count);
        s.extent = j.value("extent", s.extent);
        s.anisotropy_range = j.value("anisotropy_range", s.anisotropy_range);
        s.camera_count = j.value("camera_count", s.camera_count);
        s.query_count = j.value("query_count", s.query_count);
        s.ring_radius = j.value("ring_radius", s.ring_radius);
        s.ring_height = j.value("ring_height", s.ring_height);
        s.image_size = j.value("image_size", s.image_size);
        s.focal_px = j.value("focal_px", s.focal_px);
        s.feature_dim = j.value("feature_dim", s.feature_dim);
        s.noise = j.value("noise", s.noise);
        s.seed = j.value("seed", s.seed);
        s.minor_scale_range = j.value("minor_scale_range", s.minor_scale_range);
        s.opacity_range = j.value("opacity_range", s.opacity_range);
        s.detail_blobs = j.value("detail_blobs", s.detail_blobs);
        s.descriptor_gradient = j.value("descriptor_gradient", s.descriptor_gradient);
        s.blob_scale = j.value("blob_scale", s.blob_scale);
    } catch (const json::exception& e) {
        throw SchemaError("malformed scene spec: " + std::string(e.what()));
    }
    return s;
}

void save_scene_spec(const SceneSpec& s, const std::filesystem::path& path) {
    const json j = {{"gaussian_count", s.gaussian_count},
                    {"extent", s.extent},
                    {"anisotropy_range", s.anisotropy_range},
                    {"camera_count", s.camera_count},
                    {"query_count", s.query_count},
                    {"ring_radius", s.ring_radius},
                    {"ring_height", s.ring_height},
                    {"image_size", s.image_size},
                    {"focal_px", s.focal_px},
                    {"feature_dim", s.feature_dim},
                    {"noise", s.noise},
                    {"seed", s.seed},
                    {"minor_scale_range", s.minor_scale_range},
                    {"opacity_range", s.opacity_range},
                    {"detail_blobs", s.detail_blobs},
                    {"descriptor_gradient", s.descriptor_gradient},
                    {"blob_scale", s.blob_scale}};
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

void save_queries(const QuerySet& queries, const std::filesystem::path& path, const std::string& feature_prefix) {
    const std::filesystem::path dir = path.parent_path();
    json list = json::array();
    for (std::size_t i = 0; i < queries.cameras.size(); ++i) {
        const CameraView& cam = queries.cameras[i];
        const std::string rel = view_file(feature_prefix, cam.view_id);
        std::filesystem::create_directories((dir / rel).parent_path());
        write_feature_image(queries.features[i], dir / rel);
        json rec = camera_to_json(cam);
        rec["features"] = rel;
        list.push_back(rec);
    }
    std::ofstream out(path);
    out << json{{"queries", list}}.dump(2) << '\n';
}

QuerySet load_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError("cannot open query file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError("query file is not valid JSON: " + std::string(e.what()));
    }
    // Camera fields share the camera-file schema; reuse its parser.
    const std::filesystem::path tmp = std::filesystem::temp_directory_path() /
                                      ("gsloc_queries_" + std::to_string(std::hash<std::string>{}(path.string())) + ".json");
    json cams = json::array();
    for (const auto& rec : j.at("queries")) {
        cams.push_back(rec);
    }
    {
        std::ofstream out(tmp);
        out << json{{"cameras", cams}}.dump();
    }
    QuerySet qs;
    try {
        qs.cameras = load_cameras(tmp);
    } catch (...) {
        std::filesystem::remove(tmp);
        throw;
    }
    std::filesystem::remove(tmp);
    for (const auto& rec : j.at("queries")) {
        qs.features.push_back(read_feature_image(path.parent_path() / rec.at("features").get<std::string>()));
    }
    return qs;
}

FeatureImageSet load_feature_dir(const std::filesystem::path& dir, std::span<const CameraView> cameras) {
    FeatureImageSet out;
    for (const CameraView& cam : cameras) {
        out.emplace(cam.view_id, read_feature_image(dir / view_file("train", cam.view_id)));
    }
    return out;
}

void save_synthetic(const SyntheticData& data, const SceneSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "features");
    save_scene_spec(spec, dir / "spec.json");
    save_splat_ply(data.scene, dir / "scene.ply");
    save_splat_ply(data.appearance, dir / "appearance.ply");
    save_cameras(data.train_cameras, dir / "train_cameras.json");
    for (const auto& [id, img] : data.train_features) {
        write_feature_image(img, dir / "features" / view_file("train", id));
    }
    save_queries(data.queries, dir / "queries.json", "features/query");
}

SyntheticData load_synthetic(const std::filesystem::path& dir) {
    SyntheticData data;
    data.scene = load_splat_ply(dir / "scene.ply");
    data.appearance = std::filesystem::exists(dir / "appearance.ply") ? load_splat_ply(dir / "appearance.ply")
                                                                       : data.scene;
    data.train_cameras = load_cameras(dir / "train_cameras.json");
    data.train_features = load_feature_dir(dir / "features", data.train_cameras);
    data.queries = load_queries(dir / "queries.json");
    return data;
}

QueryResult localize_query(const FeatureImage& features, const Intrinsics& intrinsics, const LocalizationMap& map,
                           const LocalizeConfig& cfg, int query_id) {
    QueryResult res;
    res.query_id = query_id;
    const auto kps = extract_query_keypoints(features, cfg.keypoints, map.feature_dim);
    res.keypoints = kps.size();
    const auto corr = match(kps, map, cfg.matching);
    res.correspondences = corr.size();
    res.many_to_one = count_many_to_one(corr);
    if (corr.size() < 4) {
        return res;
    }
    RansacConfig rc = cfg.ransac;
    rc.seed = cfg.ransac.seed + static_cast<std::uint64_t>(query_id);
    const PoseEstimate est = solve_pnp_ransac(corr, intrinsics, rc);
    res.success = est.success;
    res.inliers = est.inlier_count;
    res.iterations = est.iterations_run;
    res.runtime_ms = est.runtime_ms;
    res.pose = est.pose;
    return res;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalReport run_eval(const LocalizationMap& map, const QuerySet& queries, const EvalConfig& cfg) {
    if (queries.cameras.empty()) {
        throw DataError("evaluation needs at least one query");
    }
    if (queries.cameras.size() != queries.features.size()) {
        throw DataError("query cameras and feature images differ in count");
    }
    EvalReport rep;
    rep.map_meta = map.meta;
    std::vector<std::size_t> order(queries.cameras.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return queries.cameras[a].view_id < queries.cameras[b].view_id;
    });
    std::vector<double> ts, rs, inl, m2o;
    std::size_t ok25 = 0;
    std::size_t ok50 = 0;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
        const CameraView& cam = queries.cameras[i];
        QueryResult r = localize_query(queries.features[i], cam.intrinsics, map, cfg.localize, cam.view_id);
        if (!cfg.record_timing) {
            r.runtime_ms = 0.0;
        }
        if (r.success) {
            const PoseError e = pose_error(r.pose, cam.pose);
            r.translation_cm = e.translation_cm;
            r.rotation_deg = e.rotation_deg;
        } else {
            r.translation_cm = kInf;
            r.rotation_deg = kInf;
            ++rep.failures;
        }
        ok25 += (r.translation_cm <= 25.0 && r.rotation_deg <= 2.0) ? 1 : 0;
        ok50 += (r.translation_cm <= 50.0 && r.rotation_deg <= 5.0) ? 1 : 0;
        ts.push_back(r.translation_cm);
        rs.push_back(r.rotation_deg);
        inl.push_back(static_cast<double>(r.inliers));
        m2o.push_back(static_cast<double>(r.many_to_one));
        rep.queries.push_back(r);
    }
    const double n = static_cast<double>(rep.queries.size());
    rep.median_translation_cm = median(ts);
    rep.median_rotation_deg = median(rs);
    rep.median_inliers = median(inl);
    rep.median_many_to_one = median(m2o);
    rep.recall_25cm_2deg = static_cast<double>(ok25) / n;
    rep.recall_50cm_5deg = static_cast<double>(ok50) / n;
    return rep;
}

void write_report(const EvalReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json rows = json::array();
    std::ofstream csv(dir / "per_query.csv");
    csv << "query_id,success,translation_cm,rotation_deg,keypoints,correspondences,inliers,many_to_one,iterations,"
           "runtime_ms\n";
    for (const QueryResult& q : rep.queries) {
        csv << q.query_id << ',' << (q.success ? 1 : 0) << ',' << fmt(q.translation_cm) << ',' << fmt(q.rotation_deg)
            << ',' << q.keypoints << ',' << q.correspondences << ',' << q.inliers << ',' << q.many_to_one << ','
            << q.iterations << ',' << fmt(q.runtime_ms) << '\n';
        const auto& qq = q.pose.rotation_wc;
        const auto& tt = q.pose.translation_wc;
        rows.push_back({{"query_id", q.query_id},
                        {"success", q.success},
                        {"translation_cm", finite_or_null(q.translation_cm)},
                        {"rotation_deg", finite_or_null(q.rotation_deg)},
                        {"keypoints", q.keypoints},
                        {"correspondences", q.correspondences},
                        {"inliers", q.inliers},
                        {"many_to_one", q.many_to_one},
                        {"iterations", q.iterations},
                        {"runtime_ms", q.runtime_ms},
                        {"q_wc", {qq.w(), qq.x(), qq.y(), qq.z()}},
                        {"t_wc", {tt.x(), tt.y(), tt.z()}}});
    }
    const MapMeta& m = rep.map_meta;
    const json doc = {
        {"aggregates",
         {{"queries", rep.queries.size()},
          {"failures", rep.failures},
          {"median_translation_cm", finite_or_null(rep.median_translation_cm)},
          {"median_rotation_deg", finite_or_null(rep.median_rotation_deg)},
          {"median_inliers", rep.median_inliers},
          {"median_many_to_one", rep.median_many_to_one},
          {"recall_25cm_2deg", rep.recall_25cm_2deg},
          {"recall_50cm_5deg", rep.recall_50cm_5deg}}},
        {"map",
         {{"mode", m.mode},
          {"tau", m.tau},
          {"beta", m.beta ? json(*m.beta) : json(nullptr)},
          {"seed", m.seed},
          {"anchor_count", m.anchor_count},
          {"point_count", m.point_count},
          {"retained_gaussians", m.retained_gaussians}}},
        {"per_query", rows}};
    std::ofstream out(dir / "report.json");
    out << doc.dump(2) << '\n';
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "tau") {
        return SweepParam::Tau;
    }
    if (name == "beta") {
        return SweepParam::Beta;
    }
    if (name == "map_size") {
        return SweepParam::MapSize;
    }
    throw DomainError("unknown sweep parameter '" + name + "' (expected tau|beta|map_size)");
}

SweepReport sweep(SweepParam param, std::span<const double> values, const SyntheticData& data,
                  const MapConfig& base_map, const EvalConfig& eval) {
    SweepReport rep;
    rep.param = param;
    auto run = [&](double value, const std::string& variant, const MapConfig& cfg) {
        SweepRow row;
        row.value = value;
        row.variant = variant;
        try {
            const LocalizationMap map = build_map(data.scene, data.train_cameras, data.train_features, cfg);
            row.report = run_eval(map, data.queries, eval);
        } catch (const DomainError& e) {
            row.error = e.what();
        } catch (const DataError& e) {
            row.error = e.what();
        }
        rep.rows.push_back(std::move(row));
    };
    for (double v : values) {
        MapConfig cfg = base_map;
        switch (param) {
        case SweepParam::Tau:
            cfg.tau = v;
            run(v, cfg.split ? "split" : "unsplit", cfg);
            break;
        case SweepParam::Beta:
            cfg.split = true;
            cfg.beta = v;
            run(v, "split", cfg);
            break;
        case SweepParam::MapSize: {
            const auto n = static_cast<std::size_t>(std::llround(v));
            MapConfig unsplit = base_map;
            unsplit.split = false;
            unsplit.anchors = n;
            run(v, "unsplit", unsplit);
            MapConfig split = base_map;
            split.split = true;
            split.double_split_anchors = false;
            split.anchors = std::max<std::size_t>(1, n / 3);
            run(v, "split", split);
            break;
        }
        }
    }
    return rep;
}

void write_sweep(const SweepReport& rep, const std::filesystem::path& dir, bool plot) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "sweep.csv");
    csv << "value,variant,median_translation_cm,median_rotation_deg,median_inliers,median_many_to_one,"
           "recall_25cm_2deg,recall_50cm_5deg,point_count,error\n";
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const SweepRow& row = rep.rows[i];
        csv << fmt(row.value) << ',' << row.variant << ',';
        if (row.report) {
            const EvalReport& r = *row.report;
            csv << fmt(r.median_translation_cm) << ',' << fmt(r.median_rotation_deg) << ',' << fmt(r.median_inliers)
                << ',' << fmt(r.median_many_to_one) << ',' << fmt(r.recall_25cm_2deg) << ','
                << fmt(r.recall_50cm_5deg) << ',' << r.map_meta.point_count << ",\n";
            write_report(r, dir / ("row_" + std::to_string(i)));
            if (std::isfinite(r.median_translation_cm)) {
                series[row.variant].emplace_back(row.value, r.median_translation_cm);
            }
        } else {
            std::string err = row.error;
            std::replace(err.begin(), err.end(), ',', ';');
            csv << ",,,,,,,\"" << err << "\"\n";
        }
    }
    if (plot) {
        std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> s(series.begin(), series.end());
        write_png(plot_series(s), dir / "sweep.png");
    }
}

ColorImage plot_series(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                       int height, int width) {
    ColorImage img(height, width, 3);
    for (double& v : img.data()) {
        v = 1.0;
    }
    const int margin = 30;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& [name, pts] : series) {
        for (const auto& [x, y] : pts) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    auto set = [&](int r, int c, const Eigen::Vector3d& col) {
        if (r >= 0 && r < height && c >= 0 && c < width) {
            auto px = img.at(r, c);
            px[0] = col[0];
            px[1] = col[1];
            px[2] = col[2];
        }
    };
    const Eigen::Vector3d black(0, 0, 0);
    for (int c = margin; c < width - margin / 2; ++c) {
        set(height - margin, c, black);
    }
    for (int r = margin / 2; r <= height - margin; ++r) {
        set(r, margin, black);
    }
    if (!std::isfinite(x0)) {
        return img;
    }
    if (x1 == x0) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    y0 = std::min(y0, 0.0);
    if (y1 == y0) {
        y1 = y0 + 1.0;
    }
    auto to_px = [&](double x, double y) {
        const double u = margin + (x - x0) / (x1 - x0) * (width - 2 * margin);
        const double v = (height - margin) - (y - y0) / (y1 - y0) * (height - 2 * margin);
        return Eigen::Vector2d(u, v);
    };
    const Eigen::Vector3d palette[4] = {{0.85, 0.2, 0.2}, {0.2, 0.35, 0.85}, {0.2, 0.65, 0.3}, {0.6, 0.3, 0.7}};
    for (std::size_t s = 0; s < series.size(); ++s) {
        auto pts = series[s].second;
        std::sort(pts.begin(), pts.end());
        const Eigen::Vector3d col = palette[s % 4];
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Eigen::Vector2d p = to_px(pts[i].first, pts[i].second);
            for (int dr = -3; dr <= 3; ++dr) {
                for (int dc = -3; dc <= 3; ++dc) {
                    set(static_cast<int>(p.y()) + dr, static_cast<int>(p.x()) + dc, col);
                }
            }
            if (i + 1 < pts.size()) {
                const Eigen::Vector2d q = to_px(pts[i + 1].first, pts[i + 1].second);
                const int steps = static_cast<int>((q - p).norm()) + 1;
                for (int k = 0; k <= steps; ++k) {
                    const Eigen::Vector2d m = p + (q - p) * (static_cast<double>(k) / steps);
                    set(static_cast<int>(m.y()), static_cast<int>(m.x()), col);
                    set(static_cast<int>(m.y()) + 1, static_cast<int>(m.x()), col);
                }
            }
        }
    }
    return img;
}

} // namespace gsloc
