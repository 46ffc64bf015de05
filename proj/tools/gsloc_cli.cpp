// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

// gsloc command-line tool: synthetic data, splitting, rendering, map
// building, localization, evaluation and parameter sweeps.

#include "gsloc/error.hpp"
#include "gsloc/harness.hpp"
#include "gsloc/io.hpp"
#include "gsloc/localizer.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/splitter.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitLocalization = 3;

struct MapFlags {
    double tau = gsloc::kDefaultTau;
    std::size_t anchors = 0; // 0 selects the default
    std::size_t k = gsloc::kDefaultRegionK;
    bool split = false;
    double beta = gsloc::kDefaultBeta;
    std::uint64_t seed = 0;
    std::string mode = "pluggs";
    bool no_anchor_doubling = false;
    int workers = 1;

    void add(CLI::App* app) {
        app->add_option("--tau", tau, "primary-Gaussian weight threshold")->capture_default_str();
        app->add_option("--anchors", anchors, "anchor Gaussians to sample (0 = default)")->capture_default_str();
        app->add_option("--k", k, "neighbors per local region")->capture_default_str();
        app->add_flag("--split", split, "split Gaussians along their major axis first");
        app->add_option("--beta", beta, "split offset in major-axis standard deviations")->capture_default_str();
        app->add_option("--seed", seed, "sampling seed")->capture_default_str();
        app->add_option("--mode", mode, "registration mode: pluggs|projection_average|nn_upsample")
            ->capture_default_str();
        app->add_flag("--no-anchor-doubling", no_anchor_doubling, "keep the anchor count unchanged when splitting");
        app->add_option("--workers", workers, "rasterizer threads")->capture_default_str();
    }

    gsloc::MapConfig config() const {
        gsloc::MapConfig cfg;
        cfg.tau = tau;
        if (anchors > 0) {
            cfg.anchors = anchors;
        }
        cfg.k = k;
        cfg.split = split;
        cfg.beta = beta;
        cfg.seed = seed;
        cfg.mode = gsloc::parse_map_mode(mode);
        cfg.double_split_anchors = !no_anchor_doubling;
        cfg.workers = workers;
        cfg.raster.workers = workers;
        return cfg;
    }
};

struct LocalizeFlags {
    std::string preset = "default";
    bool one_way = false;
    double min_similarity = gsloc::MatchConfig{}.min_similarity;
    std::size_t max_keypoints = gsloc::KeypointConfig{}.max_keypoints;
    double reprojection_px = gsloc::RansacConfig{}.reprojection_px;
    std::uint64_t ransac_seed = 0;

    void add(CLI::App* app) {
        app->add_option("--preset", preset, "RANSAC preset: efficient|default")->capture_default_str();
        app->add_flag("--one-way", one_way, "disable mutual nearest-neighbor matching");
        app->add_option("--min-similarity", min_similarity, "minimum cosine similarity")->capture_default_str();
        app->add_option("--max-keypoints", max_keypoints, "query keypoint budget")->capture_default_str();
        app->add_option("--reprojection-px", reprojection_px, "inlier threshold in pixels")->capture_default_str();
        app->add_option("--ransac-seed", ransac_seed, "RANSAC seed")->capture_default_str();
    }

    gsloc::LocalizeConfig config() const {
        gsloc::LocalizeConfig cfg;
        cfg.ransac = gsloc::RansacConfig::preset(preset);
        cfg.ransac.reprojection_px = reprojection_px;
        cfg.ransac.seed = ransac_seed;
        cfg.matching.mutual = !one_way;
        cfg.matching.min_similarity = min_similarity;
        cfg.keypoints.max_keypoints = max_keypoints;
        return cfg;
    }
};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw gsloc::SchemaError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw gsloc::SchemaError(path.string() + " is not valid JSON: " + e.what());
    }
}

gsloc::Intrinsics load_intrinsics(const fs::path& path) {
    const json j = read_json(path);
    const json& rec = j.contains("cameras") ? j.at("cameras").at(0) : j;
    gsloc::Intrinsics k;
    try {
        k.fx = rec.at("fx").get<double>();
        k.fy = rec.at("fy").get<double>();
        k.cx = rec.at("cx").get<double>();
        k.cy = rec.at("cy").get<double>();
        k.width = rec.at("width").get<int>();
        k.height = rec.at("height").get<int>();
    } catch (const json::exception& e) {
        throw gsloc::SchemaError("intrinsics record: " + std::string(e.what()));
    }
    return k;
}

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::string item;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ',') {
            if (!item.empty()) {
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(item, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != item.size()) {
                    throw CLI::ValidationError("--values", "not a number: '" + item + "'");
                }
                out.push_back(v);
            }
            item.clear();
        } else if (text[i] != ' ') {
            item.push_back(text[i]);
        }
    }
    if (out.empty()) {
        throw CLI::ValidationError("--values", "expected a comma-separated list");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-splatting visual localization toolkit"};
    app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
    app.require_subcommand(1);

    // synth
    std::string synth_spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene directory from a scene spec");
    synth->add_option("spec", synth_spec, "scene spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output directory")->required();

    // split
    std::string split_in;
    std::string split_out;
    double split_beta = gsloc::kDefaultBeta;
    auto* split = app.add_subcommand("split", "split every Gaussian of a scene into three");
    split->add_option("--input", split_in, "input splat PLY")->required()->check(CLI::ExistingFile);
    split->add_option("--beta", split_beta, "offset in major-axis standard deviations")->capture_default_str();
    split->add_option("--out", split_out, "output splat PLY")->required();

    // render
    std::string render_scene;
    std::string render_cameras;
    std::string render_out;
    std::optional<int> render_view;
    bool render_features = false;
    auto* render = app.add_subcommand("render", "render color (and feature) images of a scene");
    render->add_option("--scene", render_scene, "splat PLY")->required()->check(CLI::ExistingFile);
    render->add_option("--camera", render_cameras, "camera JSON")->required()->check(CLI::ExistingFile);
    render->add_option("--view", render_view, "render only this view id");
    render->add_flag("--features", render_features, "also write feature images");
    render->add_option("--out", render_out, "output directory")->required();

    // build-map
    std::string bm_scene;
    std::string bm_cameras;
    std::string bm_features;
    std::string bm_out;
    MapFlags bm_flags;
    auto* build = app.add_subcommand("build-map", "build a localization map from training views");
    build->add_option("--scene", bm_scene, "splat PLY with descriptors, or a synthetic scene directory")
        ->required()
        ->check(CLI::ExistingPath);
    build->add_option("--cameras", bm_cameras, "training camera JSON (default: <scene dir>/train_cameras.json)");
    build->add_option("--features", bm_features, "directory of train_<id>.gsfm (default: <scene dir>/features)");
    build->add_option("--out", bm_out, "output map file")->required();
    bm_flags.add(build);

    // localize
    std::string loc_map;
    std::string loc_features;
    std::string loc_intrinsics;
    std::string loc_out;
    bool loc_no_timing = false;
    LocalizeFlags loc_flags;
    auto* localize = app.add_subcommand("localize", "estimate the pose of one query feature image");
    localize->add_option("--map", loc_map, "map file")->required()->check(CLI::ExistingFile);
    localize->add_option("--query-features", loc_features, "query feature image (.gsfm)")
        ->required()
        ->check(CLI::ExistingFile);
    localize->add_option("--intrinsics", loc_intrinsics, "JSON with fx fy cx cy width height")
        ->required()
        ->check(CLI::ExistingFile);
    localize->add_option("--out", loc_out, "pose JSON (default: stdout)");
    localize->add_flag("--no-timing", loc_no_timing, "write runtime_ms = 0");
    loc_flags.add(localize);

    // eval
    std::string ev_map;
    std::string ev_queries;
    std::string ev_out;
    bool ev_no_timing = false;
    LocalizeFlags ev_flags;
    auto* eval = app.add_subcommand("eval", "localize every query and write a report");
    eval->add_option("--map", ev_map, "map file")->required()->check(CLI::ExistingFile);
    eval->add_option("--queries", ev_queries, "queries JSON or synthetic scene directory")
        ->required()
        ->check(CLI::ExistingPath);
    eval->add_option("--out", ev_out, "report directory")->required();
    eval->add_flag("--no-timing", ev_no_timing, "write runtime_ms = 0 for reproducible reports");
    ev_flags.add(eval);

    // sweep
    std::string sw_param;
    std::string sw_values;
    std::string sw_scene;
    std::string sw_out;
    bool sw_no_plot = false;
    bool sw_no_timing = false;
    MapFlags sw_map;
    LocalizeFlags sw_loc;
    auto* sweep = app.add_subcommand("sweep", "evaluate over a list of tau, beta or map-size values");
    sweep->add_option("--param", sw_param, "tau|beta|map_size")->required();
    sweep->add_option("--values", sw_values, "comma-separated values")->required();
    sweep->add_option("--scene", sw_scene, "synthetic scene directory")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--out", sw_out, "output directory")->required();
    sweep->add_flag("--no-plot", sw_no_plot, "skip sweep.png");
    sweep->add_flag("--no-timing", sw_no_timing, "write runtime_ms = 0");
    sw_map.add(sweep);
    sw_loc.add(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) {
            const gsloc::SceneSpec spec = gsloc::load_scene_spec(synth_spec);
            const gsloc::SyntheticData data = gsloc::generate_synthetic_scene(spec);
            gsloc::save_synthetic(data, spec, synth_out);
            std::cout << "wrote " << data.scene.size() << " Gaussians, " << data.train_cameras.size()
                      << " training views and " << data.queries.cameras.size() << " queries to " << synth_out << '\n';
        } else if (*split) {
            const gsloc::GaussianScene scene = gsloc::load_splat_ply(split_in);
            const gsloc::GaussianScene out = gsloc::split_scene(scene, split_beta);
            gsloc::save_splat_ply(out, split_out);
            std::cout << "split " << scene.size() << " -> " << out.size() << " Gaussians\n";
        } else if (*render) {
            const gsloc::GaussianScene scene = gsloc::load_splat_ply(render_scene);
            const auto cameras = gsloc::load_cameras(render_cameras);
            fs::create_directories(render_out);
            std::size_t written = 0;
            for (const auto& cam : cameras) {
                if (render_view && cam.view_id != *render_view) {
                    continue;
                }
                const bool feats = render_features && scene.feature_dim() > 0;
                const auto out = gsloc::rasterize(scene, cam, 1.0, {}, feats);
                const std::string stem = "view_" + std::to_string(cam.view_id);
                gsloc::write_png(out.color, fs::path(render_out) / (stem + ".png"));
                if (feats) {
                    gsloc::write_feature_image(out.features, fs::path(render_out) / (stem + ".gsfm"));
                }
                ++written;
            }
            if (written == 0) {
                throw gsloc::DataError("no camera matched the requested view");
            }
        } else if (*build) {
            const fs::path scene_path(bm_scene);
            const bool is_dir = fs::is_directory(scene_path);
            const fs::path ply = is_dir ? scene_path / "scene.ply" : scene_path;
            const fs::path cams = !bm_cameras.empty() ? fs::path(bm_cameras) : scene_path / "train_cameras.json";
            const fs::path feats = !bm_features.empty() ? fs::path(bm_features) : scene_path / "features";
            if (!is_dir && (bm_cameras.empty() || bm_features.empty())) {
                throw CLI::RequiredError("--cameras and --features (required when --scene is a PLY file)");
            }
            const gsloc::GaussianScene scene = gsloc::load_splat_ply(ply);
            const auto cameras = gsloc::load_cameras(cams);
            const auto features = gsloc::load_feature_dir(feats, cameras);
            const gsloc::LocalizationMap map = gsloc::build_map(scene, cameras, features, bm_flags.config());
            gsloc::write_map(map, bm_out);
            std::cout << "map with " << map.points.size() << " points (" << map.meta.retained_gaussians
                      << " Gaussians retained of " << map.meta.input_gaussians << ")\n";
        } else if (*localize) {
            const gsloc::LocalizationMap map = gsloc::read_map(loc_map);
            const gsloc::FeatureImage img = gsloc::read_feature_image(loc_features);
            const gsloc::Intrinsics k = load_intrinsics(loc_intrinsics);
            gsloc::QueryResult r = gsloc::localize_query(img, k, map, loc_flags.config());
            if (loc_no_timing) {
                r.runtime_ms = 0.0;
            }
            const auto& q = r.pose.rotation_wc;
            const auto& t = r.pose.translation_wc;
            const json rec = {{"success", r.success},
                              {"q_wc", {q.w(), q.x(), q.y(), q.z()}},
                              {"t_wc", {t.x(), t.y(), t.z()}},
                              {"inlier_count", r.inliers},
                              {"many_to_one_count", r.many_to_one},
                              {"keypoints", r.keypoints},
                              {"correspondences", r.correspondences},
                              {"iterations", r.iterations},
                              {"runtime_ms", r.runtime_ms}};
            if (loc_out.empty()) {
                std::cout << rec.dump(2) << '\n';
            } else {
                write_json(rec, loc_out);
            }
            if (!r.success) {
                std::cerr << "localization failed: " << r.correspondences << " correspondences, " << r.inliers
                          << " inliers\n";
                return kExitLocalization;
            }
        } else if (*eval) {
            const gsloc::LocalizationMap map = gsloc::read_map(ev_map);
            const fs::path qp(ev_queries);
            const gsloc::QuerySet queries = gsloc::load_queries(fs::is_directory(qp) ? qp / "queries.json" : qp);
            gsloc::EvalConfig cfg;
            cfg.localize = ev_flags.config();
            cfg.record_timing = !ev_no_timing;
            const gsloc::EvalReport rep = gsloc::run_eval(map, queries, cfg);
            gsloc::write_report(rep, ev_out);
            std::printf("median %.3f cm / %.4f deg, recall(25cm,2deg) %.3f, %zu failures\n",
                        rep.median_translation_cm, rep.median_rotation_deg, rep.recall_25cm_2deg, rep.failures);
        } else if (*sweep) {
            const gsloc::SweepParam param = gsloc::parse_sweep_param(sw_param);
            const std::vector<double> values = parse_values(sw_values);
            const gsloc::SyntheticData data = gsloc::load_synthetic(sw_scene);
            gsloc::EvalConfig cfg;
            cfg.localize = sw_loc.config();
            cfg.record_timing = !sw_no_timing;
            const gsloc::SweepReport rep = gsloc::sweep(param, values, data, sw_map.config(), cfg);
            gsloc::write_sweep(rep, sw_out, !sw_no_plot);
            std::size_t errors = 0;
            for (const auto& row : rep.rows) {
                errors += row.report ? 0 : 1;
            }
            std::cout << rep.rows.size() << " sweep rows (" << errors << " rejected) written to " << sw_out << '\n';
        }
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const gsloc::LocalizationFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitLocalization;
    } catch (const gsloc::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}
