// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: prints one PASS/FAIL line per criterion. Exit status is 0
// unless --strict is given, in which case any FAIL exits 1.

#include "gsloc/error.hpp"
#include "gsloc/harness.hpp"
#include "gsloc/log.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/splitter.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#ifndef GSLOC_CLI_PATH
#define GSLOC_CLI_PATH "gsloc"
#endif

using namespace gsloc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    g_failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void moment_matching() {
    const auto t0 = Clock::now();
    Rng rng(100);
    double worst_closed = 0, worst_quad = 0;
    for (int i = 0; i < 100; ++i) {
        const double s = rng.uniform(0.01, 10);
        const double beta = rng.uniform(0.01, std::sqrt(3.0) - 0.01);
        const SplitParams p = split_parameters(beta);
        worst_closed = std::max({worst_closed, std::abs(mixture_moment(2, s, p) / (s * s) - 1),
                                 std::abs(mixture_moment(4, s, p) / (3 * std::pow(s, 4)) - 1)});
        const double sd = s * std::sqrt(p.sigma_ratio_sq);
        auto normal = [](double x, double m, double sdev) {
            const double z = (x - m) / sdev;
            return std::exp(-0.5 * z * z) / (sdev * std::sqrt(2 * std::numbers::pi));
        };
        auto density = [&](double x) {
            return p.lambda_side * (normal(x, -beta * s, sd) + normal(x, beta * s, sd)) +
                   p.lambda_center * normal(x, 0, sd);
        };
        const double lim = beta * s + 12 * sd;
        const double m2 = oracle::simpson([&](double x) { return x * x * density(x); }, -lim, lim, 4000);
        const double m4 = oracle::simpson([&](double x) { return x * x * x * x * density(x); }, -lim, lim, 4000);
        worst_quad = std::max({worst_quad, std::abs(m2 / (s * s) - 1), std::abs(m4 / (3 * std::pow(s, 4)) - 1)});
    }
    const double t = seconds_since(t0);
    report(1, worst_closed < 1e-9 && worst_quad < 1e-6 && t < 1.0,
           fmt("closed-form rel err %.2e, quadrature rel err %.2e, %.3f s", worst_closed, worst_quad, t));
}

void split_parameter_values() {
    const SplitParams p = split_parameters(1.4);
    const bool exact = std::abs(p.lambda_center - 2.0 / 3.0) < 1e-15 && std::abs(p.lambda_side - 1.0 / 6.0) < 1e-15 &&
                       std::abs(p.sigma_ratio_sq - (1.0 - 1.96 / 3.0)) < 1e-15;
    bool rejected = true;
    for (double beta : {std::sqrt(3.0), 1.8, 2.5}) {
        try {
            split_parameters(beta);
            rejected = false;
        } catch (const DomainError&) {
        }
    }
    report(2, exact && rejected,
           fmt("l0=%.17g l=%.17g S2/s2=%.17g, beta>=sqrt(3) rejected: %s", p.lambda_center, p.lambda_side,
               p.sigma_ratio_sq, rejected ? "yes" : "no"));
}

void split_throughput() {
    Rng rng(3);
    std::vector<Gaussian> gs(1000000);
    for (auto& g : gs) {
        g.mean = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
        g.rotation = oracle::random_rotation(rng);
        g.scale = {rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
        g.opacity = rng.uniform(0.05, 1);
    }
    const GaussianScene scene(std::move(gs));
    const auto t0 = Clock::now();
    const GaussianScene out = split_scene(scene, 1.4);
    const double t = seconds_since(t0);
    report(3, out.size() == 3000000 && t < 1.0, fmt("10^6 Gaussians -> %zu in %.3f s", out.size(), t));
}

void rasterizer_oracle() {
    const auto t0 = Clock::now();
    Rng rng(4);
    double worst_w = 0, worst_c = 0;
    bool structure = true;
    for (int s = 0; s < 50; ++s) {
        const std::size_t n = 1 + rng.index(200);
        const int h = 8 + static_cast<int>(rng.index(25)), w = 8 + static_cast<int>(rng.index(25));
        const GaussianScene scene = oracle::random_scene(rng, n, 0, 0.8);
        const CameraView cam = oracle::frontal_camera(h, w, rng.uniform(10, 40));
        RasterConfig cfg;
        cfg.tile_size = s % 2 == 0 ? 16 : 4;
        const RenderOutput out = rasterize(scene, cam, 1e-12, cfg);
        const oracle::Render ref = oracle::render(scene, cam);
        std::size_t k = 0;
        for (std::size_t pix = 0; pix < ref.weights.size(); ++pix) {
            for (int ch = 0; ch < 3; ++ch) {
                worst_c = std::max(worst_c, std::abs(out.color.data()[pix * 3 + static_cast<std::size_t>(ch)] -
                                                     ref.color[pix * 3 + static_cast<std::size_t>(ch)]));
            }
            for (const auto& [idx, wgt] : ref.weights[pix]) {
                if (wgt < 1e-12) {
                    continue;
                }
                if (k >= out.contributions.size() || out.contributions[k].gaussian_index != idx) {
                    structure = false;
                    break;
                }
                worst_w = std::max(worst_w, std::abs(out.contributions[k++].weight - wgt));
            }
        }
        structure = structure && k == out.contributions.size();
    }
    const double t = seconds_since(t0);
    report(4, structure && worst_w < 1e-6 && worst_c < 1e-6 && t < 30.0,
           fmt("50 scenes, same contributors: %s, max |dw| %.2e, max |dc| %.2e, %.2f s", structure ? "yes" : "no",
               worst_w, worst_c, t));
}

void split_fidelity() {
    double worst = INFINITY;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneSpec spec;
        spec.gaussian_count = 300;
        spec.anisotropy_range = {2.0, 8.0};
        spec.minor_scale_range = {0.02, 0.05};
        spec.camera_count = 4;
        spec.query_count = 1;
        spec.image_size = {96, 128};
        spec.focal_px = 120;
        spec.feature_dim = 4;
        spec.seed = seed;
        const SyntheticData data = generate_synthetic_scene(spec);
        const GaussianScene split = split_scene(data.scene, 1.4);
        for (const CameraView& cam : data.train_cameras) {
            const ColorImage a = rasterize(data.scene, cam).color;
            const ColorImage b = rasterize(split, cam).color;
            worst = std::min(worst, psnr(a, b));
        }
    }
    report(5, worst >= 30.0, fmt("min PSNR over 20 scenes x 4 views (anisotropy 2-8, opacity 0.5-0.95): %.2f dB", worst));
}

void aggregation_oracle() {
    bool same = true;
    double worst = 0;
    std::size_t sets = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(600 + seed);
        std::vector<Gaussian> gs(80);
        for (auto& g : gs) {
            g.mean = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            g.rotation = oracle::random_rotation(rng);
            g.scale = {rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)};
            g.opacity = rng.uniform(0.1, 0.95);
        }
        const GaussianScene scene(std::move(gs));
        std::vector<CameraView> cams;
        const Eigen::Vector3d eyes[3] = {{4, 0, 0.5}, {-2, 3.5, -0.5}, {-2, -3.5, 1}};
        for (int v = 0; v < 3; ++v) {
            CameraView cam;
            cam.intrinsics = {14, 14, 8, 8, 16, 16};
            cam.pose = look_at(eyes[v], Eigen::Vector3d::Zero());
            cam.view_id = 3 - v;
            cams.push_back(cam);
        }
        for (double tau : {0.01, 0.1}) {
            const auto got = aggregate_weights(scene, cams, tau);
            const auto ref = oracle::informative_weights(scene, cams, tau);
            same = same && got.size() == ref.size();
            for (const auto& ws : got) {
                const auto it = ref.find(ws.gaussian_index);
                if (it == ref.end() || it->second.size() != ws.entries.size()) {
                    same = false;
                    continue;
                }
                ++sets;
                for (std::size_t e = 0; e < ws.entries.size(); ++e) {
                    const auto& a = ws.entries[e];
                    const auto& b = it->second[e];
                    same = same && a.view_id == b.view_id && a.row == b.row && a.col == b.col;
                    worst = std::max(worst, std::abs(a.weight - b.weight));
                }
            }
        }
    }
    report(6, same && worst < 1e-9, fmt("%zu weight sets, identical entries: %s, max |dw| %.2e", sets,
                                        same ? "yes" : "no", worst));
}

// Equal point budget: the split map's anchor count is bisected until its
// point count matches the unsplit map.
LocalizationMap calibrated_split_map(const SyntheticData& data, MapConfig cfg, std::size_t target) {
    std::size_t lo = 1, hi = 3 * data.scene.size();
    LocalizationMap best;
    std::size_t best_gap = SIZE_MAX;
    while (lo <= hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        cfg.anchors = mid;
        LocalizationMap m;
        try {
            m = build_map(data.scene, data.train_cameras, data.train_features, cfg);
        } catch (const DomainError&) {
            hi = mid - 1; // more anchors than candidates
            continue;
        }
        const std::size_t n = m.points.size();
        const std::size_t gap = n > target ? n - target : target - n;
        if (gap < best_gap) {
            best_gap = gap;
            best = std::move(m);
        }
        if (n == target) {
            break;
        }
        if (n < target) {
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    return best;
}

struct Benchmark {
    std::size_t points[3] = {};
    EvalReport def[3], eff[3]; // split, unsplit, projection average
    double extent = 0;
    double seconds = 0;
};

Benchmark run_benchmark() {
    const auto t0 = Clock::now();
    SceneSpec spec;
    spec.gaussian_count = 800;
    spec.extent = 4;
    spec.camera_count = 16;
    spec.query_count = 20;
    spec.ring_radius = 8;
    spec.ring_height = 1;
    spec.image_size = {240, 320};
    spec.focal_px = 600;
    spec.feature_dim = 64;
    spec.noise = 0;
    spec.seed = 0;
    spec.detail_blobs = 8;
    spec.blob_scale = 0.2;
    spec.descriptor_gradient = 1.5;
    spec.minor_scale_range = {0.003, 0.012};
    spec.anisotropy_range = {6, 20};
    const SyntheticData data = generate_synthetic_scene(spec);

    MapConfig unsplit;
    unsplit.k = 1;
    unsplit.tau = 0.1;
    unsplit.anchors = data.scene.size();
    MapConfig split = unsplit;
    split.split = true;
    split.beta = 1.4;
    split.double_split_anchors = false;
    MapConfig projavg = unsplit;
    projavg.mode = MapMode::ProjectionAverage;

    LocalizationMap maps[3];
    maps[1] = build_map(data.scene, data.train_cameras, data.train_features, unsplit);
    maps[0] = calibrated_split_map(data, split, maps[1].points.size());
    projavg.anchors = maps[1].meta.anchor_count;
    maps[2] = build_map(data.scene, data.train_cameras, data.train_features, projavg);

    EvalConfig ev;
    ev.record_timing = false;
    ev.localize.matching.mutual = false;
    ev.localize.keypoints.max_keypoints = 1024;
    EvalConfig ev_eff = ev;
    ev_eff.localize.ransac = RansacConfig::efficient();

    Benchmark b;
    b.extent = data.scene.extent().largest_side();
    for (int i = 0; i < 3; ++i) {
        b.points[i] = maps[i].points.size();
        b.def[i] = run_eval(maps[i], data.queries, ev);
        b.eff[i] = run_eval(maps[i], data.queries, ev_eff);
    }
    b.seconds = seconds_since(t0);
    std::printf("benchmark (%.1f s): points split/unsplit/projavg = %zu/%zu/%zu\n", b.seconds, b.points[0],
                b.points[1], b.points[2]);
    return b;
}

void many_to_one(const Benchmark& b) {
    const double m_split = b.def[0].median_many_to_one, m_un = b.def[1].median_many_to_one;
    const double reduction = m_un > 0 ? 1.0 - m_split / m_un : 0.0;
    const double i_split = b.def[0].median_inliers, i_un = b.def[1].median_inliers;
    report(7, reduction >= 0.2 && i_split > i_un,
           fmt("median many-to-one %.1f -> %.1f (%.0f%% lower, need >=20%%); median inliers %.1f -> %.1f (need higher)",
               m_un, m_split, 100 * reduction, i_un, i_split));
}

void pose_ordering(const Benchmark& b) {
    const double t_split = b.def[0].median_translation_cm, t_plug = b.def[1].median_translation_cm,
                 t_pa = b.def[2].median_translation_cm;
    const double limit = 100.0 * 0.001 * b.extent;
    const bool ordered = t_split <= t_plug && t_plug <= t_pa;
    report(8, ordered && t_split < limit,
           fmt("median t split %.3f, unsplit %.3f, projavg %.3f cm (ordered: %s); split %.3f vs limit %.3f cm",
               t_split, t_plug, t_pa, ordered ? "yes" : "no", t_split, limit));
}

void ransac_stability(const Benchmark& b) {
    auto degradation = [](const EvalReport& d, const EvalReport& e) {
        return (e.median_translation_cm - d.median_translation_cm) / d.median_translation_cm;
    };
    const double ds = degradation(b.def[0], b.eff[0]), du = degradation(b.def[1], b.eff[1]);
    report(9, ds < 0.05 && du > ds,
           fmt("efficient vs default median t change: split %+.1f%% (need <5%%), unsplit %+.1f%% (need > split)",
               100 * ds, 100 * du));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool run(const std::string& cmd) {
    return std::system((cmd + " > /dev/null 2>&1").c_str()) == 0;
}

void end_to_end() {
    const auto t0 = Clock::now();
    const fs::path root = fs::temp_directory_path() / "gsloc_acceptance_e2e";
    fs::remove_all(root);
    fs::create_directories(root);
    SceneSpec spec;
    spec.gaussian_count = 1500;
    spec.anisotropy_range = {1.0, 4.0};
    spec.query_count = 6;
    spec.seed = 7;
    save_scene_spec(spec, root / "spec.json");
    const std::string cli = GSLOC_CLI_PATH;
    bool ok = true;
    for (const char* r : {"a", "b"}) {
        const fs::path d = root / r;
        ok = ok && run(cli + " synth " + (root / "spec.json").string() + " --out " + (d / "scene").string());
        ok = ok && run(cli + " build-map --scene " + (d / "scene").string() + " --seed 3 --out " +
                       (d / "map.gslm").string());
        ok = ok && run(cli + " localize --map " + (d / "map.gslm").string() + " --query-features " +
                       (d / "scene/features/query_1000.gsfm").string() + " --intrinsics " +
                       (d / "scene/train_cameras.json").string() + " --no-timing --out " + (d / "pose.json").string());
        ok = ok && run(cli + " eval --map " + (d / "map.gslm").string() + " --queries " + (d / "scene").string() +
                       " --no-timing --out " + (d / "report").string());
    }
    const double t = seconds_since(t0);
    bool identical = ok;
    for (const char* f : {"report/report.json", "report/per_query.csv", "pose.json", "map.gslm"}) {
        identical = identical && fs::exists(root / "a" / f) && slurp(root / "a" / f) == slurp(root / "b" / f);
    }
    report(10, ok && identical && t < 120.0,
           fmt("two CLI runs synth->build-map->localize->eval: completed %s, byte-identical %s, %.1f s",
               ok ? "yes" : "no", identical ? "yes" : "no", t));
}

} // namespace

int main(int argc, char** argv) {
    const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
    set_warning_handler([](std::string_view) {});
    try {
        moment_matching();
        split_parameter_values();
        split_throughput();
        rasterizer_oracle();
        split_fidelity();
        aggregation_oracle();
        const Benchmark b = run_benchmark();
        many_to_one(b);
        pose_ordering(b);
        ransac_stability(b);
        end_to_end();
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d of 10 criteria failed\n", g_failures);
    return strict && g_failures > 0 ? 1 : 0;
}
