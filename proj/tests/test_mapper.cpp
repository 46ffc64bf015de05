// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/error.hpp"
#include "gsloc/kdtree.hpp"
#include "gsloc/log.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/rng.hpp"
#include "gsloc/splitter.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <set>

using namespace gsloc;

namespace {

struct Fixture {
    GaussianScene scene;
    std::vector<CameraView> cameras;
    FeatureImageSet features;
};

// Three 16x16 views of a random scene around the origin plus unit-ish
// feature images rendered from it.
Fixture three_view_scene(std::uint64_t seed, std::size_t n = 60, std::size_t dim = 6) {
    Rng rng(seed);
    std::vector<Gaussian> gs(n);
    std::vector<double> feats;
    for (auto& g : gs) {
        g.mean = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        g.rotation = oracle::random_rotation(rng);
        g.scale = {rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)};
        g.opacity = rng.uniform(0.1, 0.95);
        for (std::size_t d = 0; d < dim; ++d) {
            feats.push_back(rng.normal());
        }
    }
    Fixture f;
    f.scene = GaussianScene(gs, dim, feats);
    const Eigen::Vector3d eyes[3] = {{4, 0, 0.5}, {-2, 3.5, -0.5}, {-2, -3.5, 1}};
    const int ids[3] = {5, 2, 9};
    for (int v = 0; v < 3; ++v) {
        CameraView cam;
        cam.intrinsics = {14, 14, 8, 8, 16, 16};
        cam.pose = look_at(eyes[v], Eigen::Vector3d::Zero());
        cam.view_id = ids[v];
        f.cameras.push_back(cam);
        f.features.emplace(cam.view_id, render_feature_image(f.scene, cam));
    }
    return f;
}

FeatureImage constant_image(int h, int w, std::vector<double> value) {
    FeatureImage img(h, w, value.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::copy(value.begin(), value.end(), img.at(r, c).begin());
        }
    }
    return img;
}

} // namespace

TEST(AggregateWeights, MatchesEnumerationOracle) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Fixture f = three_view_scene(seed);
        for (double tau : {0.01, 0.1, 0.3}) {
            const auto got = aggregate_weights(f.scene, f.cameras, tau);
            const auto ref = oracle::informative_weights(f.scene, f.cameras, tau);
            ASSERT_EQ(got.size(), ref.size()) << "seed " << seed << " tau " << tau;
            for (const auto& ws : got) {
                const auto it = ref.find(ws.gaussian_index);
                ASSERT_NE(it, ref.end());
                ASSERT_EQ(ws.entries.size(), it->second.size());
                for (std::size_t e = 0; e < ws.entries.size(); ++e) {
                    EXPECT_EQ(ws.entries[e].view_id, it->second[e].view_id);
                    EXPECT_EQ(ws.entries[e].row, it->second[e].row);
                    EXPECT_EQ(ws.entries[e].col, it->second[e].col);
                    EXPECT_NEAR(ws.entries[e].weight, it->second[e].weight, 1e-9);
                }
            }
        }
    }
}

TEST(AggregateWeights, KeepsStrongestSurvivingPixel) {
    // A wide splat whose weight falls off across the image: the entry is its
    // peak pixel, and a faint splat never passes tau.
    CameraView cam = oracle::frontal_camera(16, 16, 20);
    Gaussian wide;
    wide.mean = {0.125, 0.125, 5}; // projects to the center of pixel (8, 8)
    wide.scale = {0.6, 0.6, 0.6};
    wide.opacity = 0.3;
    Gaussian faint = wide;
    faint.mean.z() = 6;
    faint.opacity = 0.05;
    const auto ws = aggregate_weights(GaussianScene({wide, faint}), std::vector<CameraView>{cam}, 0.1);
    ASSERT_EQ(ws.size(), 1u);
    EXPECT_EQ(ws[0].gaussian_index, 0u);
    ASSERT_EQ(ws[0].entries.size(), 1u);
    EXPECT_EQ(ws[0].entries[0].row, 8);
    EXPECT_EQ(ws[0].entries[0].col, 8);
    EXPECT_NEAR(ws[0].entries[0].weight, 0.3, 1e-12);
}

TEST(AggregateWeights, OrderAndWorkerIndependent) {
    Fixture f = three_view_scene(3);
    const auto a = aggregate_weights(f.scene, f.cameras, 0.05);
    std::reverse(f.cameras.begin(), f.cameras.end());
    const auto b = aggregate_weights(f.scene, f.cameras, 0.05, {}, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].entries.size(), b[i].entries.size());
        for (std::size_t e = 0; e < a[i].entries.size(); ++e) {
            EXPECT_EQ(a[i].entries[e].weight, b[i].entries[e].weight);
            EXPECT_EQ(a[i].entries[e].view_id, b[i].entries[e].view_id);
        }
    }
}

TEST(AggregateWeights, RejectsBadInputs) {
    Fixture f = three_view_scene(4);
    EXPECT_THROW(aggregate_weights(f.scene, f.cameras, 0.0), DomainError);
    EXPECT_THROW(aggregate_weights(f.scene, f.cameras, 1.0), DomainError);
    f.cameras[1].view_id = f.cameras[0].view_id;
    EXPECT_THROW(aggregate_weights(f.scene, f.cameras, 0.1), DataError);
}

TEST(Prefilter, RemapsRetainedIndices) {
    std::vector<Gaussian> gs(3);
    gs[2].mean = {1, 1, 1};
    const GaussianScene scene(gs, 1, {0.1, 0.2, 0.3});
    const std::vector<InformativeWeightSet> ws = {{0, {{0, 0, 0, 0.5}}}, {2, {{0, 1, 1, 0.4}}}};
    const PrefilterResult r = prefilter(scene, ws);
    ASSERT_EQ(r.scene.size(), 2u);
    EXPECT_EQ(r.kept, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(r.old_to_new[0], 0u);
    EXPECT_FALSE(r.old_to_new[1]);
    EXPECT_EQ(r.old_to_new[2], 1u);
    EXPECT_EQ(r.scene.feature(1)[0], 0.3);
    const auto remapped = remap_weightsets(ws, r);
    EXPECT_EQ(remapped[1].gaussian_index, 1u);

    const std::vector<InformativeWeightSet> all = {{0, {{0, 0, 0, 1}}}, {1, {{0, 0, 0, 1}}}, {2, {{0, 0, 0, 1}}}};
    EXPECT_EQ(prefilter(scene, all).kept, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_THROW(prefilter(scene, std::vector<InformativeWeightSet>{}), DataError);
}

TEST(Score, MeanOfWeights) {
    EXPECT_DOUBLE_EQ(score({0, {{0, 0, 0, 0.3}, {1, 0, 0, 0.5}}}), 0.4);
    EXPECT_DOUBLE_EQ(score({0, {{0, 0, 0, 0.9}}}), 0.9);
    EXPECT_THROW(score({0, {}}), DataError);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        InformativeWeightSet ws{0, {}};
        long double sum = 0;
        const std::size_t n = 1 + rng.index(40);
        for (std::size_t k = 0; k < n; ++k) {
            const double w = rng.uniform(0.01, 0.99);
            ws.entries.push_back({static_cast<int>(k), 0, 0, w});
            sum += w;
        }
        EXPECT_NEAR(score(ws), static_cast<double>(sum / n), 1e-12);
    }
}

TEST(ChildScores, AverageOverThreeSlots) {
    EXPECT_NEAR(aggregate_child_scores(0.3, 0.6, 0.3), 0.4, 1e-15);
    EXPECT_NEAR(aggregate_child_scores(0, 0.9, 0), 0.3, 1e-15);
    EXPECT_EQ(aggregate_child_scores(0, 0, 0), 0.0);
}

TEST(Sampling, SingleRegionKeepsMax) {
    const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}};
    const std::vector<double> s = {0.2, 0.5, 0.3};
    EXPECT_EQ(sample_gaussians(pos, s, {1, 2, 0}), (std::vector<std::size_t>{1}));
    EXPECT_EQ(sample_gaussians(pos, s, {3, 2, 9}), (std::vector<std::size_t>{1}));
}

TEST(Sampling, DisjointRegionsAndTies) {
    const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.1, 0, 0}, {10, 0, 0}, {10.1, 0, 0}};
    const std::vector<double> s = {0.2, 0.7, 0.4, 0.4};
    EXPECT_EQ(sample_gaussians(pos, s, {4, 1, 0}), (std::vector<std::size_t>{1, 2}));
}

TEST(Sampling, ZeroScoresAreNotCandidates) {
    const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.1, 0, 0}, {0.2, 0, 0}};
    const std::vector<double> s = {0.0, 0.2, 0.0};
    EXPECT_EQ(sample_gaussians(pos, s, {1, 2, 0}), (std::vector<std::size_t>{1}));
    EXPECT_THROW(sample_gaussians(pos, s, {2, 2, 0}), DomainError);
    EXPECT_THROW(sample_gaussians(pos, s, {1, 0, 0}), DomainError);
}

TEST(Sampling, FullCoverageEqualsBruteForceRegionArgmax) {
    Rng rng(17);
    for (const std::size_t n : {50u, 400u, 1000u}) {
        std::vector<Eigen::Vector3d> pos;
        std::vector<double> s;
        for (std::size_t i = 0; i < n; ++i) {
            pos.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            s.push_back(std::round(rng.uniform(0, 1) * 20) / 20 + 0.01); // coarse values force ties
        }
        const std::size_t k = 5;
        const auto got = sample_gaussians(pos, s, {n, k, 3});
        std::set<std::size_t> ref;
        for (std::size_t a = 0; a < n; ++a) {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                const double dx = (pos[x] - pos[a]).squaredNorm(), dy = (pos[y] - pos[a]).squaredNorm();
                return dx != dy ? dx < dy : x < y;
            });
            std::size_t best = order[0];
            for (std::size_t m = 0; m <= k; ++m) {
                const std::size_t c = order[m];
                if (s[c] > s[best] || (s[c] == s[best] && c < best)) {
                    best = c;
                }
            }
            ref.insert(best);
        }
        EXPECT_EQ(got, std::vector<std::size_t>(ref.begin(), ref.end())) << "n = " << n;
    }
}

TEST(Sampling, SeededAndSorted) {
    Rng rng(4);
    std::vector<Eigen::Vector3d> pos;
    std::vector<double> s;
    for (int i = 0; i < 300; ++i) {
        pos.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        s.push_back(rng.uniform(0.01, 1));
    }
    const auto a = sample_gaussians(pos, s, {40, 4, 11});
    EXPECT_EQ(a, sample_gaussians(pos, s, {40, 4, 11}));
    EXPECT_NE(a, sample_gaussians(pos, s, {40, 4, 12}));
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_LE(a.size(), 40u);
}

TEST(Sampling, SplitModeEmitsSurvivingChildren) {
    // Two clusters of two parents; each cluster keeps its best parent, which
    // expands to every child that survived prefiltering.
    const std::vector<Eigen::Vector3d> parents = {{0, 0, 0}, {0.1, 0, 0}, {5, 0, 0}, {5.1, 0, 0}};
    const std::vector<double> ps = {0.5, 0.1, 0.2, 0.05};
    const std::vector<std::vector<std::size_t>> kids = {{0, 1, 2}, {3}, {4, 5}, {6}};
    EXPECT_EQ(sample_split_gaussians(parents, ps, kids, {4, 1, 0}), (std::vector<std::size_t>{0, 1, 2, 4, 5}));
    EXPECT_EQ(sample_split_gaussians(parents, ps, kids, {4, 3, 0}), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_THROW(sample_split_gaussians(parents, ps, std::vector<std::vector<std::size_t>>(2), {1, 1, 0}), DataError);
}

TEST(Register, SingletonSoftmaxIsThePixelFeature) {
    std::vector<Gaussian> gs(1);
    const GaussianScene scene(gs);
    FeatureImageSet imgs;
    imgs.emplace(0, constant_image(2, 2, {3, 4}));
    const auto map = register_features(scene, std::vector<std::size_t>{0},
                                       std::vector<InformativeWeightSet>{{0, {{0, 1, 1, 0.7}}}}, imgs);
    ASSERT_EQ(map.points.size(), 1u);
    EXPECT_NEAR(map.points[0].descriptor[0], 0.6, 1e-15);
    EXPECT_NEAR(map.points[0].descriptor[1], 0.8, 1e-15);
}

TEST(Register, SoftmaxOfTwoViews) {
    std::vector<Gaussian> gs(1);
    FeatureImageSet imgs;
    imgs.emplace(0, constant_image(2, 2, {1, 0, 0}));
    imgs.emplace(1, constant_image(2, 2, {0, 2, 0}));
    const auto map = register_features(GaussianScene(gs), std::vector<std::size_t>{0},
                                       std::vector<InformativeWeightSet>{{0, {{0, 0, 0, 0.3}, {1, 1, 0, 0.5}}}}, imgs);
    const double e3 = std::exp(0.3), e5 = std::exp(0.5);
    EXPECT_NEAR(map.points[0].descriptor[0], e3 / (e3 + e5), 1e-15);
    EXPECT_NEAR(map.points[0].descriptor[1], e5 / (e3 + e5), 1e-15);
    EXPECT_NEAR(map.points[0].descriptor[0], 0.45017, 1e-5);
    EXPECT_NEAR(map.points[0].descriptor[1], 0.54983, 1e-5);
    EXPECT_EQ(map.points[0].descriptor[2], 0.0);
}

TEST(Register, IdenticalFeaturesIgnoreWeights) {
    std::vector<Gaussian> gs(1);
    FeatureImageSet imgs;
    for (int v = 0; v < 4; ++v) {
        imgs.emplace(v, constant_image(3, 3, {1, -2, 2}));
    }
    const auto map = register_features(
        GaussianScene(gs), std::vector<std::size_t>{0},
        std::vector<InformativeWeightSet>{{0, {{0, 0, 0, 0.1}, {1, 1, 1, 0.9}, {2, 2, 2, 0.5}, {3, 0, 2, 0.2}}}}, imgs);
    EXPECT_TRUE(map.points[0].descriptor.isApprox(Eigen::Vector3d(1, -2, 2) / 3.0, 1e-14));
}

TEST(Register, MissingWeightSetOrViewIsAnError) {
    std::vector<Gaussian> gs(2);
    FeatureImageSet imgs;
    imgs.emplace(0, constant_image(2, 2, {1, 0}));
    const std::vector<InformativeWeightSet> ws = {{0, {{0, 0, 0, 0.5}}}};
    EXPECT_THROW(register_features(GaussianScene(gs), std::vector<std::size_t>{1}, ws, imgs), DataError);
    const std::vector<InformativeWeightSet> other_view = {{0, {{7, 0, 0, 0.5}}}};
    EXPECT_THROW(register_features(GaussianScene(gs), std::vector<std::size_t>{0}, other_view, imgs), DataError);
}

TEST(BuildMap, MatchesStepByStepComposition) {
    auto silence = set_warning_handler([](std::string_view) {});
    const Fixture f = three_view_scene(21, 120);
    MapConfig cfg;
    cfg.anchors = 40;
    cfg.seed = 5;
    const LocalizationMap map = build_map(f.scene, f.cameras, f.features, cfg);

    const auto first = aggregate_weights(f.scene, f.cameras, cfg.tau);
    const PrefilterResult pf = prefilter(f.scene, first);
    const auto ws = aggregate_weights(pf.scene, f.cameras, cfg.tau);
    std::vector<double> scores(pf.scene.size(), 0.0);
    std::vector<Eigen::Vector3d> pos;
    for (const auto& w : ws) {
        scores[w.gaussian_index] = score(w);
    }
    for (const auto& g : pf.scene.gaussians()) {
        pos.push_back(g.mean);
    }
    const auto sel = sample_gaussians(pos, scores, {40, cfg.k, 5});
    const LocalizationMap manual = register_features(pf.scene, sel, ws, f.features);
    ASSERT_EQ(map.points.size(), manual.points.size());
    for (std::size_t i = 0; i < map.points.size(); ++i) {
        EXPECT_EQ(map.points[i].position, manual.points[i].position);
        EXPECT_EQ(map.points[i].descriptor, manual.points[i].descriptor);
    }
    EXPECT_EQ(map.meta.anchor_count, 40u);
    EXPECT_EQ(map.meta.retained_gaussians, pf.scene.size());
    set_warning_handler(silence);
}

TEST(BuildMap, InvariantsAndSplitBound) {
    auto silence = set_warning_handler([](std::string_view) {});
    const Fixture f = three_view_scene(22, 150);
    MapConfig cfg;
    cfg.anchors = 30;
    const LocalizationMap plain = build_map(f.scene, f.cameras, f.features, cfg);
    cfg.split = true;
    const LocalizationMap split = build_map(f.scene, f.cameras, f.features, cfg);
    EXPECT_EQ(split.meta.anchor_count, 60u) << "anchors double when splitting";
    EXPECT_LE(split.points.size(), 3 * split.meta.anchor_count);
    cfg.double_split_anchors = false;
    const LocalizationMap split_same = build_map(f.scene, f.cameras, f.features, cfg);
    EXPECT_LE(split_same.points.size(), 3u * 30u);
    ASSERT_TRUE(split.meta.beta);
    EXPECT_EQ(*split.meta.beta, 1.4);
    for (const auto* m : {&plain, &split, &split_same}) {
        for (const MapPoint& p : m->points) {
            EXPECT_LE(p.descriptor.norm(), 1.0 + 1e-6);
            EXPECT_TRUE(f.scene.extent().contains(p.position, 3.0)) << "children may leave the parent box";
        }
    }
    for (const MapPoint& p : plain.points) {
        EXPECT_TRUE(f.scene.extent().contains(p.position));
    }
    cfg.beta = 1.8;
    EXPECT_THROW(build_map(f.scene, f.cameras, f.features, cfg), DomainError);
    set_warning_handler(silence);
}

TEST(BuildMap, BaselinesAndFileRoundTrip) {
    auto silence = set_warning_handler([](std::string_view) {});
    const Fixture f = three_view_scene(23, 100);
    MapConfig cfg;
    cfg.anchors = 25;
    const LocalizationMap plug = build_map(f.scene, f.cameras, f.features, cfg);
    cfg.mode = MapMode::ProjectionAverage;
    const LocalizationMap proj = build_map(f.scene, f.cameras, f.features, cfg);
    ASSERT_EQ(proj.points.size(), plug.points.size());
    for (std::size_t i = 0; i < proj.points.size(); ++i) {
        EXPECT_EQ(proj.points[i].position, plug.points[i].position) << "same sampling";
        EXPECT_LE(proj.points[i].descriptor.norm(), 1.0 + 1e-9);
    }
    cfg.mode = MapMode::NNUpsample;
    const LocalizationMap up = build_map(f.scene, f.cameras, f.features, cfg);
    EXPECT_GT(up.points.size(), plug.points.size());
    EXPECT_EQ(up.meta.mode, "nn_upsample");

    const auto path = std::filesystem::temp_directory_path() / "gsloc_test_map.gslm";
    write_map(plug, path);
    const LocalizationMap back = read_map(path);
    ASSERT_EQ(back.points.size(), plug.points.size());
    EXPECT_EQ(back.feature_dim, plug.feature_dim);
    EXPECT_EQ(back.meta.anchor_count, plug.meta.anchor_count);
    EXPECT_EQ(back.meta.mode, "pluggs");
    for (std::size_t i = 0; i < back.points.size(); ++i) {
        EXPECT_TRUE(back.points[i].position.isApprox(plug.points[i].position, 1e-6));
        EXPECT_TRUE(back.points[i].descriptor.isApprox(plug.points[i].descriptor, 1e-6));
    }
    EXPECT_THROW(parse_map_mode("cosine"), DomainError);
    EXPECT_THROW(read_map(std::filesystem::temp_directory_path() / "gsloc_no_such.gslm"), SchemaError);
    set_warning_handler(silence);
}
