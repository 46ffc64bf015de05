// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/rasterizer.hpp"

#include "gsloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace gsloc {

std::optional<ScreenGaussian> project_gaussian(const Gaussian& g, const CameraView& cam, const RasterConfig& cfg,
                                               std::size_t source_index) {
    const Eigen::Matrix3d w = cam.pose.rotation();
    const Eigen::Vector3d p = w * g.mean + cam.pose.translation_wc;
    if (!(p.z() > cfg.near_plane)) {
        return std::nullopt;
    }
    const Intrinsics& k = cam.intrinsics;
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> jw = j * w;
    Eigen::Matrix2d cov = jw * covariance_of(g) * jw.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += cfg.low_pass;
    cov(1, 1) += cfg.low_pass;
    const double det = cov.determinant();
    if (!(det > 0.0)) {
        return std::nullopt;
    }

    ScreenGaussian sg;
    sg.source_index = source_index;
    sg.mean2d = {k.fx * p.x() * iz + k.cx, k.fy * p.y() * iz + k.cy};
    sg.cov2d = cov;
    sg.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    sg.depth = p.z();
    sg.opacity = g.opacity;

    // Exact bounding box of the support ellipse, padded by a pixel so the
    // per-pixel support test alone decides membership.
    const double hx = cfg.support_sigma * std::sqrt(cov(0, 0));
    const double hy = cfg.support_sigma * std::sqrt(cov(1, 1));
    const double c0 = std::floor(sg.mean2d.x() - hx - 0.5) - 1.0;
    const double c1 = std::ceil(sg.mean2d.x() + hx - 0.5) + 1.0;
    const double r0 = std::floor(sg.mean2d.y() - hy - 0.5) - 1.0;
    const double r1 = std::ceil(sg.mean2d.y() + hy - 0.5) + 1.0;
    if (!std::isfinite(c0) || !std::isfinite(c1) || !std::isfinite(r0) || !std::isfinite(r1) || c1 < 0.0 ||
        r1 < 0.0 || c0 > k.width - 1 || r0 > k.height - 1) {
        return std::nullopt;
    }
    sg.col_min = static_cast<int>(std::max(c0, 0.0));
    sg.col_max = static_cast<int>(std::min(c1, static_cast<double>(k.width - 1)));
    sg.row_min = static_cast<int>(std::max(r0, 0.0));
    sg.row_max = static_cast<int>(std::min(r1, static_cast<double>(k.height - 1)));
    return sg;
}

std::vector<ScreenGaussian> project_scene(const GaussianScene& scene, const CameraView& cam, const RasterConfig& cfg) {
    std::vector<ScreenGaussian> out;
    out.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (auto sg = project_gaussian(scene[i], cam, cfg, i)) {
            out.push_back(*sg);
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ScreenGaussian& a, const ScreenGaussian& b) { return a.depth < b.depth; });
    return out;
}

namespace {

struct TileJob {
    int row0, row1, col0, col1;
    std::vector<const ScreenGaussian*> splats;
    std::vector<PixelContribution> contributions;
};

void render_tile(TileJob& tile, const GaussianScene& scene, const RasterConfig& cfg, double floor,
                 RenderOutput& out, bool with_features) {
    const std::size_t dim = scene.feature_dim();
    for (int r = tile.row0; r < tile.row1; ++r) {
        for (int c = tile.col0; c < tile.col1; ++c) {
            const double px = c + 0.5;
            const double py = r + 0.5;
            auto color = out.color.at(r, c);
            double t = 1.0;
            for (const ScreenGaussian* sg : tile.splats) {
                if (r < sg->row_min || r > sg->row_max || c < sg->col_min || c > sg->col_max) {
                    continue;
                }
                const double q = splat_distance2(*sg, px, py);
                if (q > cfg.support_sigma * cfg.support_sigma) {
                    continue;
                }
                const double a = std::min(cfg.alpha_clamp, sg->opacity * std::exp(-0.5 * q));
                const double next = t * (1.0 - a);
                if (next < cfg.transmittance_stop) {
                    break;
                }
                const double w = a * t;
                const Gaussian& g = scene[sg->source_index];
                for (int k = 0; k < 3; ++k) {
                    color[static_cast<std::size_t>(k)] += w * g.color[k];
                }
                if (with_features) {
                    auto f = out.features.at(r, c);
                    const auto z = scene.feature(sg->source_index);
                    for (std::size_t d = 0; d < dim; ++d) {
                        f[d] += w * z[d];
                    }
                }
                if (w >= floor) {
                    tile.contributions.push_back({sg->source_index, r, c, w});
                }
                t = next;
            }
            out.transmittance.at(r, c)[0] = t;
        }
    }
}

} // namespace

RenderOutput rasterize(const GaussianScene& scene, const CameraView& cam, double floor, const RasterConfig& cfg,
                       bool with_features) {
    if (scene.empty()) {
        throw DataError("cannot rasterize an empty scene");
    }
    if (!(floor > 0.0)) {
        throw DomainError("contribution floor must be positive");
    }
    if (with_features && scene.feature_dim() == 0) {
        throw DataError("scene carries no features");
    }
    const int height = cam.intrinsics.height;
    const int width = cam.intrinsics.width;
    const int ts = std::max(1, cfg.tile_size);

    RenderOutput out;
    out.color = ColorImage(height, width, 3);
    out.transmittance = Image(height, width, 1);
    if (with_features) {
        out.features = FeatureImage(height, width, scene.feature_dim());
    }

    const std::vector<ScreenGaussian> splats = project_scene(scene, cam, cfg);
    const int tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;
    std::vector<TileJob> tiles(static_cast<std::size_t>(tiles_x * tiles_y));
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            TileJob& t = tiles[static_cast<std::size_t>(ty * tiles_x + tx)];
            t.row0 = ty * ts;
            t.row1 = std::min(height, t.row0 + ts);
            t.col0 = tx * ts;
            t.col1 = std::min(width, t.col0 + ts);
        }
    }
    // Splats are visited in depth order, so every tile list stays sorted.
    for (const ScreenGaussian& sg : splats) {
        for (int ty = sg.row_min / ts; ty <= sg.row_max / ts; ++ty) {
            for (int tx = sg.col_min / ts; tx <= sg.col_max / ts; ++tx) {
                tiles[static_cast<std::size_t>(ty * tiles_x + tx)].splats.push_back(&sg);
            }
        }
    }

    const int workers = std::clamp(cfg.workers, 1, static_cast<int>(tiles.size()));
    if (workers == 1) {
        for (TileJob& t : tiles) {
            render_tile(t, scene, cfg, floor, out, with_features);
        }
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = static_cast<std::size_t>(w); i < tiles.size(); i += static_cast<std::size_t>(workers)) {
                    render_tile(tiles[i], scene, cfg, floor, out, with_features);
                }
            });
        }
    }

    std::size_t total = 0;
    for (const TileJob& t : tiles) {
        total += t.contributions.size();
    }
    out.contributions.reserve(total);
    for (TileJob& t : tiles) {
        out.contributions.insert(out.contributions.end(), t.contributions.begin(), t.contributions.end());
    }
    std::stable_sort(out.contributions.begin(), out.contributions.end(),
                     [](const PixelContribution& a, const PixelContribution& b) {
                         return a.row != b.row ? a.row < b.row : a.col < b.col;
                     });
    return out;
}

FeatureImage render_feature_image(const GaussianScene& scene, const CameraView& cam, const RasterConfig& cfg) {
    if (scene.feature_dim() == 0) {
        throw DataError("render_feature_image requires a scene with features");
    }
    return std::move(rasterize(scene, cam, 1.0, cfg, true).features);
}

double psnr(const ColorImage& a, const ColorImage& b) {
    if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
        throw DataError("psnr: image shapes differ");
    }
    double se = 0.0;
    const auto da = a.data();
    const auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(da.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace gsloc
