// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/localizer.hpp"

#include "gsloc/error.hpp"
#include "gsloc/pnp.hpp"
#include "gsloc/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace gsloc {

std::vector<Keypoint> extract_query_keypoints(const FeatureImage& image, const KeypointConfig& cfg,
                                              std::size_t expected_dim) {
    if (expected_dim != 0 && image.channels() != expected_dim) {
        throw DataError("query feature dimension " + std::to_string(image.channels()) + " does not match map (" +
                        std::to_string(expected_dim) + ")");
    }
    const int h = image.height();
    const int w = image.width();
    std::vector<double> mag(image.pixel_count());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (double x : image.at(r, c)) {
                s += x * x;
            }
            mag[static_cast<std::size_t>(r * w + c)] = std::sqrt(s);
        }
    }
    auto m = [&](int r, int c) { return mag[static_cast<std::size_t>(r * w + c)]; };

    std::vector<Keypoint> out;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double v = m(r, c);
            if (!(v > cfg.min_response)) {
                continue;
            }
            bool peak = true;
            for (int dr = -1; dr <= 1 && peak; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= h || cc >= w) {
                        continue;
                    }
                    const bool before = dr < 0 || (dr == 0 && dc < 0);
                    // Earlier neighbors must be strictly lower, later ones not higher.
                    if (before ? m(rr, cc) >= v : m(rr, cc) > v) {
                        peak = false;
                        break;
                    }
                }
            }
            if (!peak) {
                continue;
            }
            Keypoint kp;
            kp.pixel = {c + 0.5, r + 0.5};
            if (cfg.subpixel) {
                auto offset = [](double lo, double mid, double hi) {
                    const double den = lo - 2.0 * mid + hi;
                    return den < 0.0 ? std::clamp(0.5 * (lo - hi) / den, -0.5, 0.5) : 0.0;
                };
                if (c > 0 && c < w - 1) {
                    kp.pixel.x() += offset(m(r, c - 1), v, m(r, c + 1));
                }
                if (r > 0 && r < h - 1) {
                    kp.pixel.y() += offset(m(r - 1, c), v, m(r + 1, c));
                }
            }
            const auto f = image.at(r, c);
            kp.descriptor = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())) / v;
            kp.response = v;
            out.push_back(std::move(kp));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
    if (out.size() > cfg.max_keypoints) {
        out.resize(cfg.max_keypoints);
    }
    return out;
}

std::vector<Correspondence> match(std::span<const Keypoint> query, const LocalizationMap& map, const MatchConfig& cfg) {
    const Eigen::Index dim = static_cast<Eigen::Index>(map.feature_dim);
    const Eigen::Index nq = static_cast<Eigen::Index>(query.size());
    const Eigen::Index nm = static_cast<Eigen::Index>(map.points.size());
    if (nq == 0 || nm == 0) {
        return {};
    }
    Eigen::MatrixXd q(dim, nq);
    std::vector<char> q_ok(static_cast<std::size_t>(nq), 0);
    for (Eigen::Index i = 0; i < nq; ++i) {
        const Eigen::VectorXd& d = query[static_cast<std::size_t>(i)].descriptor;
        if (d.size() != dim) {
            throw DataError("query descriptor dimension does not match the map");
        }
        const double n = d.norm();
        q_ok[static_cast<std::size_t>(i)] = n > 0.0;
        q.col(i) = n > 0.0 ? Eigen::VectorXd(d / n) : Eigen::VectorXd::Zero(dim);
    }
    Eigen::MatrixXd p(dim, nm);
    std::vector<char> p_ok(static_cast<std::size_t>(nm), 0);
    for (Eigen::Index j = 0; j < nm; ++j) {
        const Eigen::VectorXd& d = map.points[static_cast<std::size_t>(j)].descriptor;
        const double n = d.norm();
        p_ok[static_cast<std::size_t>(j)] = n > 0.0;
        p.col(j) = n > 0.0 ? Eigen::VectorXd(d / n) : Eigen::VectorXd::Zero(dim);
    }
    const Eigen::MatrixXd sim = q.transpose() * p; // nq x nm

    constexpr double kNone = -std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> best_p(static_cast<std::size_t>(nq), -1);
    std::vector<double> best_ps(static_cast<std::size_t>(nq), kNone);
    std::vector<Eigen::Index> best_q(static_cast<std::size_t>(nm), -1);
    std::vector<double> best_qs(static_cast<std::size_t>(nm), kNone);
    for (Eigen::Index j = 0; j < nm; ++j) {
        if (p_ok[static_cast<std::size_t>(j)] == 0) {
            continue;
        }
        for (Eigen::Index i = 0; i < nq; ++i) {
            if (q_ok[static_cast<std::size_t>(i)] == 0) {
                continue;
            }
            const double s = sim(i, j);
            if (s > best_ps[static_cast<std::size_t>(i)]) {
                best_ps[static_cast<std::size_t>(i)] = s;
                best_p[static_cast<std::size_t>(i)] = j;
            }
            if (s > best_qs[static_cast<std::size_t>(j)]) {
                best_qs[static_cast<std::size_t>(j)] = s;
                best_q[static_cast<std::size_t>(j)] = i;
            }
        }
    }

    std::vector<Correspondence> out;
    for (Eigen::Index i = 0; i < nq; ++i) {
        const Eigen::Index j = best_p[static_cast<std::size_t>(i)];
        if (j < 0 || !(best_ps[static_cast<std::size_t>(i)] >= cfg.min_similarity)) {
            continue;
        }
        if (cfg.mutual && best_q[static_cast<std::size_t>(j)] != i) {
            continue;
        }
        out.push_back({query[static_cast<std::size_t>(i)].pixel, map.points[static_cast<std::size_t>(j)].position,
                       static_cast<std::size_t>(j), best_ps[static_cast<std::size_t>(i)]});
    }
    return out;
}

std::size_t count_many_to_one(std::span<const Correspondence> correspondences) {
    std::unordered_map<std::size_t, std::size_t> uses;
    for (const Correspondence& c : correspondences) {
        ++uses[c.point_index];
    }
    std::size_t n = 0;
    for (const Correspondence& c : correspondences) {
        n += uses[c.point_index] >= 2 ? 1 : 0;
    }
    return n;
}

RansacConfig RansacConfig::preset(const std::string& name) {
    if (name == "efficient") {
        return efficient();
    }
    if (name == "default") {
        return standard();
    }
    throw DomainError("unknown RANSAC preset '" + name + "' (expected efficient|default)");
}

namespace {

std::vector<std::size_t> inliers_of(const Pose& pose, std::span<const Correspondence> corr, const Intrinsics& k,
                                    double threshold, double* sq_error = nullptr) {
    const Eigen::Matrix3d r = pose.rotation();
    const double t2 = threshold * threshold;
    std::vector<std::size_t> out;
    double err = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const Eigen::Vector3d p = r * corr[i].point + pose.translation_wc;
        if (!(p.z() > 0.0)) {
            continue;
        }
        const double e = (k.project(p) - corr[i].pixel).squaredNorm();
        if (e < t2) {
            out.push_back(i);
            err += e;
        }
    }
    if (sq_error != nullptr) {
        *sq_error = err;
    }
    return out;
}

} // namespace

PoseEstimate solve_pnp_ransac(std::span<const Correspondence> corr, const Intrinsics& intrinsics,
                              const RansacConfig& cfg) {
    if (corr.size() < 4) {
        throw DataError("PnP needs at least 4 correspondences, got " + std::to_string(corr.size()));
    }
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = corr.size();
    std::vector<Eigen::Vector3d> bearings(n);
    for (std::size_t i = 0; i < n; ++i) {
        bearings[i] = intrinsics.unproject(corr[i].pixel);
    }

    PoseEstimate est;
    est.many_to_one_count = count_many_to_one(corr);
    Rng rng(cfg.seed);
    std::size_t best_count = 0;
    double best_err = std::numeric_limits<double>::infinity();
    std::size_t needed = cfg.max_iterations;
    const double log_fail = std::log(1.0 - cfg.confidence);

    std::size_t iter = 0;
    while (iter < cfg.max_iterations && (iter < cfg.min_iterations || iter < needed)) {
        ++iter;
        std::array<std::size_t, 3> s{};
        s[0] = rng.index(n);
        do {
            s[1] = rng.index(n);
        } while (s[1] == s[0]);
        do {
            s[2] = rng.index(n);
        } while (s[2] == s[0] || s[2] == s[1]);
        const auto poses = solve_p3p({bearings[s[0]], bearings[s[1]], bearings[s[2]]},
                                     {corr[s[0]].point, corr[s[1]].point, corr[s[2]].point});
        for (const Pose& pose : poses) {
            double err = 0.0;
            const std::size_t count = inliers_of(pose, corr, intrinsics, cfg.reprojection_px, &err).size();
            if (count > best_count || (count == best_count && count > 0 && err < best_err)) {
                best_count = count;
                best_err = err;
                est.pose = pose;
                const double ratio = static_cast<double>(count) / static_cast<double>(n);
                const double p_good = ratio * ratio * ratio;
                if (p_good >= 1.0) {
                    needed = 0;
                } else if (p_good > 0.0) {
                    const double k = std::ceil(log_fail / std::log(1.0 - p_good));
                    needed = k < static_cast<double>(cfg.max_iterations) ? static_cast<std::size_t>(k)
                                                                          : cfg.max_iterations;
                }
            }
        }
    }
    est.iterations_run = iter;

    if (best_count >= 4) {
        std::vector<std::size_t> inl = inliers_of(est.pose, corr, intrinsics, cfg.reprojection_px);
        if (cfg.refine) {
            for (int round = 0; round < 4; ++round) {
                std::vector<Eigen::Vector2d> px;
                std::vector<Eigen::Vector3d> pts;
                for (std::size_t i : inl) {
                    px.push_back(corr[i].pixel);
                    pts.push_back(corr[i].point);
                }
                const Pose refined = refine_pose_lm(est.pose, px, pts, intrinsics);
                std::vector<std::size_t> next = inliers_of(refined, corr, intrinsics, cfg.reprojection_px);
                if (next.size() < inl.size()) {
                    break;
                }
                const bool same = next == inl;
                est.pose = refined;
                inl = std::move(next);
                if (same) {
                    break;
                }
            }
        }
        est.inliers = std::move(inl);
        est.inlier_count = est.inliers.size();
        est.success = est.inlier_count >= 4;
    }
    est.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return est;
}

PoseError pose_error(const Pose& estimate, const Pose& ground_truth) {
    PoseError e;
    e.translation_cm = 100.0 * (estimate.center() - ground_truth.center()).norm();
    const Eigen::Quaterniond dq = estimate.rotation_wc * ground_truth.rotation_wc.conjugate();
    e.rotation_deg = 2.0 * std::atan2(dq.vec().norm(), std::abs(dq.w())) * 180.0 / std::numbers::pi;
    return e;
}

} // namespace gsloc
