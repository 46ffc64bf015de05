// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace gsloc {

namespace {

// Polynomials as coefficient vectors, lowest degree first.
using Poly = std::vector<double>;

Poly mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            r[i + j] += a[i] * b[j];
        }
    }
    return r;
}

Poly add(const Poly& a, const Poly& b, double sb = 1.0) {
    Poly r(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        r[i] += a[i];
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        r[i] += sb * b[i];
    }
    return r;
}

double eval_desc(const std::array<double, 5>& c, double x) {
    double v = 0.0;
    for (double ci : c) {
        v = v * x + ci;
    }
    return v;
}

double deriv_desc(const std::array<double, 5>& c, double x) {
    return 4.0 * c[0] * x * x * x + 3.0 * c[1] * x * x + 2.0 * c[2] * x + c[3];
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

} // namespace

std::vector<double> real_quartic_roots(const std::array<double, 5>& c) {
    const double scale = std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3]), std::abs(c[4])});
    if (scale == 0.0) {
        return {};
    }
    // Drop vanishing leading coefficients.
    std::size_t lead = 0;
    while (lead < 4 && std::abs(c[lead]) <= 1e-14 * scale) {
        ++lead;
    }
    const int degree = static_cast<int>(4 - lead);
    std::vector<double> roots;
    if (degree == 0) {
        return roots;
    }
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
    for (int i = 0; i < degree; ++i) {
        companion(0, i) = -c[lead + 1 + static_cast<std::size_t>(i)] / c[lead];
    }
    for (int i = 1; i < degree; ++i) {
        companion(i, i - 1) = 1.0;
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    for (int i = 0; i < degree; ++i) {
        const std::complex<double> z = es.eigenvalues()[i];
        if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) {
            continue;
        }
        double x = z.real();
        for (int it = 0; it < 4; ++it) { // Newton polish
            const double d = deriv_desc(c, x);
            if (d == 0.0) {
                break;
            }
            const double step = eval_desc(c, x) / d;
            x -= step;
            if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) {
                break;
            }
        }
        roots.push_back(x);
    }
    return roots;
}

Pose rigid_align(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst) {
    const std::size_t n = src.size();
    Eigen::Vector3d cs = Eigen::Vector3d::Zero();
    Eigen::Vector3d cd = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cs += src[i];
        cd += dst[i];
    }
    cs /= static_cast<double>(n);
    cd /= static_cast<double>(n);
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        h += (dst[i] - cd) * (src[i] - cs).transpose();
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
        d(2, 2) = -1.0;
    }
    const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
    Pose pose;
    pose.rotation_wc = Eigen::Quaterniond(r).normalized();
    pose.translation_wc = cd - r * cs;
    return pose;
}

std::vector<Pose> solve_p3p(const std::array<Eigen::Vector3d, 3>& bearings,
                            const std::array<Eigen::Vector3d, 3>& points) {
    const Eigen::Vector3d j1 = bearings[0].normalized();
    const Eigen::Vector3d j2 = bearings[1].normalized();
    const Eigen::Vector3d j3 = bearings[2].normalized();
    const double a2 = (points[1] - points[2]).squaredNorm();
    const double b2 = (points[0] - points[2]).squaredNorm();
    const double c2 = (points[0] - points[1]).squaredNorm();
    const double scale2 = std::max({a2, b2, c2});
    if (!(scale2 > 0.0) || a2 < 1e-12 * scale2 || b2 < 1e-12 * scale2 || c2 < 1e-12 * scale2) {
        return {};
    }
    const double ca = j2.dot(j3);
    const double cb = j1.dot(j3);
    const double cg = j1.dot(j2);

    // With s2 = u s1, s3 = v s1, the law of cosines gives u = N(v) / D(v)
    // and a quartic in v after substitution into the (s1, s2) equation.
    const double k = (a2 - c2) / b2;
    const Poly n = {1.0 + k, -2.0 * k * cb, k - 1.0};
    const Poly d = {2.0 * cg, -2.0 * ca};
    const Poly e = {1.0, -2.0 * cb, 1.0}; // 1 + v^2 - 2 v cos(beta)
    Poly quartic = add(mul(d, d), mul(n, n));
    quartic = add(quartic, mul(mul(n, d), Poly{2.0 * cg}), -1.0);
    quartic = add(quartic, mul(mul(e, mul(d, d)), Poly{c2 / b2}), -1.0);
    quartic.resize(5, 0.0);
    const std::array<double, 5> desc = {quartic[4], quartic[3], quartic[2], quartic[1], quartic[0]};

    std::vector<Pose> poses;
    for (double v : real_quartic_roots(desc)) {
        if (!(v > 0.0)) {
            continue;
        }
        const double dv = d[0] + d[1] * v;
        if (std::abs(dv) < 1e-12) {
            continue;
        }
        const double u = (n[0] + n[1] * v + n[2] * v * v) / dv;
        const double ev = 1.0 + v * v - 2.0 * v * cb;
        if (!(u > 0.0) || !(ev > 0.0)) {
            continue;
        }
        const double s1 = std::sqrt(b2 / ev);
        const std::array<Eigen::Vector3d, 3> cam = {s1 * j1, u * s1 * j2, v * s1 * j3};
        poses.push_back(rigid_align(points, cam));
    }
    return poses;
}

Pose refine_pose_lm(const Pose& initial, std::span<const Eigen::Vector2d> pixels,
                    std::span<const Eigen::Vector3d> points, const Intrinsics& k, int max_iterations) {
    const std::size_t n = points.size();
    auto cost_of = [&](const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d p = r * points[i] + t;
            if (!(p.z() > 0.0)) {
                c += 1e12;
                continue;
            }
            c += (k.project(p) - pixels[i]).squaredNorm();
        }
        return c;
    };

    Eigen::Matrix3d r = initial.rotation();
    Eigen::Vector3d t = initial.translation_wc;
    double cost = cost_of(r, t);
    double lambda = -1.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d rx = r * points[i];
            const Eigen::Vector3d p = rx + t;
            if (!(p.z() > 0.0)) {
                continue;
            }
            const double iz = 1.0 / p.z();
            Eigen::Matrix<double, 2, 3> dproj;
            dproj << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
            Eigen::Matrix<double, 3, 6> dp;
            dp.leftCols<3>() = -skew(rx);
            dp.rightCols<3>() = Eigen::Matrix3d::Identity();
            const Eigen::Matrix<double, 2, 6> jac = dproj * dp;
            const Eigen::Vector2d res = k.project(p) - pixels[i];
            jtj += jac.transpose() * jac;
            jtr += jac.transpose() * res;
        }
        if (lambda < 0.0) {
            lambda = 1e-3 * jtj.diagonal().maxCoeff();
        }
        bool improved = false;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Eigen::Matrix<double, 6, 6> a = jtj;
            a.diagonal().array() += lambda;
            const Eigen::Matrix<double, 6, 1> step = -a.ldlt().solve(jtr);
            const Eigen::Vector3d w = step.head<3>();
            const double angle = w.norm();
            const Eigen::Matrix3d dr =
                angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
            const Eigen::Matrix3d r_new = dr * r;
            const Eigen::Vector3d t_new = t + step.tail<3>();
            const double c_new = cost_of(r_new, t_new);
            if (c_new < cost) {
                const double rel = (cost - c_new) / std::max(cost, 1e-300);
                r = r_new;
                t = t_new;
                cost = c_new;
                lambda = std::max(lambda * 0.1, 1e-12);
                improved = true;
                if (rel < 1e-12 || step.norm() < 1e-14) {
                    iter = max_iterations;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            break;
        }
    }
    Pose out;
    out.rotation_wc = Eigen::Quaterniond(r).normalized();
    out.translation_wc = t;
    return out;
}

} // namespace gsloc
