// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/scene.hpp"

#include "gsloc/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace gsloc {

Eigen::Matrix3d covariance_of(const Gaussian& g) {
    const Eigen::Matrix3d r = g.rotation.toRotationMatrix();
    const Eigen::Matrix3d m = r * g.scale.asDiagonal();
    Eigen::Matrix3d cov = m * m.transpose();
    // Exact symmetry; the product is symmetric only up to rounding.
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

int major_axis(const Gaussian& g) {
    int axis = 0;
    for (int i = 1; i < 3; ++i) {
        if (g.scale[i] > g.scale[axis]) {
            axis = i;
        }
    }
    return axis;
}

void validate(const Gaussian& g) {
    if (!g.mean.allFinite()) {
        throw DataError("gaussian mean is not finite");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-9) {
        throw DataError("gaussian rotation is not a unit quaternion");
    }
    if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) {
        throw DataError("gaussian scale components must be positive");
    }
    if (!(g.opacity > 0.0 && g.opacity <= 1.0)) {
        throw DataError("gaussian opacity must lie in (0, 1]");
    }
    if (!g.color.allFinite()) {
        throw DataError("gaussian color is not finite");
    }
}

GaussianScene::GaussianScene(std::vector<Gaussian> gaussians, std::size_t feature_dim,
                             std::vector<double> features)
    : gaussians_(std::move(gaussians)), feature_dim_(feature_dim), features_(std::move(features)) {
    if (features_.size() != gaussians_.size() * feature_dim_) {
        throw DataError("feature block holds " + std::to_string(features_.size()) + " values, expected " +
                        std::to_string(gaussians_.size() * feature_dim_));
    }
    if (gaussians_.empty()) {
        return;
    }
    extent_.min = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    extent_.max = -extent_.min;
    for (std::size_t i = 0; i < gaussians_.size(); ++i) {
        const Gaussian& g = gaussians_[i];
        try {
            validate(g);
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " (index " + std::to_string(i) + ")");
        }
        extent_.min = extent_.min.cwiseMin(g.mean);
        extent_.max = extent_.max.cwiseMax(g.mean);
    }
}

void validate(const Intrinsics& k) {
    if (!(k.fx > 0.0 && k.fy > 0.0)) {
        throw DataError("focal lengths must be positive");
    }
    if (k.width <= 0 || k.height <= 0) {
        throw DataError("image dimensions must be positive");
    }
    if (!(k.cx >= 0.0 && k.cx < k.width && k.cy >= 0.0 && k.cy < k.height)) {
        throw DataError("principal point lies outside the image");
    }
}

void validate(const CameraView& cam) {
    validate(cam.intrinsics);
    if (std::abs(cam.pose.rotation_wc.norm() - 1.0) > 1e-9) {
        throw DataError("camera rotation is not a unit quaternion (view " + std::to_string(cam.view_id) + ")");
    }
    if (!cam.pose.translation_wc.allFinite()) {
        throw DataError("camera translation is not finite (view " + std::to_string(cam.view_id) + ")");
    }
}

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    if (x.norm() < 1e-12) {
        x = z.unitOrthogonal();
    }
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r; // rows are camera axes in world coordinates
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    Pose pose;
    pose.rotation_wc = Eigen::Quaterniond(r).normalized();
    pose.translation_wc = -(pose.rotation_wc * eye);
    return pose;
}

} // namespace gsloc
