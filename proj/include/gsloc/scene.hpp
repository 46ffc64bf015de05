// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gsloc {

/// One anisotropic 3D primitive. Scale holds standard deviations along the
/// rotated local axes; color is the degree-0 SH band decoded to RGB.
struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity(); // (w, x, y, z)
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    double opacity = 1.0;
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
    std::optional<std::int64_t> parent_id;
};

/// Sigma = R diag(s^2) R^T.
Eigen::Matrix3d covariance_of(const Gaussian& g);

/// Index of the largest scale component; ties resolve to the lowest index.
int major_axis(const Gaussian& g);

/// Throws DataError naming the violated invariant.
void validate(const Gaussian& g);

struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    Eigen::Vector3d size() const { return max - min; }
    double largest_side() const { return size().maxCoeff(); }
    bool contains(const Eigen::Vector3d& p, double tol = 0.0) const {
        return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
    }
};

/// Immutable ordered set of Gaussians with an optional per-Gaussian feature
/// block stored row-major (N x feature_dim).
class GaussianScene {
  public:
    GaussianScene() = default;
    explicit GaussianScene(std::vector<Gaussian> gaussians, std::size_t feature_dim = 0,
                           std::vector<double> features = {});

    std::size_t size() const { return gaussians_.size(); }
    bool empty() const { return gaussians_.empty(); }
    std::size_t feature_dim() const { return feature_dim_; }
    const Aabb& extent() const { return extent_; }

    const Gaussian& operator[](std::size_t i) const { return gaussians_[i]; }
    std::span<const Gaussian> gaussians() const { return gaussians_; }

    std::span<const double> feature(std::size_t i) const {
        return {features_.data() + i * feature_dim_, feature_dim_};
    }
    std::span<const double> features() const { return features_; }

  private:
    std::vector<Gaussian> gaussians_;
    std::size_t feature_dim_ = 0;
    std::vector<double> features_;
    Aabb extent_;
};

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    Eigen::Vector2d project(const Eigen::Vector3d& p_cam) const {
        return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
    }
    /// Unnormalized ray direction (x, y, 1) for a pixel position.
    Eigen::Vector3d unproject(const Eigen::Vector2d& px) const {
        return {(px.x() - cx) / fx, (px.y() - cy) / fy, 1.0};
    }
};

/// World-to-camera rigid transform: X_cam = R * X_world + t.
struct Pose {
    Eigen::Quaterniond rotation_wc = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation_wc = Eigen::Vector3d::Zero();

    Eigen::Matrix3d rotation() const { return rotation_wc.toRotationMatrix(); }
    Eigen::Vector3d transform(const Eigen::Vector3d& x_world) const {
        return rotation_wc * x_world + translation_wc;
    }
    /// Camera center in world coordinates, -R^T t.
    Eigen::Vector3d center() const { return -(rotation_wc.conjugate() * translation_wc); }
};

struct CameraView {
    Intrinsics intrinsics;
    Pose pose;
    int view_id = 0;
};

void validate(const Intrinsics& k);
void validate(const CameraView& cam);

/// Builds a world-to-camera pose for a camera at `eye` looking at `target`
/// with image y pointing along -up (x right, z forward).
Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());

} // namespace gsloc
