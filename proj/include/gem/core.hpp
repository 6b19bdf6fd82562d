#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "gem/error.hpp"

namespace gem {

using RowMatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowMatX4 = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;
using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Fixed-size set of Gaussians. Scales are stored as natural logs and
// opacities as pre-sigmoid logits; rotations are unit quaternions (w,x,y,z).
struct GaussianCloud {
  RowMatX3 positions;
  RowMatX4 rotations;
  RowMatX3 logScales;
  Eigen::VectorXd opacityLogits;
  RowMatX3 colors;

  GaussianCloud() = default;
  explicit GaussianCloud(std::size_t n)
      : positions(RowMatX3::Zero(n, 3)),
        rotations(RowMatX4::Zero(n, 4)),
        logScales(RowMatX3::Zero(n, 3)),
        opacityLogits(Eigen::VectorXd::Zero(n)),
        colors(RowMatX3::Zero(n, 3)) {
    rotations.col(0).setOnes();
  }

  std::size_t count() const { return static_cast<std::size_t>(positions.rows()); }

  void normalizeRotations() {
    for (Eigen::Index i = 0; i < rotations.rows(); ++i) {
      const double n = rotations.row(i).norm();
      if (n > 0.0) rotations.row(i) /= n;
    }
  }

  // Throws InvalidInput when any documented invariant is broken.
  void validate() const {
    const auto n = positions.rows();
    if (rotations.rows() != n || logScales.rows() != n || opacityLogits.size() != n ||
        colors.rows() != n)
      throw InvalidInput("GaussianCloud: attribute arrays disagree on count");
    if (!positions.allFinite() || !rotations.allFinite() || !logScales.allFinite() ||
        !opacityLogits.allFinite() || !colors.allFinite())
      throw InvalidInput("GaussianCloud: non-finite attribute");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(rotations.row(i).norm() - 1.0) > 1e-6)
        throw InvalidInput("GaussianCloud: quaternion " + std::to_string(i) + " not unit norm");
      for (int k = 0; k < 3; ++k) {
        const double s = std::exp(logScales(i, k));
        if (!std::isfinite(s) || s <= 0.0)
          throw InvalidInput("GaussianCloud: scale underflow/overflow at " + std::to_string(i));
        if (colors(i, k) < 0.0 || colors(i, k) > 1.0)
          throw InvalidInput("GaussianCloud: color outside [0,1] at " + std::to_string(i));
      }
    }
  }
};

// Pinhole camera. worldToCamera maps world points into a camera frame
// looking down +z with +x right and +y down.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Eigen::Matrix4d worldToCamera = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return worldToCamera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return worldToCamera.topRightCorner<3, 1>(); }

  void validate() const {
    if (width <= 0 || height <= 0) throw InvalidInput("Camera: non-positive image size");
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("Camera: focal lengths must be positive");
    if (!worldToCamera.allFinite()) throw InvalidInput("Camera: non-finite transform");
    const Eigen::Matrix3d r = rotation();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
      throw InvalidInput("Camera: worldToCamera rotation is not orthonormal");
  }
};

// Builds a world-to-camera transform for a camera at `eye` looking at `target`.
inline Eigen::Matrix4d lookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                              const Eigen::Vector3d& up = Eigen::Vector3d(0, 1, 0)) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  // Image y grows downward.
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<1, 3>(0, 0) = right.transpose();
  m.block<1, 3>(1, 0) = down.transpose();
  m.block<1, 3>(2, 0) = forward.transpose();
  m.block<3, 1>(0, 3) = -m.topLeftCorner<3, 3>() * eye;
  return m;
}

struct Covariance3 {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
};

inline Eigen::Matrix3d quaternionToRotation(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Inverse of quaternionToRotation for proper rotations; result has w >= 0.
inline Eigen::Vector4d rotationToQuaternion(const Eigen::Matrix3d& r) {
  const Eigen::Quaterniond q(r);
  Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
  out.normalize();
  if (out[0] < 0.0) out = -out;
  return out;
}

inline Eigen::Vector4d quaternionMultiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

// Sigma = R S S^T R^T with S = diag(exp(logScale)).
inline Covariance3 covariance3d(const Eigen::Vector4d& rotation, const Eigen::Vector3d& logScale) {
  if (!rotation.allFinite() || !logScale.allFinite())
    throw InvalidInput("covariance3d: non-finite input");
  const Eigen::Matrix3d r = quaternionToRotation(rotation);
  const Eigen::Vector3d s2 = (2.0 * logScale).array().exp();
  Covariance3 c;
  c.matrix = r * s2.asDiagonal() * r.transpose();
  c.matrix = 0.5 * (c.matrix + c.matrix.transpose()).eval();
  return c;
}

struct ProjectionSettings {
  double nearPlane = 0.01;
  // Added to both diagonal entries of the screen-space covariance (px^2).
  double lowPassFloor = 0.3;
};

struct ProjectedGaussian {
  Eigen::Matrix2d cov2;
  Eigen::Vector2d center;
  double depth = 0.0;
};

// Local-affine projection: cov2 = J W Sigma W^T J^T + floor*I, where J is the
// Jacobian of the perspective map at the camera-space mean. Returns nullopt
// for points at or behind the near plane.
inline std::optional<ProjectedGaussian> projectCovariance(const Covariance3& cov,
                                                          const Eigen::Vector3d& mean,
                                                          const Camera& cam,
                                                          const ProjectionSettings& settings = {}) {
  const Eigen::Matrix3d w = cam.rotation();
  const Eigen::Vector3d t = w * mean + cam.translation();
  if (!(t.z() > settings.nearPlane)) return std::nullopt;
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
      0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> jw = j * w;
  ProjectedGaussian p;
  p.cov2 = jw * cov.matrix * jw.transpose();
  p.cov2(0, 0) += settings.lowPassFloor;
  p.cov2(1, 1) += settings.lowPassFloor;
  p.center = {cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy};
  p.depth = t.z();
  return p;
}

inline constexpr double kSingularDeterminant = 1e-12;

// exp(-0.5 d^T cov2^-1 d). Near-singular covariances contribute 0.
inline double evalGaussian2d(const Eigen::Matrix2d& cov2, const Eigen::Vector2d& center,
                             const Eigen::Vector2d& pixel) {
  const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
  if (!(det > kSingularDeterminant)) return 0.0;
  const Eigen::Vector2d d = pixel - center;
  const double a = cov2(1, 1) / det, b = -cov2(0, 1) / det, c = cov2(0, 0) / det;
  const double m = a * d.x() * d.x() + 2.0 * b * d.x() * d.y() + c * d.y() * d.y();
  return std::exp(-0.5 * m);
}

}  // namespace gem
