#include <gtest/gtest.h>

#include <gem/core.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "test_util.hpp"

using namespace gem;

TEST(Covariance3d, IdentityQuaternionUnitScale) {
  const auto c = covariance3d({1, 0, 0, 0}, {0, 0, 0});
  EXPECT_TRUE(c.matrix.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(Covariance3d, ScaleSquaredOnDiagonal) {
  const auto c = covariance3d({1, 0, 0, 0}, {std::log(2.0), 0, 0});
  EXPECT_NEAR(c.matrix(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(c.matrix(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(c.matrix(2, 2), 1.0, 1e-12);
  EXPECT_NEAR(c.matrix(0, 1), 0.0, 1e-12);
}

TEST(Covariance3d, QuarterTurnAboutZPermutesAxes) {
  const double h = std::sqrt(0.5);
  const auto c = covariance3d({h, 0, 0, h}, {std::log(2.0), 0, 0});
  Eigen::Matrix3d expected = Eigen::Vector3d(1, 4, 1).asDiagonal();
  EXPECT_LT((c.matrix - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance3d, RejectsNonFinite) {
  EXPECT_THROW(covariance3d({1, 0, 0, 0}, {NAN, 0, 0}), InvalidInput);
}

TEST(Covariance3d, SpectrumIsRotationInvariant) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d ls(u(rng), u(rng), u(rng));
    const auto c = covariance3d(gemtest::randomQuaternion(rng), ls);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c.matrix);
    Eigen::Vector3d expected = (2.0 * ls).array().exp();
    std::sort(expected.data(), expected.data() + 3);
    EXPECT_LT((es.eigenvalues() - expected).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
    EXPECT_EQ(c.matrix, c.matrix.transpose());
  }
}

TEST(ProjectCovariance, OnAxisIsotropic) {
  Camera cam = gemtest::frontCamera(64, 48, 100.0);
  const auto p = projectCovariance(Covariance3{}, {0, 0, 1}, cam);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->cov2(0, 0), 10000.3, 1e-9);
  EXPECT_NEAR(p->cov2(1, 1), 10000.3, 1e-9);
  EXPECT_NEAR(p->cov2(0, 1), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(p->center.x(), cam.cx);
  EXPECT_DOUBLE_EQ(p->center.y(), cam.cy);
  EXPECT_DOUBLE_EQ(p->depth, 1.0);
}

TEST(ProjectCovariance, BehindCameraIsCulled) {
  Camera cam = gemtest::frontCamera(64, 48, 100.0);
  EXPECT_FALSE(projectCovariance(Covariance3{}, {0, 0, -1}, cam));
  EXPECT_FALSE(projectCovariance(Covariance3{}, {0, 0, 0.005}, cam));
}

TEST(ProjectCovariance, OffAxisMatchesNumericJacobian) {
  Camera cam = gemtest::frontCamera(64, 48, 100.0);
  cam.worldToCamera = lookAt({0.3, -0.2, -0.5}, {0.4, 0.1, 2.0});
  const Eigen::Matrix3d w = cam.rotation();
  // Place the Gaussian at camera-space (0.5, 0, 2).
  const Eigen::Vector3d camPoint(0.5, 0.0, 2.0);
  const Eigen::Vector3d mean = w.transpose() * (camPoint - cam.translation());
  const auto cov = covariance3d(Eigen::Vector4d(0.9, 0.1, -0.3, 0.2).normalized(), {-1.0, -1.5, -0.7});

  auto pixelOf = [&](const Eigen::Vector3d& p) {
    const Eigen::Vector3d t = w * p + cam.translation();
    return Eigen::Vector2d(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  };
  Eigen::Matrix<double, 2, 3> jac;
  const double h = 1e-5;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[k] = h;
    jac.col(k) = (pixelOf(mean + e) - pixelOf(mean - e)) / (2 * h);
  }
  Eigen::Matrix2d expected = jac * cov.matrix * jac.transpose();
  expected += 0.3 * Eigen::Matrix2d::Identity();

  const auto p = projectCovariance(cov, mean, cam);
  ASSERT_TRUE(p);
  const double rel = (p->cov2 - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff();
  EXPECT_LT(rel, 1e-6);
  EXPECT_LT((p->center - pixelOf(mean)).norm(), 1e-9);
  EXPECT_NEAR(p->depth, 2.0, 1e-12);
}

TEST(ProjectCovariance, CameraRollRotatesFootprint) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ProjectionSettings noFloor;
  noFloor.lowPassFloor = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Camera cam = gemtest::frontCamera(64, 64, 80.0);
    const Eigen::Vector3d mean(u(rng), u(rng), 3.0 + u(rng));
    const auto cov = covariance3d(gemtest::randomQuaternion(rng), {0.3 * u(rng) - 1, 0.3 * u(rng) - 1, -1});
    const double roll = std::numbers::pi * u(rng);
    Camera rolled = cam;
    // Rolling the camera by +roll maps camera coordinates through Rz(-roll).
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(-roll, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    rolled.worldToCamera.topLeftCorner<3, 3>() = rz * cam.rotation();
    rolled.worldToCamera.topRightCorner<3, 1>() = rz * cam.translation();
    const auto a = projectCovariance(cov, mean, cam, noFloor);
    const auto b = projectCovariance(cov, mean, rolled, noFloor);
    ASSERT_TRUE(a && b);
    const Eigen::Matrix2d r2 = Eigen::Rotation2Dd(-roll).toRotationMatrix();
    const Eigen::Matrix2d expected = r2 * a->cov2 * r2.transpose();
    EXPECT_LT((b->cov2 - expected).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, expected.norm()));
  }
}

TEST(EvalGaussian2d, ClosedForms) {
  const Eigen::Vector2d c(3, 4);
  EXPECT_DOUBLE_EQ(evalGaussian2d(Eigen::Matrix2d::Identity(), c, c), 1.0);
  EXPECT_NEAR(evalGaussian2d(Eigen::Matrix2d::Identity(), c, c + Eigen::Vector2d(0, 1)),
              std::exp(-0.5), 1e-15);
  EXPECT_NEAR(evalGaussian2d(Eigen::Vector2d(4, 1).asDiagonal(), c, c + Eigen::Vector2d(2, 0)),
              0.60653065971263342, 1e-12);
}

TEST(EvalGaussian2d, SingularContributesZero) {
  Eigen::Matrix2d s;
  s << 1, 1, 1, 1;
  EXPECT_EQ(evalGaussian2d(s, {0, 0}, {0, 0}), 0.0);
}

TEST(EvalGaussian2d, MonotoneInMahalanobisDistance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix2d a;
    a << u(rng), u(rng), u(rng), u(rng);
    const Eigen::Matrix2d cov = a * a.transpose() + 0.1 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d dir(u(rng), u(rng));
    double prev = 2.0;
    for (int s = 0; s < 40; ++s) {
      const double v = evalGaussian2d(cov, {0, 0}, dir * (0.1 * s));
      EXPECT_LE(v, prev);
      EXPECT_GT(v, 0.0 - 1e-300);
      prev = v;
    }
  }
}

TEST(GaussianCloud, ValidateCatchesBrokenInvariants) {
  GaussianCloud c(2);
  EXPECT_NO_THROW(c.validate());
  c.rotations(1, 0) = 2.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c.normalizeRotations();
  EXPECT_NO_THROW(c.validate());
  c.colors(0, 2) = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Camera, ValidateRejectsSkewedRotation) {
  Camera cam = gemtest::frontCamera(8, 8, 10);
  EXPECT_NO_THROW(cam.validate());
  cam.worldToCamera(0, 1) = 0.2;
  EXPECT_THROW(cam.validate(), InvalidInput);
  cam = gemtest::frontCamera(8, 8, 10);
  cam.fx = 0;
  EXPECT_THROW(cam.validate(), InvalidInput);
}
