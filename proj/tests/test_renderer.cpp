#include <gtest/gtest.h>

#include <gem/renderer.hpp>

#include <random>

#include "test_util.hpp"

using namespace gem;
using gemtest::frontCamera;

namespace {

// Finite-difference check of renderBackward for L = sum(weights * image).
void checkGradients(const GaussianCloud& cloud, const Camera& cam, const Eigen::Vector3d& bg,
                    const ImageBuffer& weights, const std::vector<gemtest::ParamRef>& params) {
  const auto fwd = renderForward(cloud, cam, bg);
  const auto grads = renderBackward(fwd.sorted, cam, weights);
  for (const auto& p : params) {
    auto loss = [&](double v) {
      GaussianCloud c = cloud;
      gemtest::paramAt(c, p) = v;
      return gemtest::weightedSum(renderForward(c, cam, bg).image, weights);
    };
    GaussianCloud copy = cloud;
    const double x0 = gemtest::paramAt(copy, p);
    const double numeric = gemtest::centralDifference(loss, x0, 1e-4);
    const double analytic = gemtest::gradAt(grads, p);
    EXPECT_TRUE(gemtest::gradientClose(analytic, numeric, 1e-3, 1e-6))
        << "group " << p.group << " row " << p.row << " col " << p.col << ": analytic " << analytic
        << " numeric " << numeric;
  }
}

}  // namespace

TEST(RenderForward, EmptyCloudIsBackground) {
  const Camera cam = frontCamera(20, 12, 20);
  const auto r = renderForward(GaussianCloud(0), cam, {0.2, 0.2, 0.2});
  for (double v : r.image.pixels) EXPECT_EQ(v, 0.2);
  const auto st = renderStats(r.sorted);
  EXPECT_EQ(st.culled, 0u);
  EXPECT_EQ(st.skippedSingular, 0u);
  EXPECT_EQ(st.maxSplatsPerTile, 0u);
}

TEST(RenderForward, SaturatedSplatIsClampedAt0999) {
  Camera cam = frontCamera(17, 17, 40);  // principal point lands on pixel (8, 8)
  GaussianCloud c(1);
  c.positions.row(0) << 0, 0, 2;
  c.logScales.row(0).setConstant(std::log(0.2));
  c.opacityLogits[0] = 40.0;
  c.colors.row(0) << 1, 0, 0;
  const Eigen::Vector3d bg(0.3, 0.5, 0.7);
  const auto r = renderForward(c, cam, bg);
  EXPECT_NEAR(r.image.at(8, 8, 0), 0.999 + 0.001 * bg[0], 1e-12);
  EXPECT_NEAR(r.image.at(8, 8, 1), 0.001 * bg[1], 1e-12);
  EXPECT_NEAR(r.image.at(8, 8, 2), 0.001 * bg[2], 1e-12);
}

TEST(RenderForward, TwoOverlappingMatchBruteForce) {
  const Camera cam = frontCamera(32, 32, 40);
  GaussianCloud c(2);
  c.positions.row(0) << 0.05, 0, 2;
  c.positions.row(1) << -0.05, 0.02, 2.5;
  c.logScales.setConstant(std::log(0.15));
  c.opacityLogits << 0.5, 1.0;
  c.colors.row(0) << 1, 0, 0;
  c.colors.row(1) << 0, 0, 1;
  const Eigen::Vector3d bg(0.1, 0.1, 0.1);
  EXPECT_LT(gemtest::maxAbsDiff(renderForward(c, cam, bg).image, gemtest::bruteForceRender(c, cam, bg)), 1e-6);
}

TEST(RenderForward, RandomScenesMatchBruteForceAndConserveWeight) {
  std::mt19937_64 rng(2024);
  const Camera cam = frontCamera(48, 40, 45);
  for (int scene = 0; scene < 5; ++scene) {
    GaussianCloud c = gemtest::randomCloud(30, rng);
    const Eigen::Vector3d bg(0.4, 0.1, 0.9);
    EXPECT_LT(gemtest::maxAbsDiff(renderForward(c, cam, bg).image, gemtest::bruteForceRender(c, cam, bg)), 1e-6);
    // With white splats on a white background each pixel equals sum(weights) + T.
    c.colors.setOnes();
    for (double v : renderForward(c, cam, {1, 1, 1}).image.pixels) EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(RenderForward, StorageOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  const Camera cam = frontCamera(40, 40, 40);
  const GaussianCloud c = gemtest::randomCloud(25, rng);
  std::vector<int> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GaussianCloud p(25);
  for (int i = 0; i < 25; ++i) {
    p.positions.row(i) = c.positions.row(perm[i]);
    p.rotations.row(i) = c.rotations.row(perm[i]);
    p.logScales.row(i) = c.logScales.row(perm[i]);
    p.opacityLogits[i] = c.opacityLogits[perm[i]];
    p.colors.row(i) = c.colors.row(perm[i]);
  }
  const Eigen::Vector3d bg(0, 0, 0);
  EXPECT_LT(gemtest::maxAbsDiff(renderForward(c, cam, bg).image, renderForward(p, cam, bg).image), 1e-6);
}

TEST(RenderForward, TilingAndThreadsAreBitIdentical) {
  std::mt19937_64 rng(99);
  const Camera cam = frontCamera(70, 50, 50);
  const GaussianCloud c = gemtest::randomCloud(40, rng);
  const Eigen::Vector3d bg(0.5, 0.5, 0.5);
  RenderSettings tiled;
  tiled.threads = 1;
  RenderSettings single = tiled;
  single.tileSize = 128;
  RenderSettings many = tiled;
  many.threads = 7;
  const auto a = renderForward(c, cam, bg, tiled);
  const auto b = renderForward(c, cam, bg, single);
  const auto d = renderForward(c, cam, bg, many);
  EXPECT_EQ(a.image.pixels, b.image.pixels);
  EXPECT_EQ(a.image.pixels, d.image.pixels);

  const ImageBuffer w = gemtest::randomImage(70, 50, rng, -1, 1);
  const auto ga = renderBackward(a.sorted, cam, w);
  const auto gd = renderBackward(d.sorted, cam, w);
  EXPECT_EQ(ga.position, gd.position);
  EXPECT_EQ(ga.rotation, gd.rotation);
  EXPECT_EQ(ga.opacityLogit, gd.opacityLogit);
}

TEST(RenderStats, CountsCulledAndSingular) {
  const Camera cam = frontCamera(16, 16, 20);
  GaussianCloud behind(4);
  behind.positions.col(2).setConstant(-1.0);
  EXPECT_EQ(renderStats(renderForward(behind, cam, {0, 0, 0}).sorted).culled, 4u);

  GaussianCloud c(2);
  c.positions.row(0) << 0, 0, 2;
  c.positions.row(1) << 0.1, 0, 2;
  c.logScales.row(0).setConstant(std::log(0.2));
  c.logScales.row(1).setConstant(-40.0);
  RenderSettings s;
  s.projection.lowPassFloor = 0.0;
  const auto st = renderStats(renderForward(c, cam, {0, 0, 0}, s).sorted);
  EXPECT_EQ(st.skippedSingular, 1u);
  EXPECT_EQ(st.culled, 0u);
  EXPECT_EQ(st.maxSplatsPerTile, 1u);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(1);
  const Camera cam = frontCamera(16, 16, 16);
  const auto c = gemtest::randomCloud(10, rng);
  const auto fwd = renderForward(c, cam, {0.2, 0.3, 0.4});
  const auto g = renderBackward(fwd.sorted, cam, ImageBuffer(16, 16, 0.0));
  EXPECT_TRUE(g.position.isZero(0.0));
  EXPECT_TRUE(g.rotation.isZero(0.0));
  EXPECT_TRUE(g.logScale.isZero(0.0));
  EXPECT_TRUE(g.opacityLogit.isZero(0.0));
  EXPECT_TRUE(g.color.isZero(0.0));
}

TEST(RenderBackward, SingleGaussianSumOfPixels) {
  const Camera cam = frontCamera(16, 16, 16);
  GaussianCloud c(1);
  c.positions.row(0) << 0.07, -0.05, 2.0;
  c.rotations.row(0) = Eigen::Vector4d(0.9, 0.2, -0.3, 0.25).normalized().transpose();
  c.logScales.row(0) << std::log(0.25), std::log(0.35), std::log(0.3);
  c.opacityLogits[0] = 0.3;
  c.colors.row(0) << 0.8, 0.4, 0.2;
  std::vector<gemtest::ParamRef> params;
  for (int k = 0; k < 3; ++k) params.push_back({0, 0, k});
  for (int k = 0; k < 4; ++k) params.push_back({1, 0, k});
  for (int k = 0; k < 3; ++k) params.push_back({2, 0, k});
  params.push_back({3, 0, 0});
  for (int k = 0; k < 3; ++k) params.push_back({4, 0, k});
  checkGradients(c, cam, {0.1, 0.2, 0.3}, ImageBuffer(16, 16, 1.0), params);
}

TEST(RenderBackward, TenGaussiansRandomUpstream) {
  std::mt19937_64 rng(77);
  const Camera cam = frontCamera(16, 16, 16);
  gemtest::SceneRanges r;
  r.xy = 0.6;
  r.scaleMin = 0.25;
  r.scaleMax = 0.5;
  r.logitMin = -1.0;
  r.logitMax = 0.5;
  const auto c = gemtest::randomCloud(10, rng, r);
  const ImageBuffer w = gemtest::randomImage(16, 16, rng, -1, 1);
  std::uniform_int_distribution<int> group(0, 4), row(0, 9), col(0, 3);
  std::vector<gemtest::ParamRef> params;
  for (int i = 0; i < 25; ++i) {
    const int g = group(rng);
    int k = col(rng);
    if (g == 3) k = 0;
    if (g != 1) k = k % 3;
    params.push_back({g, row(rng), k});
  }
  checkGradients(c, cam, {0.2, 0.2, 0.2}, w, params);
}

TEST(RenderBackward, MismatchedCameraIsContractViolation) {
  const Camera cam = frontCamera(16, 16, 16);
  const auto fwd = renderForward(GaussianCloud(1), cam, {0, 0, 0});
  Camera other = cam;
  other.fx = 17;
  EXPECT_THROW(renderBackward(fwd.sorted, other, ImageBuffer(16, 16)), ContractViolation);
  EXPECT_THROW(renderBackward(fwd.sorted, cam, ImageBuffer(8, 16)), ContractViolation);
}
