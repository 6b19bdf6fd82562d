#include <gtest/gtest.h>

#include <gem/deform.hpp>
#include <gem/synth.hpp>

#include <random>

#include "test_util.hpp"

using namespace gem;

namespace {

Eigen::Matrix3d randomRotation(std::mt19937_64& rng) { return quaternionToRotation(gemtest::randomQuaternion(rng)); }

Eigen::Matrix3d randomTriangle(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix3d t;
  for (int i = 0; i < 9; ++i) t.data()[i] = n(rng);
  return t;
}

// Affine map A x + b sending v0, v1, v2 and v0 + unit normal of the canonical
// triangle onto the same four points of the deformed one; A is the oracle for J.
Eigen::Matrix3d affineFit(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  auto corners = [](const Eigen::Matrix3d& t) {
    Eigen::Matrix<double, 4, 3> p;
    p.topRows<3>() = t;
    const Eigen::Vector3d n = (t.row(1) - t.row(0)).cross(t.row(2) - t.row(0)).normalized();
    p.row(3) = t.row(0) + n.transpose();
    return p;
  };
  const auto p = corners(a), q = corners(b);
  Eigen::Matrix4d m;
  m.leftCols<3>() = p;
  m.col(3).setOnes();
  const Eigen::Matrix<double, 4, 3> x = m.fullPivLu().solve(q);
  return x.topRows<3>().transpose();
}

struct Fixture {
  CorrespondenceMesh mesh;
  TexelLayout layout;
  GaussianCloud cloud;
};

// Face proxy with Gaussians pushed off the surface so the J * offset term matters.
Fixture makeFixture(std::mt19937_64& rng, int tex = 16) {
  Fixture f;
  f.mesh = faceProxyMesh(2);
  f.layout = coverageLayout(f.mesh, tex, tex);
  f.mesh.texelBinding = bindTexels(f.mesh, f.layout);
  f.cloud = canonicalGaussians(f.mesh, f.layout, 3);
  std::normal_distribution<double> n(0.0, 0.02);
  for (Eigen::Index i = 0; i < f.cloud.positions.size(); ++i) f.cloud.positions.data()[i] += n(rng);
  return f;
}

RowMatX3 rigid(const RowMatX3& v, const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  return ((v * r.transpose()).rowwise() + t.transpose()).eval();
}

}  // namespace

TEST(FrenetFrame, UnitRightTriangle) {
  Eigen::Matrix3d tri;
  tri << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  EXPECT_EQ(frenetFrame(tri), Eigen::Matrix3d::Identity());
  Eigen::Matrix3d moved = tri.rowwise() + Eigen::RowVector3d(3, -2, 7);
  EXPECT_EQ(frenetFrame(moved), Eigen::Matrix3d::Identity());
}

TEST(FrenetFrame, RotatesWithTheTriangle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Matrix3d tri = randomTriangle(rng), r = randomRotation(rng);
    const Eigen::Matrix3d rotated = tri * r.transpose();
    EXPECT_LT((frenetFrame(rotated) - r * frenetFrame(tri)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FrenetFrame, DegenerateTriangleNamesItsId) {
  Eigen::Matrix3d tri;
  tri << 0, 0, 0, 1, 1, 1, 2, 2, 2;
  try {
    frenetFrame(tri, 42);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
}

TEST(DeformationGradient, IdentityAndRigid) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Matrix3d tri = randomTriangle(rng), r = randomRotation(rng);
    const Eigen::Matrix3d e = frenetFrame(tri);
    EXPECT_EQ(deformationGradient(e, e), Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d moved = (tri * r.transpose()).rowwise() + Eigen::RowVector3d(1, 2, 3);
    EXPECT_LT((deformationGradient(e, frenetFrame(moved)) - r).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(DeformationGradient, UniformScaleKeepsNormalDirection) {
  Eigen::Matrix3d tri;
  tri << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  const Eigen::Matrix3d j = deformationGradient(frenetFrame(tri), frenetFrame(2.0 * tri));
  EXPECT_LT((j - Eigen::Vector3d(2, 2, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((j - affineFit(tri, 2.0 * tri)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DeformationGradient, MatchesAffineFitOnRandomTriangles) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Matrix3d a = randomTriangle(rng), b = randomTriangle(rng);
    const Eigen::Matrix3d j = deformationGradient(frenetFrame(a), frenetFrame(b));
    EXPECT_LT((j - affineFit(a, b)).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, j.norm()));
  }
}

TEST(DeformationGradient, SingularCanonicalFrameThrows) {
  EXPECT_THROW(deformationGradient(Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Identity()), InvalidInput);
}

TEST(Polar, FactorsReassemble) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Matrix3d a = randomTriangle(rng), b = randomTriangle(rng);
    const Eigen::Matrix3d j = deformationGradient(frenetFrame(a), frenetFrame(b));
    const PolarFactors p = polarDecomposition(j);
    EXPECT_LT((p.rotation * p.stretch - j).cwiseAbs().maxCoeff(), 1e-10 * j.norm());
    EXPECT_LT((p.rotation * p.rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(p.rotation.determinant(), 1.0, 1e-12);
    EXPECT_LT((p.stretch - p.stretch.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ApplyDeformation, IdenticalMeshIsBitwiseIdentity) {
  std::mt19937_64 rng(5);
  const Fixture f = makeFixture(rng);
  const GaussianCloud out = applyDeformation(f.cloud, f.mesh, f.mesh);
  EXPECT_EQ(out.positions, f.cloud.positions);
  EXPECT_EQ(out.rotations, f.cloud.rotations);
  EXPECT_EQ(out.logScales, f.cloud.logScales);
  EXPECT_EQ(out.opacityLogits, f.cloud.opacityLogits);
  EXPECT_EQ(out.colors, f.cloud.colors);
}

TEST(ApplyDeformation, RigidMotionIsRenderEquivariant) {
  std::mt19937_64 rng(6);
  const Fixture f = makeFixture(rng);
  const Eigen::Matrix3d r = quaternionToRotation(Eigen::Vector4d(0.95, 0.1, 0.25, -0.15).normalized());
  const Eigen::Vector3d t(0.3, -0.2, 0.5);
  const GaussianCloud moved = applyDeformation(f.cloud, f.mesh, f.mesh.withVertices(rigid(f.mesh.vertices, r, t)));
  for (Eigen::Index i = 0; i < f.cloud.positions.rows(); ++i) {
    const Eigen::Vector3d expected = r * f.cloud.positions.row(i).transpose() + t;
    EXPECT_LT((moved.positions.row(i).transpose() - expected).norm(), 1e-12);
  }
  const Camera cam = frontCameras(1, 48).front();
  Camera co = cam;
  Eigen::Matrix4d motion = Eigen::Matrix4d::Identity();
  motion.topLeftCorner<3, 3>() = r;
  motion.topRightCorner<3, 1>() = t;
  co.worldToCamera = cam.worldToCamera * motion.inverse();
  const Eigen::Vector3d bg(0.1, 0.2, 0.3);
  EXPECT_LT(gemtest::maxAbsDiff(renderForward(f.cloud, cam, bg).image, renderForward(moved, co, bg).image), 1e-6);
}

TEST(ApplyDeformation, TangentStretchDoublesCovarianceAxis) {
  CorrespondenceMesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.triangles.resize(1, 3);
  m.triangles << 0, 1, 2;
  m.texelBinding = {{0, Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3)}};
  GaussianCloud c(1);
  c.positions.row(0) << 1.0 / 3, 1.0 / 3, 0.05;
  c.logScales.row(0) << std::log(0.1), std::log(0.05), std::log(0.02);
  RowMatX3 stretched = m.vertices;
  stretched(1, 0) = 2.0;  // tangent v1 - v0 doubles
  const GaussianCloud out = applyDeformation(c, m, m.withVertices(stretched));
  const Eigen::Matrix3d before = covariance3d(c.rotations.row(0).transpose(), c.logScales.row(0).transpose()).matrix;
  const Eigen::Matrix3d after = covariance3d(out.rotations.row(0).transpose(), out.logScales.row(0).transpose()).matrix;
  const Eigen::Vector3d tangent = Eigen::Vector3d::UnitX();
  EXPECT_NEAR(std::sqrt(tangent.dot(after * tangent) / tangent.dot(before * tangent)), 2.0, 1e-12);
  EXPECT_NEAR(after(1, 1), before(1, 1), 1e-15);
  EXPECT_NEAR(after(2, 2), before(2, 2), 1e-15);
  EXPECT_NEAR(out.positions(0, 0), 2.0 / 3, 1e-15);

  const GaussianCloud rotOnly = applyDeformation(c, m, m.withVertices(stretched), DeformOptions{false});
  EXPECT_EQ(rotOnly.logScales, c.logScales);
}

TEST(ApplyDeformation, ComposesAcrossFrames) {
  std::mt19937_64 rng(7);
  const Fixture f = makeFixture(rng);
  const auto motion = defaultMotion(6, 0.08, 0.8, 11);
  Eigen::VectorXd wb(6), wc(6);
  wb << 0.5, -0.3, 0.8, 0.1, 0.2, -0.6;
  wc << -0.7, 0.4, 0.2, 0.9, -0.3, 0.5;
  const CorrespondenceMesh b = f.mesh.withVertices(blendVertices(f.mesh.vertices, motion, wb));
  const CorrespondenceMesh c = f.mesh.withVertices(blendVertices(f.mesh.vertices, motion, wc));
  const GaussianCloud viaB = applyDeformation(applyDeformation(f.cloud, f.mesh, b), b, c);
  const GaussianCloud direct = applyDeformation(f.cloud, f.mesh, c);
  EXPECT_LT((viaB.positions - direct.positions).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ApplyDeformation, DegenerateTriangleFallsBackToTranslation) {
  std::mt19937_64 rng(8);
  const Fixture f = makeFixture(rng, 8);
  RowMatX3 v = f.mesh.vertices;
  const int tri = f.mesh.texelBinding.front().triangle;
  v.row(f.mesh.triangles(tri, 1)) = v.row(f.mesh.triangles(tri, 0));
  DeformStats st;
  const GaussianCloud out = applyDeformation(f.cloud, f.mesh, f.mesh.withVertices(v), {}, &st);
  // Neighbours sharing the collapsed edge degenerate too.
  const CorrespondenceMesh collapsed = f.mesh.withVertices(v);
  std::size_t bound = 0;
  for (const auto& b : f.mesh.texelBinding) bound += !(triangleArea(collapsed.triangle(b.triangle)) > kMinTriangleArea);
  EXPECT_GE(bound, 1u);
  EXPECT_EQ(st.translationOnly, bound);
  EXPECT_EQ(out.rotations.row(0), f.cloud.rotations.row(0));
  EXPECT_NO_THROW(out.validate());
}

TEST(ApplyDeformation, RejectsTopologyMismatch) {
  std::mt19937_64 rng(9);
  const Fixture f = makeFixture(rng, 8);
  CorrespondenceMesh other = f.mesh;
  other.triangles(0, 0) = other.triangles(0, 1);
  EXPECT_THROW(applyDeformation(f.cloud, f.mesh, other), InvalidInput);
}

TEST(BindTexels, BarycentricsReproduceTexelCenters) {
  const CorrespondenceMesh mesh = faceProxyMesh(2);
  const TexelLayout layout = coverageLayout(mesh, 24, 24);
  const auto binding = bindTexels(mesh, layout);
  ASSERT_EQ(binding.size(), layout.activeCount());
  std::size_t i = 0;
  for (std::size_t t = 0; t < layout.activeMask.size(); ++t) {
    if (!layout.activeMask[t]) continue;
    const TexelBinding& b = binding[i++];
    EXPECT_GE(b.weights.minCoeff(), 0.0);
    EXPECT_NEAR(b.weights.sum(), 1.0, 1e-12);
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    for (int j = 0; j < 3; ++j) uv += b.weights[j] * mesh.uv.row(mesh.triangles(b.triangle, j)).transpose();
    EXPECT_NEAR(uv.x(), ((t % 24) + 0.5) / 24, 1e-9);
    EXPECT_NEAR(uv.y(), ((t / 24) + 0.5) / 24, 1e-9);
  }
}

TEST(BindTexels, OverlapGoesToLowestTriangleAndUncoveredThrows) {
  CorrespondenceMesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.uv.resize(3, 2);
  m.uv << 0, 0, 1, 0, 0, 1;
  m.triangles.resize(2, 3);
  m.triangles << 0, 1, 2, 0, 1, 2;
  const TexelLayout cover = coverageLayout(m, 4, 4);
  for (const auto& b : bindTexels(m, cover)) EXPECT_EQ(b.triangle, 0);
  EXPECT_THROW(bindTexels(m, TexelLayout::full(4, 4)), InvalidInput);
}

TEST(Obj, RoundTrip) {
  CorrespondenceMesh m = faceProxyMesh(1);
  const CorrespondenceMesh back = readObj(writeObj(m));
  EXPECT_EQ(back.vertices, m.vertices);
  EXPECT_EQ(back.uv, m.uv);
  EXPECT_EQ(back.triangles, m.triangles);
}

TEST(Obj, MalformedInputIsParseError) {
  EXPECT_THROW(readObj("v 0 0 0\nf 1 2 3\n"), ParseError);
  EXPECT_THROW(readObj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"), ParseError);
  EXPECT_THROW(readObj("v 0 0\n"), ParseError);
  const auto m = readObj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n");
  EXPECT_EQ(m.triangles.rows(), 1);
  EXPECT_EQ(m.uv(1, 0), 1.0);
}
