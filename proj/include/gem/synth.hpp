#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "gem/deform.hpp"
#include "gem/parallel.hpp"
#include "gem/renderer.hpp"

namespace gem {

// One displacement field d(v) = direction * sin(spatial . v + spatialPhase),
// driven over time by weight * sin(2 pi frequency f / F + phase).
struct BlendShape {
  double weight = 0.0;
  double frequency = 1.0;
  double phase = 0.0;
  Eigen::Vector3d spatial = Eigen::Vector3d::Zero();
  double spatialPhase = 0.0;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
};

struct SynthSpec {
  std::uint64_t seed = 1;
  int texResolution = 32;
  int frameCount = 20;
  int cameraCount = 3;
  int imageSize = 64;
  int subdivisions = 3;
  std::vector<BlendShape> motion;
  double vertexNoise = 0.0;  // per-frame i.i.d. vertex jitter (stddev)
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  unsigned threads = 0;

  void validate() const {
    if (texResolution < 2 || frameCount < 0 || cameraCount < 0 || imageSize < 1 || subdivisions < 0 ||
        subdivisions > 6 || !(vertexNoise >= 0.0))
      throw InvalidInput("SynthSpec: out-of-range field");
  }
};

// Independent generator for (seed, stream, tag); streams never depend on
// evaluation order.
inline std::mt19937_64 streamRng(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), tag};
  return std::mt19937_64(seq);
}

// Blend shapes with geometrically decaying weights and seed-derived fields.
inline std::vector<BlendShape> defaultMotion(int count, double amplitude, double decay, std::uint64_t seed) {
  auto rng = streamRng(seed, 0, 0x6d6f74u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<BlendShape> out;
  double w = amplitude;
  for (int j = 0; j < count; ++j) {
    BlendShape b;
    b.weight = w;
    b.frequency = 0.5 + 3.5 * u(rng);
    b.phase = 0.0;  // frame 0 is the neutral pose
    b.spatial = Eigen::Vector3d(n(rng), n(rng), n(rng)) * (1.0 + 0.5 * j);
    b.spatialPhase = 2.0 * M_PI * u(rng);
    b.direction = Eigen::Vector3d(n(rng), n(rng), n(rng) + 1.5).normalized();
    out.push_back(b);
    w *= decay;
  }
  return out;
}

namespace detail {

inline std::pair<RowMatX3, TriangleIndices> icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                                    {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  RowMatX3 verts(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) verts.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  TriangleIndices tris(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int j = 0; j < 3; ++j) tris(static_cast<Eigen::Index>(i), j) = f[i][static_cast<std::size_t>(j)];
  return {verts, tris};
}

}  // namespace detail

// Front cap of a bumpy ellipsoid facing +z, with orthographic UVs taken from the
// undisplaced sphere direction.
inline CorrespondenceMesh faceProxyMesh(int subdivisions) {
  const auto [sphere, tris] = detail::icosphere(subdivisions);
  std::vector<int> remap(static_cast<std::size_t>(sphere.rows()), -1);
  std::vector<std::array<int, 3>> kept;
  int nv = 0;
  for (Eigen::Index f = 0; f < tris.rows(); ++f) {
    bool front = true;
    for (int j = 0; j < 3; ++j) front = front && sphere(tris(f, j), 2) > 0.05;
    if (!front) continue;
    std::array<int, 3> tri{};
    for (int j = 0; j < 3; ++j) {
      int& slot = remap[static_cast<std::size_t>(tris(f, j))];
      if (slot < 0) slot = nv++;
      tri[static_cast<std::size_t>(j)] = slot;
    }
    kept.push_back(tri);
  }

  struct Bump {
    Eigen::Vector3d center;
    double height, width;
  };
  const Bump bumps[] = {{Eigen::Vector3d(0.0, -0.05, 1.0), 0.22, 0.22},    // nose
                        {Eigen::Vector3d(-0.35, 0.3, 0.88), 0.06, 0.18},   // brows
                        {Eigen::Vector3d(0.35, 0.32, 0.88), 0.08, 0.16},
                        {Eigen::Vector3d(0.45, -0.35, 0.82), 0.07, 0.25},  // one cheek
                        {Eigen::Vector3d(0.0, -0.5, 0.86), -0.05, 0.15}};  // mouth

  CorrespondenceMesh m;
  m.vertices.resize(nv, 3);
  m.uv.resize(nv, 2);
  for (Eigen::Index i = 0; i < sphere.rows(); ++i) {
    const int r = remap[static_cast<std::size_t>(i)];
    if (r < 0) continue;
    const Eigen::Vector3d d = sphere.row(i).transpose();
    double radius = 1.0;
    for (const Bump& b : bumps) radius += b.height * std::exp(-(d - b.center.normalized()).squaredNorm() / (b.width * b.width));
    const Eigen::Vector3d p = radius * d;
    m.vertices.row(r) << 0.85 * p.x(), 1.1 * p.y(), 0.9 * p.z();
    m.uv.row(r) << 0.5 * (d.x() + 1.0), 0.5 * (1.0 - d.y());
  }
  m.triangles.resize(static_cast<Eigen::Index>(kept.size()), 3);
  for (std::size_t f = 0; f < kept.size(); ++f)
    for (int j = 0; j < 3; ++j) m.triangles(static_cast<Eigen::Index>(f), j) = kept[f][static_cast<std::size_t>(j)];
  return m;
}

// Cameras on a horizontal arc in front of the face looking at the origin.
inline std::vector<Camera> frontCameras(int count, int imageSize, double distance = 4.0) {
  std::vector<Camera> out;
  for (int c = 0; c < count; ++c) {
    const double theta = count == 1 ? 0.0 : (-0.6 + 1.2 * c / (count - 1));
    const double elevation = 0.15 * std::sin(1.7 * c);
    Camera cam;
    cam.width = cam.height = imageSize;
    cam.fx = cam.fy = 1.45 * imageSize;
    cam.cx = cam.cy = 0.5 * (imageSize - 1);
    const Eigen::Vector3d eye =
        distance * Eigen::Vector3d(std::sin(theta) * std::cos(elevation), std::sin(elevation),
                                   std::cos(theta) * std::cos(elevation));
    cam.worldToCamera = lookAt(eye, Eigen::Vector3d::Zero());
    out.push_back(cam);
  }
  return out;
}

inline Eigen::Vector3d proceduralColor(double u, double v) {
  Eigen::Vector3d base(0.82, 0.6, 0.48);
  const double stripes = 0.5 + 0.5 * std::sin(18.0 * u + 4.0 * std::sin(7.0 * v));
  const double blotch = std::exp(-((u - 0.35) * (u - 0.35) + (v - 0.38) * (v - 0.38)) / 0.004) +
                        std::exp(-((u - 0.65) * (u - 0.65) + (v - 0.38) * (v - 0.38)) / 0.004);
  Eigen::Vector3d c = base * (0.75 + 0.25 * stripes);
  c = (1.0 - blotch) * c + blotch * Eigen::Vector3d(0.1, 0.15, 0.3);
  c[0] += 0.15 * std::sin(11.0 * v) * (v > 0.7 ? 1.0 : 0.0);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

struct SynthSequence {
  CorrespondenceMesh canonical;
  TexelLayout layout;
  GaussianCloud canonicalCloud;
  std::vector<RowMatX3> frameVertices;
  std::vector<GaussianCloud> clouds;
  std::vector<Camera> cameras;
  Eigen::MatrixXd weights;  // frames x blend shapes, ground-truth drivers
};

// Canonical Gaussians: one per active texel on the surface, aligned to its
// triangle frame and sized to the texel footprint.
inline GaussianCloud canonicalGaussians(const CorrespondenceMesh& mesh, const TexelLayout& layout, std::uint64_t seed) {
  const std::size_t n = mesh.texelBinding.size();
  GaussianCloud c(n);
  auto rng = streamRng(seed, 0, 0x636c64u);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double texelUvArea = 1.0 / (static_cast<double>(layout.texWidth) * layout.texHeight);
  std::size_t i = 0;
  for (std::size_t t = 0; t < layout.activeMask.size(); ++t) {
    if (!layout.activeMask[t]) continue;
    const TexelBinding& b = mesh.texelBinding[i];
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::Matrix3d tri = mesh.triangle(b.triangle);
    c.positions.row(row) = (tri.transpose() * b.weights).transpose();
    const Eigen::Matrix3d e = frenetFrame(tri, b.triangle);
    Eigen::Matrix3d r;
    r.col(0) = e.col(0).normalized();
    r.col(2) = e.col(2);
    r.col(1) = r.col(2).cross(r.col(0));
    c.rotations.row(row) = rotationToQuaternion(r).transpose();
    Eigen::Vector2d uv[3];
    for (int j = 0; j < 3; ++j) uv[j] = mesh.uv.row(mesh.triangles(b.triangle, j)).transpose();
    const double uvArea = 0.5 * std::abs((uv[1] - uv[0]).x() * (uv[2] - uv[0]).y() - (uv[1] - uv[0]).y() * (uv[2] - uv[0]).x());
    const double side = std::sqrt(triangleArea(tri) / uvArea * texelUvArea);
    c.logScales.row(row) << std::log(0.65 * side), std::log(0.65 * side), std::log(0.2 * side);
    c.opacityLogits[row] = 3.0 + 0.3 * noise(rng);
    const double u = (static_cast<double>(t % static_cast<std::size_t>(layout.texWidth)) + 0.5) / layout.texWidth;
    const double v = (static_cast<double>(t / static_cast<std::size_t>(layout.texWidth)) + 0.5) / layout.texHeight;
    const Eigen::Vector3d jitter(noise(rng), noise(rng), noise(rng));
    c.colors.row(row) = (proceduralColor(u, v) + 0.03 * jitter).cwiseMax(0.0).cwiseMin(1.0).transpose();
    ++i;
  }
  return c;
}

inline RowMatX3 blendVertices(const RowMatX3& base, const std::vector<BlendShape>& motion, const Eigen::VectorXd& w) {
  RowMatX3 out = base;
  for (std::size_t j = 0; j < motion.size(); ++j) {
    const BlendShape& b = motion[j];
    if (w[static_cast<Eigen::Index>(j)] == 0.0) continue;
    for (Eigen::Index i = 0; i < base.rows(); ++i) {
      const Eigen::Vector3d p = base.row(i).transpose();
      out.row(i) += (w[static_cast<Eigen::Index>(j)] * std::sin(b.spatial.dot(p) + b.spatialPhase) * b.direction).transpose();
    }
  }
  return out;
}

inline SynthSequence generateSequence(const SynthSpec& spec) {
  spec.validate();
  SynthSequence s;
  s.canonical = faceProxyMesh(spec.subdivisions);
  s.layout = coverageLayout(s.canonical, spec.texResolution, spec.texResolution);
  s.canonical.texelBinding = bindTexels(s.canonical, s.layout);
  s.canonicalCloud = canonicalGaussians(s.canonical, s.layout, spec.seed);
  s.cameras = frontCameras(spec.cameraCount, spec.imageSize);

  const int frames = spec.frameCount;
  const auto shapes = static_cast<Eigen::Index>(spec.motion.size());
  s.weights = Eigen::MatrixXd::Zero(frames, shapes);
  for (int f = 0; f < frames; ++f)
    for (Eigen::Index j = 0; j < shapes; ++j) {
      const BlendShape& b = spec.motion[static_cast<std::size_t>(j)];
      s.weights(f, j) = b.weight * std::sin(2.0 * M_PI * b.frequency * f / std::max(frames, 1) + b.phase);
    }

  s.frameVertices.resize(static_cast<std::size_t>(frames));
  s.clouds.resize(static_cast<std::size_t>(frames));
  parallelFor(static_cast<std::size_t>(frames), spec.threads, [&](std::size_t f) {
    RowMatX3 verts = blendVertices(s.canonical.vertices, spec.motion, s.weights.row(static_cast<Eigen::Index>(f)).transpose());
    if (spec.vertexNoise > 0.0) {
      auto rng = streamRng(spec.seed, f, 0x6e6f69u);
      std::normal_distribution<double> n(0.0, spec.vertexNoise);
      for (Eigen::Index i = 0; i < verts.size(); ++i) verts.data()[i] += n(rng);
    }
    s.clouds[f] = applyDeformation(s.canonicalCloud, s.canonical, s.canonical.withVertices(verts));
    s.frameVertices[f] = std::move(verts);
  });
  return s;
}

// Renders every (frame, camera) pair; image index is frame * cameras + camera.
inline std::vector<ImageBuffer> renderGroundTruth(const std::vector<GaussianCloud>& clouds,
                                                  const std::vector<Camera>& cameras,
                                                  const Eigen::Vector3d& background, const RenderSettings& settings = {}) {
  std::vector<ImageBuffer> out;
  out.reserve(clouds.size() * cameras.size());
  for (const auto& c : clouds)
    for (const auto& cam : cameras) out.push_back(renderForward(c, cam, background, settings).image);
  return out;
}

struct FeatureSet {
  Eigen::MatrixXd features;  // N x dim
  Eigen::MatrixXd lift;      // dim x K
  Eigen::VectorXd bias;      // the feature of an all-zero coefficient vector
};

// Features = lift * k + bias + noise, with a fixed random lift.
inline FeatureSet synthesizeFeatures(const std::vector<Eigen::VectorXd>& coefficients, int featureDim,
                                     std::uint64_t seed, double noise = 0.0) {
  if (featureDim < 1) throw InvalidInput("synthesizeFeatures: featureDim must be positive");
  const Eigen::Index k = coefficients.empty() ? 0 : coefficients.front().size();
  for (const auto& c : coefficients)
    if (c.size() != k) throw InvalidInput("synthesizeFeatures: coefficient vectors differ in length");
  auto rng = streamRng(seed, 0, 0x6c6966u);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureSet fs;
  fs.lift.resize(featureDim, k);
  for (Eigen::Index i = 0; i < fs.lift.size(); ++i) fs.lift.data()[i] = n(rng) / std::sqrt(static_cast<double>(std::max<Eigen::Index>(k, 1)));
  fs.bias.resize(featureDim);
  for (Eigen::Index i = 0; i < featureDim; ++i) fs.bias[i] = n(rng);
  fs.features.resize(static_cast<Eigen::Index>(coefficients.size()), featureDim);
  for (std::size_t r = 0; r < coefficients.size(); ++r) {
    Eigen::VectorXd f = fs.lift * coefficients[r] + fs.bias;
    if (noise > 0.0) {
      auto frng = streamRng(seed, r + 1, 0x6c6966u);
      std::normal_distribution<double> e(0.0, noise);
      for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += e(frng);
    }
    fs.features.row(static_cast<Eigen::Index>(r)) = f.transpose();
  }
  return fs;
}

}  // namespace gem
