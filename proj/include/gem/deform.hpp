#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gem/core.hpp"
#include "gem/eigenmodel.hpp"
#include "gem/error.hpp"

namespace gem {

using RowMatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using TriangleIndices = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct TexelBinding {
  int triangle = -1;
  Eigen::Vector3d weights = Eigen::Vector3d::Zero();  // barycentric, sums to 1
};

// Triangle mesh with UVs and the texel-to-surface binding of its Gaussian map.
struct CorrespondenceMesh {
  RowMatX3 vertices;
  TriangleIndices triangles;
  RowMatX2 uv;
  std::vector<TexelBinding> texelBinding;

  Eigen::Matrix3d triangle(int f) const {
    Eigen::Matrix3d t;
    for (int j = 0; j < 3; ++j) t.row(j) = vertices.row(triangles(f, j));
    return t;
  }

  // Same topology and binding, different vertex positions.
  CorrespondenceMesh withVertices(const RowMatX3& v) const {
    CorrespondenceMesh m = *this;
    m.vertices = v;
    return m;
  }

  void validate() const {
    const auto v = vertices.rows();
    if (uv.rows() != 0 && uv.rows() != v) throw InvalidInput("mesh: uv count differs from vertex count");
    for (Eigen::Index f = 0; f < triangles.rows(); ++f)
      for (int j = 0; j < 3; ++j)
        if (triangles(f, j) < 0 || triangles(f, j) >= v)
          throw InvalidInput("mesh: triangle " + std::to_string(f) + " indexes a missing vertex");
    for (const auto& b : texelBinding) {
      if (b.triangle < 0 || b.triangle >= triangles.rows()) throw InvalidInput("mesh: binding to a missing triangle");
      if ((b.weights.array() < 0.0).any() || std::abs(b.weights.sum() - 1.0) > 1e-6)
        throw InvalidInput("mesh: barycentric weights must be non-negative and sum to one");
    }
  }
};

inline constexpr double kMinTriangleArea = 1e-12;

inline double triangleArea(const Eigen::Matrix3d& tri) {
  return 0.5 * (tri.row(1) - tri.row(0)).cross(tri.row(2) - tri.row(0)).norm();
}

// Columns: tangent v1-v0, bitangent v2-v0, unit normal.
inline Eigen::Matrix3d frenetFrame(const Eigen::Matrix3d& tri, int triangleId = -1) {
  if (!(triangleArea(tri) > kMinTriangleArea))
    throw InvalidInput("frenetFrame: degenerate triangle " + std::to_string(triangleId));
  Eigen::Matrix3d e;
  e.col(0) = (tri.row(1) - tri.row(0)).transpose();
  e.col(1) = (tri.row(2) - tri.row(0)).transpose();
  e.col(2) = e.col(0).cross(e.col(1)).normalized();
  return e;
}

// J = E_def E_canon^-1, evaluated as I + (E_def - E_canon) E_canon^-1 so that
// identical frames give exactly the identity.
inline Eigen::Matrix3d deformationGradient(const Eigen::Matrix3d& canonical, const Eigen::Matrix3d& deformed) {
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(canonical);
  if (!lu.isInvertible()) throw InvalidInput("deformationGradient: singular canonical frame");
  const Eigen::Matrix3d delta = deformed - canonical;
  if ((delta.array() == 0.0).all()) return Eigen::Matrix3d::Identity();
  return Eigen::Matrix3d::Identity() + delta * lu.inverse();
}

struct PolarFactors {
  Eigen::Matrix3d rotation;
  Eigen::Matrix3d stretch;  // symmetric positive semi-definite, J = rotation * stretch
};

inline PolarFactors polarDecomposition(const Eigen::Matrix3d& j) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(j, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d s = svd.singularValues();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;
    s[2] *= -1.0;
  }
  return {u * v.transpose(), v * s.asDiagonal() * v.transpose()};
}

struct DeformOptions {
  // Add the polar stretch along each Gaussian axis to its log-scale.
  bool propagateScale = true;
};

struct DeformStats {
  std::size_t translationOnly = 0;  // Gaussians on degenerate deformed triangles
};

inline GaussianCloud applyDeformation(const GaussianCloud& cloud, const CorrespondenceMesh& canonical,
                                      const CorrespondenceMesh& deformed, const DeformOptions& opts = {},
                                      DeformStats* stats = nullptr) {
  if (canonical.triangles.rows() != deformed.triangles.rows() ||
      canonical.vertices.rows() != deformed.vertices.rows() || canonical.triangles != deformed.triangles)
    throw InvalidInput("applyDeformation: meshes differ in topology");
  if (canonical.texelBinding.size() != cloud.count())
    throw InvalidInput("applyDeformation: binding count differs from the Gaussian count");

  GaussianCloud out = cloud;
  DeformStats st;
  const auto nf = canonical.triangles.rows();

  struct TriangleXform {
    bool unchanged = false;
    bool degenerate = false;
    Eigen::Matrix3d j, rotation, stretch;
    Eigen::Vector4d q;
    bool rigid = true;
  };
  std::vector<TriangleXform> xf(static_cast<std::size_t>(nf));
  std::vector<char> used(static_cast<std::size_t>(nf), 0);
  for (const auto& b : canonical.texelBinding) used[static_cast<std::size_t>(b.triangle)] = 1;
  for (Eigen::Index f = 0; f < nf; ++f) {
    if (!used[static_cast<std::size_t>(f)]) continue;
    TriangleXform& x = xf[static_cast<std::size_t>(f)];
    const Eigen::Matrix3d a = canonical.triangle(static_cast<int>(f));
    const Eigen::Matrix3d b = deformed.triangle(static_cast<int>(f));
    if ((a.array() == b.array()).all()) {
      x.unchanged = true;
      continue;
    }
    if (!(triangleArea(b) > kMinTriangleArea)) {
      x.degenerate = true;
      continue;
    }
    x.j = deformationGradient(frenetFrame(a, static_cast<int>(f)), frenetFrame(b, static_cast<int>(f)));
    const PolarFactors p = polarDecomposition(x.j);
    x.rotation = p.rotation;
    x.stretch = p.stretch;
    x.q = rotationToQuaternion(p.rotation);
    x.rigid = (p.stretch - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12;
  }

  for (std::size_t i = 0; i < cloud.count(); ++i) {
    const TexelBinding& b = canonical.texelBinding[i];
    const TriangleXform& x = xf[static_cast<std::size_t>(b.triangle)];
    if (x.unchanged) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::Vector3d pc = canonical.triangle(b.triangle).transpose() * b.weights;
    const Eigen::Vector3d pd = deformed.triangle(b.triangle).transpose() * b.weights;
    const Eigen::Vector3d offset = cloud.positions.row(row).transpose() - pc;
    if (x.degenerate) {
      out.positions.row(row) = (pd + offset).transpose();
      ++st.translationOnly;
      continue;
    }
    out.positions.row(row) = (pd + x.j * offset).transpose();
    const Eigen::Vector4d q0 = cloud.rotations.row(row).transpose();
    if (opts.propagateScale && !x.rigid) {
      const Eigen::Matrix3d axes = quaternionToRotation(q0.normalized());
      for (int k = 0; k < 3; ++k) out.logScales(row, k) += std::log((x.stretch * axes.col(k)).norm());
    }
    out.rotations.row(row) = quaternionMultiply(x.q, q0).normalized().transpose();
  }
  if (stats) *stats = st;
  return out;
}

namespace detail {

// Per-texel binding over the whole W x H grid; uncovered texels keep triangle -1.
// Triangles are visited in index order and never overwrite, so ties go to the
// lowest index.
inline std::vector<TexelBinding> rasterizeUv(const CorrespondenceMesh& mesh, int w, int h) {
  std::vector<TexelBinding> grid(static_cast<std::size_t>(w) * h);
  auto edge = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& q) {
    return (b - a).x() * (q - a).y() - (b - a).y() * (q - a).x();
  };
  for (Eigen::Index f = 0; f < mesh.triangles.rows(); ++f) {
    Eigen::Vector2d p[3];
    for (int j = 0; j < 3; ++j) p[j] = mesh.uv.row(mesh.triangles(f, j)).transpose();
    const double area = edge(p[0], p[1], p[2]);
    if (std::abs(area) <= 1e-18) continue;
    const double minU = std::min({p[0].x(), p[1].x(), p[2].x()}), maxU = std::max({p[0].x(), p[1].x(), p[2].x()});
    const double minV = std::min({p[0].y(), p[1].y(), p[2].y()}), maxV = std::max({p[0].y(), p[1].y(), p[2].y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(minU * w - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(maxU * w - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(minV * h - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(maxV * h - 0.5)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        TexelBinding& slot = grid[static_cast<std::size_t>(y) * w + x];
        if (slot.triangle >= 0) continue;
        const Eigen::Vector2d c((x + 0.5) / w, (y + 0.5) / h);
        Eigen::Vector3d bc(edge(p[1], p[2], c), edge(p[2], p[0], c), edge(p[0], p[1], c));
        bc /= area;
        if ((bc.array() < -1e-12).any()) continue;
        bc = bc.cwiseMax(0.0);
        slot.triangle = static_cast<int>(f);
        slot.weights = bc / bc.sum();
      }
  }
  return grid;
}

}  // namespace detail

// Binds every active texel (row-major) to the lowest-index triangle whose UV
// footprint contains the texel center. Throws when an active texel is uncovered.
inline std::vector<TexelBinding> bindTexels(const CorrespondenceMesh& mesh, const TexelLayout& layout) {
  if (mesh.uv.rows() != mesh.vertices.rows()) throw InvalidInput("bindTexels: mesh has no per-vertex uv");
  const auto grid = detail::rasterizeUv(mesh, layout.texWidth, layout.texHeight);
  std::vector<TexelBinding> out;
  out.reserve(layout.activeCount());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!layout.activeMask[i]) continue;
    if (grid[i].triangle < 0)
      throw InvalidInput("bindTexels: active texel " + std::to_string(i) + " is not covered by any triangle");
    out.push_back(grid[i]);
  }
  return out;
}

// Layout whose active texels are exactly those covered by some triangle in UV.
inline TexelLayout coverageLayout(const CorrespondenceMesh& mesh, int w, int h) {
  const auto grid = detail::rasterizeUv(mesh, w, h);
  TexelLayout out{w, h, std::vector<std::uint8_t>(grid.size(), 0)};
  for (std::size_t i = 0; i < grid.size(); ++i) out.activeMask[i] = grid[i].triangle >= 0 ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Wavefront OBJ (v, vt, f with v/vt indices)

inline std::string writeObj(const CorrespondenceMesh& mesh) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    os << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  for (Eigen::Index i = 0; i < mesh.uv.rows(); ++i) os << "vt " << mesh.uv(i, 0) << ' ' << mesh.uv(i, 1) << '\n';
  const bool hasUv = mesh.uv.rows() == mesh.vertices.rows();
  for (Eigen::Index f = 0; f < mesh.triangles.rows(); ++f) {
    os << 'f';
    for (int j = 0; j < 3; ++j) {
      const int v = mesh.triangles(f, j) + 1;
      os << ' ' << v;
      if (hasUv) os << '/' << v;
    }
    os << '\n';
  }
  return os.str();
}

inline CorrespondenceMesh readObj(const std::string& text) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector2d> tex;
  std::vector<std::array<int, 3>> faces, faceUv;
  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(ParseErrorKind::Inconsistent, "obj line " + std::to_string(lineNo) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineNo;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ls >> v[0] >> v[1] >> v[2])) fail("bad vertex");
      verts.push_back(v);
    } else if (tag == "vt") {
      Eigen::Vector2d t;
      if (!(ls >> t[0] >> t[1])) fail("bad texture coordinate");
      tex.push_back(t);
    } else if (tag == "f") {
      std::array<int, 3> fv{}, ft{-1, -1, -1};
      for (int j = 0; j < 3; ++j) {
        std::string tok;
        if (!(ls >> tok)) fail("faces must be triangles");
        const auto slash = tok.find('/');
        try {
          fv[static_cast<std::size_t>(j)] = std::stoi(tok.substr(0, slash)) - 1;
          if (slash != std::string::npos) {
            const auto rest = tok.substr(slash + 1);
            const auto end = rest.find('/');
            if (!rest.empty() && end != 0) ft[static_cast<std::size_t>(j)] = std::stoi(rest.substr(0, end)) - 1;
          }
        } catch (const std::exception&) {
          fail("bad face index '" + tok + "'");
        }
      }
      std::string extra;
      if (ls >> extra) fail("faces must be triangles");
      faces.push_back(fv);
      faceUv.push_back(ft);
    }
  }
  CorrespondenceMesh m;
  m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  m.triangles.resize(static_cast<Eigen::Index>(faces.size()), 3);
  if (!tex.empty()) m.uv = RowMatX2::Zero(static_cast<Eigen::Index>(verts.size()), 2);
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int j = 0; j < 3; ++j) {
      const int v = faces[f][static_cast<std::size_t>(j)], t = faceUv[f][static_cast<std::size_t>(j)];
      if (v < 0 || v >= static_cast<int>(verts.size())) fail("face references a missing vertex");
      m.triangles(static_cast<Eigen::Index>(f), j) = v;
      if (!tex.empty()) {
        if (t < 0 || t >= static_cast<int>(tex.size())) fail("face references a missing texture coordinate");
        m.uv.row(v) = tex[static_cast<std::size_t>(t)].transpose();
      }
    }
  return m;
}

}  // namespace gem
