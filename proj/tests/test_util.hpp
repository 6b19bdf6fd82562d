#pragma once

#include <gem/core.hpp>
#include <gem/image.hpp>
#include <gem/renderer.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace gemtest {
using namespace gem;

inline Camera frontCamera(int w, int h, double f) {
  Camera cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = f;
  cam.cx = 0.5 * (w - 1);
  cam.cy = 0.5 * (h - 1);
  return cam;
}

inline Eigen::Vector4d randomQuaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

struct SceneRanges {
  double xy = 1.0;
  double zMin = 2.5, zMax = 4.0;
  double scaleMin = 0.05, scaleMax = 0.3;
  double logitMin = -1.0, logitMax = 2.0;
};

// Random cloud in front of a camera at the origin looking down +z.
inline GaussianCloud randomCloud(std::size_t n, std::mt19937_64& rng, const SceneRanges& r = {}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianCloud c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    c.positions.row(row) << r.xy * (2 * u(rng) - 1), r.xy * (2 * u(rng) - 1),
        r.zMin + (r.zMax - r.zMin) * u(rng);
    c.rotations.row(row) = randomQuaternion(rng).transpose();
    for (int k = 0; k < 3; ++k)
      c.logScales(row, k) = std::log(r.scaleMin + (r.scaleMax - r.scaleMin) * u(rng));
    c.opacityLogits[row] = r.logitMin + (r.logitMax - r.logitMin) * u(rng);
    c.colors.row(row) << u(rng), u(rng), u(rng);
  }
  return c;
}

// Reference renderer: every pixel walks every visible Gaussian in depth order,
// with no tiling and no shared state.
inline ImageBuffer bruteForceRender(const GaussianCloud& cloud, const Camera& cam,
                                    const Eigen::Vector3d& bg, const RenderSettings& s = {}) {
  struct Item {
    std::size_t index;
    ProjectedGaussian p;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < cloud.count(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::Vector4d q = cloud.rotations.row(row).transpose();
    q.normalize();
    const auto p = projectCovariance(covariance3d(q, cloud.logScales.row(row).transpose()),
                                     cloud.positions.row(row).transpose(), cam, s.projection);
    if (!p) continue;
    if (!(p->cov2.determinant() > kSingularDeterminant)) continue;
    items.push_back({i, *p});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.p.depth < b.p.depth; });
  ImageBuffer img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (const Item& it : items) {
        const Eigen::Vector2d d = Eigen::Vector2d(x, y) - it.p.center;
        const double m = d.dot(it.p.cov2.inverse() * d);
        if (m > s.extentSigmas * s.extentSigmas) continue;
        const double g = evalGaussian2d(it.p.cov2, it.p.center, Eigen::Vector2d(x, y));
        const double a = std::min(s.alphaClamp, sigmoid(cloud.opacityLogits[static_cast<Eigen::Index>(it.index)]) * g);
        c += a * t * cloud.colors.row(static_cast<Eigen::Index>(it.index)).transpose();
        t *= 1.0 - a;
        if (t < s.minTransmittance) break;
      }
      c += t * bg;
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  }
  return img;
}

inline double maxAbsDiff(const ImageBuffer& a, const ImageBuffer& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
  return m;
}

inline ImageBuffer randomImage(int w, int h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageBuffer img(w, h);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

// Handle on one raw scalar parameter of a cloud.
struct ParamRef {
  int group;  // 0 position, 1 rotation, 2 logScale, 3 opacity, 4 color
  Eigen::Index row;
  int col;
};

inline double& paramAt(GaussianCloud& c, const ParamRef& p) {
  switch (p.group) {
    case 0: return c.positions(p.row, p.col);
    case 1: return c.rotations(p.row, p.col);
    case 2: return c.logScales(p.row, p.col);
    case 3: return c.opacityLogits[p.row];
    default: return c.colors(p.row, p.col);
  }
}

inline double gradAt(const RenderGradients& g, const ParamRef& p) {
  switch (p.group) {
    case 0: return g.position(p.row, p.col);
    case 1: return g.rotation(p.row, p.col);
    case 2: return g.logScale(p.row, p.col);
    case 3: return g.opacityLogit[p.row];
    default: return g.color(p.row, p.col);
  }
}

inline double weightedSum(const ImageBuffer& img, const ImageBuffer& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) s += img.pixels[i] * w.pixels[i];
  return s;
}

inline double centralDifference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool gradientClose(double analytic, double numeric, double rel, double abs) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace gemtest
