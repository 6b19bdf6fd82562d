#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gem/core.hpp"
#include "gem/image.hpp"
#include "gem/parallel.hpp"

namespace gem {

struct RenderSettings {
  ProjectionSettings projection;
  int tileSize = 16;
  double alphaClamp = 0.999;
  double minTransmittance = 1e-4;
  // Splat support in standard deviations; contributions beyond it are dropped.
  double extentSigmas = 3.0;
  unsigned threads = 0;
};

enum class SplatStatus : std::uint8_t { Visible, Culled, Singular };

struct Splat {
  SplatStatus status = SplatStatus::Culled;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2 = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
  double depth = 0.0;
  double opacity = 0.0;
};

struct RenderStats {
  std::size_t culled = 0;
  std::size_t skippedSingular = 0;
  std::size_t maxSplatsPerTile = 0;
};

// Everything the backward pass needs from a forward call.
struct SortedSplatList {
  GaussianCloud cloud;
  Camera camera;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  RenderSettings settings;
  std::vector<Splat> splats;                   // one per Gaussian
  std::vector<std::uint32_t> order;            // visible splats, front to back
  int tilesX = 0, tilesY = 0;
  std::vector<std::vector<std::uint32_t>> tiles;  // per tile, front to back
};

struct RenderResult {
  ImageBuffer image;
  SortedSplatList sorted;
};

struct RenderGradients {
  RowMatX3 position;
  RowMatX4 rotation;
  RowMatX3 logScale;
  Eigen::VectorXd opacityLogit;
  RowMatX3 color;

  explicit RenderGradients(std::size_t n = 0)
      : position(RowMatX3::Zero(n, 3)),
        rotation(RowMatX4::Zero(n, 4)),
        logScale(RowMatX3::Zero(n, 3)),
        opacityLogit(Eigen::VectorXd::Zero(n)),
        color(RowMatX3::Zero(n, 3)) {}
};

namespace detail {

inline Eigen::Vector4d unitQuaternion(const GaussianCloud& cloud, std::size_t i) {
  Eigen::Vector4d q = cloud.rotations.row(static_cast<Eigen::Index>(i)).transpose();
  return q / q.norm();
}

inline Splat makeSplat(const GaussianCloud& cloud, std::size_t i, const Camera& cam,
                       const RenderSettings& settings) {
  const auto row = static_cast<Eigen::Index>(i);
  Splat s;
  const Covariance3 cov = covariance3d(unitQuaternion(cloud, i), cloud.logScales.row(row).transpose());
  const auto proj = projectCovariance(cov, cloud.positions.row(row).transpose(), cam, settings.projection);
  if (!proj) return s;
  s.center = proj->center;
  s.cov2 = proj->cov2;
  s.depth = proj->depth;
  s.opacity = sigmoid(cloud.opacityLogits[row]);
  const double det = s.cov2(0, 0) * s.cov2(1, 1) - s.cov2(0, 1) * s.cov2(1, 0);
  if (!(det > kSingularDeterminant) || !s.cov2.allFinite()) {
    s.status = SplatStatus::Singular;
    return s;
  }
  s.conic << s.cov2(1, 1) / det, -s.cov2(0, 1) / det, -s.cov2(1, 0) / det, s.cov2(0, 0) / det;
  s.status = SplatStatus::Visible;
  return s;
}

// Mahalanobis distance squared of `pixel` from the splat center.
inline double mahalanobis2(const Splat& s, double px, double py) {
  const double dx = px - s.center.x(), dy = py - s.center.y();
  return s.conic(0, 0) * dx * dx + (s.conic(0, 1) + s.conic(1, 0)) * dx * dy + s.conic(1, 1) * dy * dy;
}

struct Contribution {
  std::uint32_t slot;  // position within the tile list
  double alpha;
  double gauss;
  double transmittance;  // before this splat
  bool clamped;
};

}  // namespace detail

// Splats a cloud into an image with front-to-back alpha compositing over
// 16x16 tiles. Gaussians are sorted by camera depth, ties broken by index.
inline RenderResult renderForward(const GaussianCloud& cloud, const Camera& cam,
                                  const Eigen::Vector3d& background,
                                  const RenderSettings& settings = {}) {
  cam.validate();
  RenderResult result;
  SortedSplatList& list = result.sorted;
  list.cloud = cloud;
  list.camera = cam;
  list.background = background;
  list.settings = settings;
  const std::size_t n = cloud.count();
  list.splats.resize(n);
  parallelFor(n, settings.threads,
              [&](std::size_t i) { list.splats[i] = detail::makeSplat(cloud, i, cam, settings); });

  for (std::size_t i = 0; i < n; ++i)
    if (list.splats[i].status == SplatStatus::Visible) list.order.push_back(static_cast<std::uint32_t>(i));
  std::stable_sort(list.order.begin(), list.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return list.splats[a].depth < list.splats[b].depth;
  });

  const int ts = settings.tileSize;
  list.tilesX = (cam.width + ts - 1) / ts;
  list.tilesY = (cam.height + ts - 1) / ts;
  list.tiles.assign(static_cast<std::size_t>(list.tilesX) * list.tilesY, {});
  for (std::uint32_t idx : list.order) {
    const Splat& s = list.splats[idx];
    const double rx = settings.extentSigmas * std::sqrt(s.cov2(0, 0));
    const double ry = settings.extentSigmas * std::sqrt(s.cov2(1, 1));
    const int x0 = std::max(0, static_cast<int>(std::floor(s.center.x() - rx)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.center.x() + rx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.center.y() - ry)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.center.y() + ry)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty)
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx)
        list.tiles[static_cast<std::size_t>(ty) * list.tilesX + tx].push_back(idx);
  }

  ImageBuffer& img = result.image;
  img = ImageBuffer(cam.width, cam.height);
  img.background = background;
  const double cutoff = settings.extentSigmas * settings.extentSigmas;
  parallelFor(list.tiles.size(), settings.threads, [&](std::size_t t) {
    const auto& tile = list.tiles[t];
    const int tx = static_cast<int>(t % list.tilesX), ty = static_cast<int>(t / list.tilesX);
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        double transmittance = 1.0;
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        for (std::uint32_t idx : tile) {
          const Splat& s = list.splats[idx];
          const double m = detail::mahalanobis2(s, x, y);
          if (m > cutoff) continue;
          const double alpha = std::min(settings.alphaClamp, s.opacity * std::exp(-0.5 * m));
          color += (alpha * transmittance) * cloud.colors.row(idx).transpose();
          transmittance *= 1.0 - alpha;
          if (transmittance < settings.minTransmittance) break;
        }
        color += transmittance * background;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
      }
    }
  });
  return result;
}

inline RenderStats renderStats(const SortedSplatList& list) {
  RenderStats st;
  for (const Splat& s : list.splats) {
    if (s.status == SplatStatus::Culled) ++st.culled;
    if (s.status == SplatStatus::Singular) ++st.skippedSingular;
  }
  for (const auto& tile : list.tiles) st.maxSplatsPerTile = std::max(st.maxSplatsPerTile, tile.size());
  return st;
}

namespace detail {

inline Eigen::Matrix3d rotationDerivative(const Eigen::Vector4d& q, int k) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d d;
  switch (k) {
    case 0: d << 0, -z, y, z, 0, -x, -y, x, 0; break;
    case 1: d << 0, y, z, y, -2 * x, -w, z, w, -2 * x; break;
    case 2: d << -2 * y, x, w, x, 0, z, -w, z, -2 * y; break;
    default: d << -2 * z, -w, x, w, -2 * z, y, x, y, 0; break;
  }
  return 2.0 * d;
}

// Screen-space gradients of one splat, accumulated over pixels.
struct SplatGrad {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
  double opacityLogit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

// Chains screen-space gradients back to the Gaussian's raw parameters.
inline void chainToParameters(const GaussianCloud& cloud, std::size_t i, const Splat& s,
                              const Camera& cam, const SplatGrad& g, RenderGradients& out) {
  const auto row = static_cast<Eigen::Index>(i);
  out.color.row(row) = g.color.transpose();
  out.opacityLogit[row] = g.opacityLogit;

  const Eigen::Vector4d rawQ = cloud.rotations.row(row).transpose();
  const double qNorm = rawQ.norm();
  const Eigen::Vector4d q = rawQ / qNorm;
  const Eigen::Matrix3d r = quaternionToRotation(q);
  const Eigen::Vector3d scale = cloud.logScales.row(row).transpose().array().exp();
  const Eigen::Matrix3d m = r * scale.asDiagonal();
  const Eigen::Matrix3d sigma = m * m.transpose();

  const Eigen::Matrix3d w = cam.rotation();
  const Eigen::Vector3d t = w * cloud.positions.row(row).transpose() + cam.translation();
  const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz2, 0.0, cam.fy * iz, -cam.fy * t.y() * iz2;
  const Eigen::Matrix3d sigmaCam = w * sigma * w.transpose();

  // conic = cov2^-1  =>  dL/dcov2 = -conic^T dL/dconic conic^T
  const Eigen::Matrix2d gCov2 = -s.conic.transpose() * g.conic * s.conic.transpose();
  const Eigen::Matrix3d gSigmaCam = j.transpose() * gCov2 * j;
  const Eigen::Matrix<double, 2, 3> gJ =
      gCov2 * j * sigmaCam.transpose() + gCov2.transpose() * j * sigmaCam;
  const Eigen::Matrix3d gSigma = w.transpose() * gSigmaCam * w;

  Eigen::Vector3d gT = Eigen::Vector3d::Zero();
  gT.x() += g.center.x() * cam.fx * iz;
  gT.y() += g.center.y() * cam.fy * iz;
  gT.z() += -g.center.x() * cam.fx * t.x() * iz2 - g.center.y() * cam.fy * t.y() * iz2;
  gT.z() += gJ(0, 0) * (-cam.fx * iz2);
  gT.x() += gJ(0, 2) * (-cam.fx * iz2);
  gT.z() += gJ(0, 2) * (2.0 * cam.fx * t.x() * iz3);
  gT.z() += gJ(1, 1) * (-cam.fy * iz2);
  gT.y() += gJ(1, 2) * (-cam.fy * iz2);
  gT.z() += gJ(1, 2) * (2.0 * cam.fy * t.y() * iz3);
  out.position.row(row) = (w.transpose() * gT).transpose();

  const Eigen::Matrix3d gM = (gSigma + gSigma.transpose()) * m;
  Eigen::Matrix3d gR;
  for (int k = 0; k < 3; ++k) {
    out.logScale(row, k) = gM.col(k).dot(r.col(k)) * scale[k];
    gR.col(k) = gM.col(k) * scale[k];
  }
  Eigen::Vector4d gQ;
  for (int k = 0; k < 4; ++k) gQ[k] = (gR.array() * rotationDerivative(q, k).array()).sum();
  out.rotation.row(row) = ((gQ - q * q.dot(gQ)) / qNorm).transpose();
}

}  // namespace detail

// Analytic gradients of a loss with respect to every Gaussian parameter,
// given dLoss/dPixel for the image produced by the matching forward call.
inline RenderGradients renderBackward(const SortedSplatList& list, const Camera& cam,
                                      const ImageBuffer& dLossDPixels) {
  if (cam.width != list.camera.width || cam.height != list.camera.height || cam.fx != list.camera.fx ||
      cam.fy != list.camera.fy || cam.cx != list.camera.cx || cam.cy != list.camera.cy ||
      cam.worldToCamera != list.camera.worldToCamera)
    throw ContractViolation("renderBackward: camera differs from the forward call");
  if (dLossDPixels.width != cam.width || dLossDPixels.height != cam.height ||
      dLossDPixels.pixels.size() != static_cast<std::size_t>(cam.width) * cam.height * 3)
    throw ContractViolation("renderBackward: gradient image does not match the forward image");
  if (list.splats.size() != list.cloud.count() ||
      list.tiles.size() != static_cast<std::size_t>(list.tilesX) * list.tilesY)
    throw ContractViolation("renderBackward: splat list is not from renderForward");

  const RenderSettings& settings = list.settings;
  const int ts = settings.tileSize;
  const double cutoff = settings.extentSigmas * settings.extentSigmas;
  const GaussianCloud& cloud = list.cloud;

  std::vector<std::vector<detail::SplatGrad>> tileGrads(list.tiles.size());
  parallelFor(list.tiles.size(), settings.threads, [&](std::size_t t) {
    const auto& tile = list.tiles[t];
    auto& acc = tileGrads[t];
    acc.assign(tile.size(), {});
    std::vector<detail::Contribution> contribs;
    const int tx = static_cast<int>(t % list.tilesX), ty = static_cast<int>(t / list.tilesX);
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        const Eigen::Vector3d gPix(dLossDPixels.at(x, y, 0), dLossDPixels.at(x, y, 1),
                                   dLossDPixels.at(x, y, 2));
        if (gPix.isZero(0.0)) continue;
        contribs.clear();
        double transmittance = 1.0;
        for (std::uint32_t slot = 0; slot < tile.size(); ++slot) {
          const Splat& s = list.splats[tile[slot]];
          const double m = detail::mahalanobis2(s, x, y);
          if (m > cutoff) continue;
          const double gauss = std::exp(-0.5 * m);
          const double raw = s.opacity * gauss;
          const bool clamped = raw > settings.alphaClamp;
          const double alpha = clamped ? settings.alphaClamp : raw;
          contribs.push_back({slot, alpha, gauss, transmittance, clamped});
          transmittance *= 1.0 - alpha;
          if (transmittance < settings.minTransmittance) break;
        }
        // Color carried by everything behind the current splat.
        double behind = transmittance * list.background.dot(gPix);
        for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
          const std::uint32_t idx = tile[it->slot];
          const Splat& s = list.splats[idx];
          detail::SplatGrad& g = acc[it->slot];
          const Eigen::Vector3d c = cloud.colors.row(idx).transpose();
          const double weight = it->alpha * it->transmittance;
          g.color += weight * gPix;
          const double cg = c.dot(gPix);
          const double dAlpha = it->transmittance * cg - behind / (1.0 - it->alpha);
          behind += weight * cg;
          if (it->clamped) continue;
          g.opacityLogit += dAlpha * it->gauss * s.opacity * (1.0 - s.opacity);
          const double dGauss = dAlpha * s.opacity;
          const Eigen::Vector2d d(x - s.center.x(), y - s.center.y());
          g.center += dGauss * it->gauss * (s.conic * d);
          g.conic += dGauss * (-0.5 * it->gauss) * (d * d.transpose());
        }
      }
    }
  });

  std::vector<detail::SplatGrad> perSplat(cloud.count());
  for (std::size_t t = 0; t < list.tiles.size(); ++t) {
    const auto& tile = list.tiles[t];
    for (std::size_t slot = 0; slot < tile.size(); ++slot) {
      auto& dst = perSplat[tile[slot]];
      const auto& src = tileGrads[t][slot];
      dst.center += src.center;
      dst.conic += src.conic;
      dst.opacityLogit += src.opacityLogit;
      dst.color += src.color;
    }
  }

  RenderGradients grads(cloud.count());
  parallelFor(list.order.size(), settings.threads, [&](std::size_t k) {
    const std::uint32_t idx = list.order[k];
    detail::chainToParameters(cloud, idx, list.splats[idx], cam, perSplat[idx], grads);
  });
  return grads;
}

}  // namespace gem
