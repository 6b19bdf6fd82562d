#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "gem/image.hpp"

namespace gem {

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
};

inline constexpr double kPsnrCap = 100.0;

inline double l1(const ImageBuffer& a, const ImageBuffer& b) {
  requireSameShape(a, b, "l1");
  if (a.pixels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / static_cast<double>(a.pixels.size());
}

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
  requireSameShape(a, b, "mse");
  if (a.pixels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

// 10 log10(peak^2 / MSE), capped at 100 dB.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

struct SsimSettings {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

namespace detail {

// Mirror index with the edge sample repeated: -1 -> 0, n -> n-1.
inline int symmetricIndex(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline std::vector<double> gaussianWindow(const SsimSettings& s) {
  std::vector<double> w(static_cast<std::size_t>(s.window));
  const int r = s.window / 2;
  double sum = 0.0;
  for (int i = 0; i < s.window; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (s.sigma * s.sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable Gaussian blur of a single-channel plane with symmetric padding.
class Blur {
 public:
  Blur(int width, int height, const SsimSettings& s)
      : w_(width), h_(height), r_(s.window / 2), k_(gaussianWindow(s)),
        tmp_(static_cast<std::size_t>(width) * height) {}

  void apply(const std::vector<double>& in, std::vector<double>& out) {
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int o = -r_; o <= r_; ++o) s += k_[o + r_] * in[idx(symmetricIndex(x + o, w_), y)];
        tmp_[idx(x, y)] = s;
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int o = -r_; o <= r_; ++o) s += k_[o + r_] * tmp_[idx(x, symmetricIndex(y + o, h_))];
        out[idx(x, y)] = s;
      }
  }

  // Adjoint of apply(): scatters each output back to the samples that fed it.
  void adjoint(const std::vector<double>& in, std::vector<double>& out) {
    std::fill(tmp_.begin(), tmp_.end(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        for (int o = -r_; o <= r_; ++o) tmp_[idx(x, symmetricIndex(y + o, h_))] += k_[o + r_] * in[idx(x, y)];
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        for (int o = -r_; o <= r_; ++o) out[idx(symmetricIndex(x + o, w_), y)] += k_[o + r_] * tmp_[idx(x, y)];
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }
  int w_, h_, r_;
  std::vector<double> k_;
  std::vector<double> tmp_;
};

}  // namespace detail

// Mean SSIM over pixels and channels. When `gradA` is given it receives
// dSSIM/da with the same layout as `a`.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* gradA = nullptr,
                   const SsimSettings& s = {}) {
  requireSameShape(a, b, "ssim");
  if (std::min(a.width, a.height) < s.window) throw InvalidInput("ssim: image smaller than the window");
  const std::size_t n = static_cast<std::size_t>(a.width) * a.height;
  detail::Blur blur(a.width, a.height, s);
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  std::vector<double> ma, mb, saa, sbb, sab;
  std::vector<double> da(n), daa(n), dab(n), t0, t1, t2;
  if (gradA) {
    *gradA = ImageBuffer(a.width, a.height);
    gradA->background = a.background;
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[i * 3 + c];
      pb[i] = b.pixels[i * 3 + c];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    blur.apply(pa, ma);
    blur.apply(pb, mb);
    blur.apply(paa, saa);
    blur.apply(pbb, sbb);
    blur.apply(pab, sab);
    for (std::size_t i = 0; i < n; ++i) {
      const double varA = saa[i] - ma[i] * ma[i];
      const double varB = sbb[i] - mb[i] * mb[i];
      const double cov = sab[i] - ma[i] * mb[i];
      const double a1 = 2.0 * ma[i] * mb[i] + s.c1;
      const double a2 = 2.0 * cov + s.c2;
      const double b1 = ma[i] * ma[i] + mb[i] * mb[i] + s.c1;
      const double b2 = varA + varB + s.c2;
      const double v = (a1 * a2) / (b1 * b2);
      total += v;
      if (gradA) {
        da[i] = v * ((2.0 * mb[i] / a1 - 2.0 * ma[i] / b1) + (2.0 * ma[i] / b2 - 2.0 * mb[i] / a2));
        daa[i] = -v / b2;
        dab[i] = 2.0 * v / a2;
      }
    }
    if (gradA) {
      blur.adjoint(da, t0);
      blur.adjoint(daa, t1);
      blur.adjoint(dab, t2);
      const double norm = 1.0 / (3.0 * static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i)
        gradA->pixels[i * 3 + c] = norm * (t0[i] + 2.0 * pa[i] * t1[i] + pb[i] * t2[i]);
    }
  }
  return total / (3.0 * static_cast<double>(n));
}

inline MetricReport metricReport(const ImageBuffer& a, const ImageBuffer& b) {
  return {psnr(a, b), ssim(a, b), l1(a, b)};
}

}  // namespace gem
