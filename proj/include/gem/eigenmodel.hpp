#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "gem/core.hpp"
#include "gem/error.hpp"
#include "gem/parallel.hpp"

namespace gem {

enum class Modality : int { Position = 0, Rotation = 1, Scale = 2, Opacity = 3 };

inline constexpr std::array<Modality, 4> kModalities = {Modality::Position, Modality::Rotation,
                                                        Modality::Scale, Modality::Opacity};

inline constexpr int modalityDim(Modality m) {
  switch (m) {
    case Modality::Position: return 3;
    case Modality::Rotation: return 4;
    case Modality::Scale: return 3;
    case Modality::Opacity: return 1;
  }
  return 0;
}

inline constexpr std::string_view modalityName(Modality m) {
  switch (m) {
    case Modality::Position: return "position";
    case Modality::Rotation: return "rotation";
    case Modality::Scale: return "scale";
    case Modality::Opacity: return "opacity";
  }
  return "?";
}

inline Modality parseModality(std::string_view name) {
  for (Modality m : kModalities)
    if (modalityName(m) == name) return m;
  throw InvalidInput("unknown modality '" + std::string(name) + "'");
}

inline constexpr std::size_t modalityIndex(Modality m) { return static_cast<std::size_t>(m); }

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // M x D, orthonormal rows
  Eigen::VectorXd stddev;
  // Set when fewer than the requested components had non-negligible energy.
  bool rankTruncated = false;
};

namespace detail {

// Flips each row so that its largest-magnitude entry is positive.
inline void canonicalizeRowSigns(Eigen::MatrixXd& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    Eigen::Index arg = 0;
    rows.row(r).cwiseAbs().maxCoeff(&arg);
    if (rows(r, arg) < 0.0) rows.row(r) *= -1.0;
  }
}

}  // namespace detail

// PCA of the rows of `samples` (N x D) by SVD of the centered data.
inline PcaResult pcaFit(const Eigen::MatrixXd& samples, Eigen::Index maxComponents) {
  const Eigen::Index n = samples.rows(), d = samples.cols();
  if (n < 2) throw InvalidInput("pcaFit: need at least two samples");
  if (maxComponents < 0 || maxComponents > std::min(n - 1, d))
    throw InvalidInput("pcaFit: component count exceeds min(N-1, D)");
  if (!samples.allFinite()) throw InvalidInput("pcaFit: non-finite samples");

  PcaResult out;
  out.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - out.mean.transpose();

  Eigen::VectorXd singular;
  Eigen::MatrixXd right;  // D x r, right singular vectors as columns
  if (d > n) {
    // Thin QR of the transposed data reduces the SVD to an N x N problem.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(centered.transpose());
    const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeFullU);
    singular = svd.singularValues();
    right = qr.householderQ() * (Eigen::MatrixXd::Identity(d, n) * svd.matrixU());
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    singular = svd.singularValues();
    right = svd.matrixV();
  }

  // Relative cutoff, plus an absolute floor well above the rounding noise left
  // by centering so that constant data comes out rank zero.
  const double top = singular.size() > 0 ? singular[0] : 0.0;
  const double noise = 1e-13 * samples.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(n * d));
  const double tol = std::max(1e-10 * top, noise);
  Eigen::Index rank = 0;
  while (rank < singular.size() && singular[rank] > tol) ++rank;
  const Eigen::Index kept = std::min(maxComponents, rank);
  out.rankTruncated = kept < maxComponents;
  out.basis = right.leftCols(kept).transpose();
  detail::canonicalizeRowSigns(out.basis);
  out.stddev = singular.head(kept) / std::sqrt(static_cast<double>(n - 1));
  return out;
}

// Extends an orthonormal row set to `target` rows using the coordinate axes
// in order; the added rows span directions with no training energy.
inline Eigen::MatrixXd completeOrthonormalRows(const Eigen::MatrixXd& rows, Eigen::Index target) {
  const Eigen::Index d = rows.cols();
  if (target > d) throw InvalidInput("completeOrthonormalRows: more rows than dimensions");
  Eigen::MatrixXd out(target, d);
  out.topRows(rows.rows()) = rows;
  Eigen::Index filled = rows.rows();
  for (Eigen::Index axis = 0; axis < d && filled < target; ++axis) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, axis);
    for (int pass = 0; pass < 2; ++pass)
      v -= out.topRows(filled).transpose() * (out.topRows(filled) * v);
    const double norm = v.norm();
    if (norm < 1e-3) continue;
    out.row(filled++) = (v / norm).transpose();
  }
  return out;
}

// Row-orthonormal matrix with the same row span, from a QR factorization of
// basis^T with diag(R) >= 0.
inline Eigen::MatrixXd orthogonalize(const Eigen::MatrixXd& basis, const std::string& label = "basis") {
  const Eigen::Index m = basis.rows(), d = basis.cols();
  if (m == 0) return basis;
  if (m > d) throw RankDeficiency(label, label + ": more rows than dimensions");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis.transpose());
  const Eigen::MatrixXd& packed = qr.matrixQR();
  const double scale = packed.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(std::abs(packed(i, i)) > 1e-10 * std::max(scale, 1e-300)))
      throw RankDeficiency(label, label + ": row " + std::to_string(i) +
                                      " is linearly dependent on the rows before it");
  }
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, m);
  for (Eigen::Index i = 0; i < m; ++i)
    if (packed(i, i) < 0.0) q.col(i) *= -1.0;
  return q.transpose();
}

inline double orthonormalityError(const Eigen::MatrixXd& basis) {
  if (basis.rows() == 0) return 0.0;
  return (basis * basis.transpose() - Eigen::MatrixXd::Identity(basis.rows(), basis.rows()))
      .cwiseAbs()
      .maxCoeff();
}

// ---------------------------------------------------------------------------
// Model types

struct EigenBasis {
  Modality modality = Modality::Position;
  Eigen::Index texels = 0;
  Eigen::VectorXd mean;    // dim * texels, texel-major
  Eigen::MatrixXd basis;   // M x (dim * texels)
  Eigen::VectorXd stddev;  // M

  Eigen::Index dim() const { return modalityDim(modality); }
  Eigen::Index components() const { return basis.rows(); }

  Eigen::VectorXd reconstruct(const Eigen::VectorXd& k) const {
    if (k.size() != components())
      throw ContractViolation(std::string(modalityName(modality)) + ": coefficient length mismatch");
    return mean + basis.transpose() * k;
  }
};

struct TexelLayout {
  int texWidth = 0;
  int texHeight = 0;
  std::vector<std::uint8_t> activeMask;  // row-major, texWidth * texHeight

  std::size_t activeCount() const {
    return static_cast<std::size_t>(std::count(activeMask.begin(), activeMask.end(), std::uint8_t{1}));
  }

  static TexelLayout full(int w, int h) {
    return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1)};
  }
  // Smallest near-square full layout holding `texels` active entries in order.
  static TexelLayout packed(std::size_t texels) {
    const int w = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(texels)))));
    const int h = std::max(1, static_cast<int>((texels + w - 1) / w));
    TexelLayout l{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    std::fill_n(l.activeMask.begin(), texels, std::uint8_t{1});
    return l;
  }
};

struct CoefficientVector {
  std::array<Eigen::VectorXd, 4> blocks;

  Eigen::VectorXd& operator[](Modality m) { return blocks[modalityIndex(m)]; }
  const Eigen::VectorXd& operator[](Modality m) const { return blocks[modalityIndex(m)]; }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }

  // Position, rotation, scale, opacity blocks back to back.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(size());
    Eigen::Index o = 0;
    for (const auto& b : blocks) {
      out.segment(o, b.size()) = b;
      o += b.size();
    }
    return out;
  }
};

struct GemModel {
  TexelLayout layout;
  std::array<EigenBasis, 4> bases;
  RowMatX3 colorTexture;  // T x 3

  Eigen::Index texels() const { return colorTexture.rows(); }
  EigenBasis& basis(Modality m) { return bases[modalityIndex(m)]; }
  const EigenBasis& basis(Modality m) const { return bases[modalityIndex(m)]; }

  std::array<Eigen::Index, 4> componentCounts() const {
    return {bases[0].components(), bases[1].components(), bases[2].components(), bases[3].components()};
  }

  CoefficientVector zeroCoefficients() const {
    CoefficientVector k;
    for (Modality m : kModalities) k[m] = Eigen::VectorXd::Zero(basis(m).components());
    return k;
  }

  CoefficientVector unflatten(const Eigen::VectorXd& flat) const {
    CoefficientVector k;
    Eigen::Index o = 0;
    for (Modality m : kModalities) {
      const Eigen::Index n = basis(m).components();
      if (o + n > flat.size()) throw ContractViolation("unflatten: coefficient vector too short");
      k[m] = flat.segment(o, n);
      o += n;
    }
    if (o != flat.size()) throw ContractViolation("unflatten: coefficient vector too long");
    return k;
  }

  // Per-coefficient standard deviations in flatten() order.
  Eigen::VectorXd flatStddev() const {
    CoefficientVector s;
    for (Modality m : kModalities) s[m] = basis(m).stddev;
    return s.flatten();
  }

  void validate() const {
    const Eigen::Index t = texels();
    if (layout.activeCount() != static_cast<std::size_t>(t))
      throw InvalidInput("GemModel: active mask popcount differs from texel count");
    if (layout.activeMask.size() != static_cast<std::size_t>(layout.texWidth) * layout.texHeight)
      throw InvalidInput("GemModel: mask size differs from texture size");
    for (Modality m : kModalities) {
      const EigenBasis& b = basis(m);
      const Eigen::Index d = modalityDim(m) * t;
      if (b.modality != m || b.texels != t || b.mean.size() != d || b.basis.cols() != d ||
          b.stddev.size() != b.basis.rows())
        throw InvalidInput("GemModel: inconsistent " + std::string(modalityName(m)) + " basis shape");
    }
  }
};

// ---------------------------------------------------------------------------
// Attribute flattening

inline Eigen::VectorXd modalityVector(const GaussianCloud& c, Modality m) {
  switch (m) {
    case Modality::Position: return Eigen::Map<const Eigen::VectorXd>(c.positions.data(), c.positions.size());
    case Modality::Rotation: return Eigen::Map<const Eigen::VectorXd>(c.rotations.data(), c.rotations.size());
    case Modality::Scale: return Eigen::Map<const Eigen::VectorXd>(c.logScales.data(), c.logScales.size());
    case Modality::Opacity: return c.opacityLogits;
  }
  return {};
}

inline void setModality(GaussianCloud& c, Modality m, const Eigen::VectorXd& v) {
  switch (m) {
    case Modality::Position: Eigen::Map<Eigen::VectorXd>(c.positions.data(), c.positions.size()) = v; break;
    case Modality::Rotation: Eigen::Map<Eigen::VectorXd>(c.rotations.data(), c.rotations.size()) = v; break;
    case Modality::Scale: Eigen::Map<Eigen::VectorXd>(c.logScales.data(), c.logScales.size()) = v; break;
    case Modality::Opacity: c.opacityLogits = v; break;
  }
}

// Flips each texel's quaternion into the hemisphere of `reference`.
inline void alignQuaternions(Eigen::Ref<Eigen::VectorXd> rotations, const Eigen::VectorXd& reference) {
  for (Eigen::Index t = 0; t < rotations.size() / 4; ++t)
    if (rotations.segment<4>(4 * t).dot(reference.segment<4>(4 * t)) < 0.0)
      rotations.segment<4>(4 * t) *= -1.0;
}

// ---------------------------------------------------------------------------
// Distillation

inline constexpr int kColorAverage = -1;

struct DistillOptions {
  // Frame index for the color texture, or kColorAverage for the per-texel mean.
  int colorSource = kColorAverage;
  // Pads rank-deficient bases to the requested size with zero-stddev rows.
  bool padToRequested = true;
  unsigned threads = 0;
};

struct DistillReport {
  std::array<bool, 4> rankTruncated{};
  std::array<Eigen::Index, 4> fittedComponents{};
};

inline GemModel distill(const std::vector<GaussianCloud>& sequence, const TexelLayout& layout,
                        const std::array<Eigen::Index, 4>& components, const DistillOptions& opts = {},
                        DistillReport* report = nullptr) {
  if (sequence.size() < 2) throw InvalidInput("distill: need at least two frames");
  const auto t = static_cast<Eigen::Index>(sequence.front().count());
  for (const auto& c : sequence)
    if (static_cast<Eigen::Index>(c.count()) != t) throw InvalidInput("distill: frames disagree on Gaussian count");
  if (layout.activeCount() != static_cast<std::size_t>(t))
    throw InvalidInput("distill: layout active texel count differs from the Gaussian count");
  const auto n = static_cast<Eigen::Index>(sequence.size());

  GemModel model;
  model.layout = layout;
  DistillReport rep;
  parallelFor(4, opts.threads, [&](std::size_t mi) {
    const Modality m = kModalities[mi];
    const Eigen::Index d = modalityDim(m) * t;
    Eigen::MatrixXd data(n, d);
    for (Eigen::Index f = 0; f < n; ++f) data.row(f) = modalityVector(sequence[static_cast<std::size_t>(f)], m).transpose();
    if (m == Modality::Rotation) {
      const Eigen::VectorXd ref = data.row(0).transpose();
      for (Eigen::Index f = 1; f < n; ++f) {
        Eigen::VectorXd row = data.row(f).transpose();
        alignQuaternions(row, ref);
        data.row(f) = row.transpose();
      }
    }
    const Eigen::Index want = std::min(components[mi], d);
    const Eigen::Index fit = std::min(want, n - 1);
    PcaResult pca = pcaFit(data, fit);
    rep.rankTruncated[mi] = pca.rankTruncated || fit < want;
    rep.fittedComponents[mi] = pca.basis.rows();
    EigenBasis& b = model.bases[mi];
    b.modality = m;
    b.texels = t;
    b.mean = std::move(pca.mean);
    if (opts.padToRequested && pca.basis.rows() < want) {
      b.basis = completeOrthonormalRows(pca.basis, want);
      b.stddev = Eigen::VectorXd::Zero(want);
      b.stddev.head(pca.stddev.size()) = pca.stddev;
    } else {
      b.basis = std::move(pca.basis);
      b.stddev = std::move(pca.stddev);
    }
  });

  if (opts.colorSource == kColorAverage) {
    model.colorTexture = RowMatX3::Zero(t, 3);
    for (const auto& c : sequence) model.colorTexture += c.colors;
    model.colorTexture /= static_cast<double>(n);
  } else {
    if (opts.colorSource < 0 || opts.colorSource >= n) throw InvalidInput("distill: color source frame out of range");
    model.colorTexture = sequence[static_cast<std::size_t>(opts.colorSource)].colors;
  }
  if (report) *report = rep;
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation and projection

// Gaussians for coefficient vector k: mean + basis^T k per modality, with
// quaternions renormalized and colors taken from the static texture.
inline GaussianCloud evaluate(const GemModel& model, const CoefficientVector& k) {
  const Eigen::Index t = model.texels();
  GaussianCloud c(static_cast<std::size_t>(t));
  for (Modality m : kModalities) setModality(c, m, model.basis(m).reconstruct(k[m]));
  c.normalizeRotations();
  c.colors = model.colorTexture;
  return c;
}

inline CoefficientVector project(const GemModel& model, const GaussianCloud& cloud) {
  if (static_cast<Eigen::Index>(cloud.count()) != model.texels())
    throw InvalidInput("project: cloud size differs from model texel count");
  CoefficientVector k;
  for (Modality m : kModalities) {
    const EigenBasis& b = model.basis(m);
    Eigen::VectorXd x = modalityVector(cloud, m);
    if (m == Modality::Rotation) alignQuaternions(x, b.mean);
    k[m] = b.basis * (x - b.mean);
  }
  return k;
}

// ---------------------------------------------------------------------------
// Binary format (little-endian float32)

inline constexpr std::uint32_t kGemVersion = 1;
inline constexpr char kGemMagic[4] = {'G', 'E', 'M', '1'};

inline std::uint64_t gemHeaderBytes() { return 4 + 4 + 4 + 4 + 4; }
inline std::uint64_t gemMaskBytes(int w, int h) { return (static_cast<std::uint64_t>(w) * h + 7) / 8; }

// Bytes of all basis matrices: sum over modalities of M * dim * T * 4.
inline std::uint64_t gemBasisPayloadBytes(std::uint64_t texels, const std::array<Eigen::Index, 4>& m) {
  std::uint64_t s = 0;
  for (Modality mod : kModalities)
    s += static_cast<std::uint64_t>(m[modalityIndex(mod)]) * modalityDim(mod) * texels * 4;
  return s;
}

inline std::uint64_t gemSerializedBytes(int w, int h, std::uint64_t texels, const std::array<Eigen::Index, 4>& m) {
  std::uint64_t s = gemHeaderBytes() + gemMaskBytes(w, h);
  for (Modality mod : kModalities) {
    const std::uint64_t dim = modalityDim(mod);
    const auto comps = static_cast<std::uint64_t>(m[modalityIndex(mod)]);
    s += 8 + dim * texels * 4 + comps * 4 + comps * dim * texels * 4;
  }
  return s + 3 * texels * 4;
}

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) throw ParseError(ParseErrorKind::Truncated, what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * b);
    return v;
  }
  double f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const GemModel& model) {
  model.validate();
  const auto t = static_cast<std::uint64_t>(model.texels());
  const auto& layout = model.layout;
  detail::ByteWriter w(gemSerializedBytes(layout.texWidth, layout.texHeight, t, model.componentCounts()));
  w.bytes(kGemMagic, 4);
  w.u32(kGemVersion);
  w.u32(static_cast<std::uint32_t>(layout.texWidth));
  w.u32(static_cast<std::uint32_t>(layout.texHeight));
  w.u32(static_cast<std::uint32_t>(t));
  std::string mask(gemMaskBytes(layout.texWidth, layout.texHeight), '\0');
  for (std::size_t i = 0; i < layout.activeMask.size(); ++i)
    if (layout.activeMask[i]) mask[i / 8] = static_cast<char>(mask[i / 8] | (1u << (i % 8)));
  w.bytes(mask.data(), mask.size());
  for (Modality m : kModalities) {
    const EigenBasis& b = model.basis(m);
    w.u32(static_cast<std::uint32_t>(b.dim()));
    w.u32(static_cast<std::uint32_t>(b.components()));
    for (Eigen::Index i = 0; i < b.mean.size(); ++i) w.f32(b.mean[i]);
    for (Eigen::Index i = 0; i < b.stddev.size(); ++i) w.f32(b.stddev[i]);
    for (Eigen::Index r = 0; r < b.basis.rows(); ++r)
      for (Eigen::Index c = 0; c < b.basis.cols(); ++c) w.f32(b.basis(r, c));
  }
  for (Eigen::Index i = 0; i < model.colorTexture.rows(); ++i)
    for (int c = 0; c < 3; ++c) w.f32(model.colorTexture(i, c));
  return w.take();
}

inline GemModel deserialize(std::string_view bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kGemMagic, 4) != 0) throw ParseError(ParseErrorKind::BadMagic, "expected GEM1");
  const std::uint32_t version = r.u32("version");
  if (version != kGemVersion) throw ParseError(ParseErrorKind::BadVersion, "version " + std::to_string(version));
  GemModel model;
  model.layout.texWidth = static_cast<int>(r.u32("texWidth"));
  model.layout.texHeight = static_cast<int>(r.u32("texHeight"));
  const std::uint32_t t = r.u32("texel count");
  const std::uint64_t cells = static_cast<std::uint64_t>(model.layout.texWidth) * model.layout.texHeight;
  if (cells > (1ull << 32) || t > cells) throw ParseError(ParseErrorKind::Inconsistent, "texel count exceeds texture");
  const auto mask = r.take(gemMaskBytes(model.layout.texWidth, model.layout.texHeight), "mask");
  model.layout.activeMask.resize(cells);
  for (std::uint64_t i = 0; i < cells; ++i)
    model.layout.activeMask[i] = (static_cast<unsigned char>(mask[i / 8]) >> (i % 8)) & 1u;
  if (model.layout.activeCount() != t) throw ParseError(ParseErrorKind::Inconsistent, "mask popcount != T");
  for (Modality m : kModalities) {
    EigenBasis& b = model.basis(m);
    b.modality = m;
    b.texels = t;
    const std::uint32_t dim = r.u32("dim");
    if (dim != static_cast<std::uint32_t>(modalityDim(m)))
      throw ParseError(ParseErrorKind::Inconsistent, std::string(modalityName(m)) + " dimension");
    const std::uint32_t comps = r.u32("component count");
    const std::uint64_t d = static_cast<std::uint64_t>(dim) * t;
    r.need((d + comps + static_cast<std::uint64_t>(comps) * d) * 4, "basis block");
    b.mean.resize(static_cast<Eigen::Index>(d));
    for (std::uint64_t i = 0; i < d; ++i) b.mean[static_cast<Eigen::Index>(i)] = r.f32("mean");
    b.stddev.resize(comps);
    for (std::uint32_t i = 0; i < comps; ++i) b.stddev[i] = r.f32("stddev");
    b.basis.resize(comps, static_cast<Eigen::Index>(d));
    for (std::uint32_t row = 0; row < comps; ++row)
      for (std::uint64_t c = 0; c < d; ++c) b.basis(row, static_cast<Eigen::Index>(c)) = r.f32("basis");
  }
  r.need(static_cast<std::uint64_t>(t) * 12, "color texture");
  model.colorTexture.resize(t, 3);
  for (std::uint32_t i = 0; i < t; ++i)
    for (int c = 0; c < 3; ++c) model.colorTexture(i, c) = r.f32("color");
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::Inconsistent, "trailing bytes");
  return model;
}

}  // namespace gem
