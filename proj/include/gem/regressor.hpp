#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gem/eigenmodel.hpp"
#include "gem/error.hpp"

namespace gem {

// PCA over features relative to a neutral-expression feature.
struct FeaturePCA {
  Eigen::VectorXd neutral;  // featureDim
  Eigen::VectorXd mean;     // featureDim, mean of the relative features
  Eigen::MatrixXd basis;    // M x featureDim, orthonormal rows
  Eigen::VectorXd stddev;   // M, spread of kappa over the fitted features
  Eigen::Index requested = 0;
  bool rankWarning = false;  // fewer than `requested` components were kept

  Eigen::Index featureDim() const { return neutral.size(); }
  Eigen::Index components() const { return basis.rows(); }

  Eigen::VectorXd project(const Eigen::VectorXd& feature) const {
    if (feature.size() != featureDim()) throw InvalidInput("FeaturePCA: feature length differs from featureDim");
    return basis * (feature - neutral - mean);
  }

  // kappa divided by its per-component spread; this is what the network sees.
  Eigen::VectorXd whiten(const Eigen::VectorXd& kappa) const { return kappa.cwiseQuotient(stddev); }
};

inline constexpr Eigen::Index kFeatureComponents = 50;

inline FeaturePCA buildFeaturePCA(const Eigen::MatrixXd& features, Eigen::Index neutralIndex,
                                  Eigen::Index components = kFeatureComponents) {
  if (features.rows() < components + 1)
    throw InvalidInput("buildFeaturePCA: need at least " + std::to_string(components + 1) + " features, got " +
                       std::to_string(features.rows()));
  if (neutralIndex < 0 || neutralIndex >= features.rows()) throw InvalidInput("buildFeaturePCA: neutral index out of range");
  if (components > features.cols()) throw InvalidInput("buildFeaturePCA: more components than feature dimensions");
  FeaturePCA p;
  p.neutral = features.row(neutralIndex).transpose();
  const Eigen::MatrixXd relative = features.rowwise() - p.neutral.transpose();
  PcaResult fit = pcaFit(relative, components);
  if (fit.basis.rows() == 0) throw RankDeficiency("features", "buildFeaturePCA: relative features have rank 0");
  p.mean = std::move(fit.mean);
  p.basis = std::move(fit.basis);
  p.stddev = std::move(fit.stddev);
  p.requested = components;
  p.rankWarning = p.basis.rows() < components;
  return p;
}

// Fully connected ReLU network; the last layer is linear.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // out x in
  std::vector<Eigen::VectorXd> biases;

  std::size_t layers() const { return weights.size(); }
  Eigen::Index inputs() const { return weights.empty() ? 0 : weights.front().cols(); }
  Eigen::Index outputs() const { return weights.empty() ? 0 : weights.back().rows(); }

  std::size_t parameterCount() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }
};

// He-style uniform init: U(-sqrt(6/fanIn), sqrt(6/fanIn)), zero biases.
inline Mlp initMlp(const std::vector<Eigen::Index>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw InvalidInput("initMlp: need at least input and output sizes");
  std::mt19937_64 rng(seed);
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(sizes[l], 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    m.weights.push_back(Eigen::MatrixXd::NullaryExpr(sizes[l + 1], sizes[l], [&] { return u(rng); }));
    m.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
  }
  return m;
}

struct RegressorModel {
  FeaturePCA pca;
  Mlp mlp;
  Eigen::VectorXd outputScale;  // 3 * sigma per coefficient, flatten() order
  std::array<Eigen::Index, 4> components{};

  void validate() const {
    if (mlp.layers() == 0) throw InvalidInput("RegressorModel: empty network");
    if (mlp.inputs() != pca.components()) throw InvalidInput("RegressorModel: network input differs from PCA size");
    if (mlp.outputs() != outputScale.size()) throw InvalidInput("RegressorModel: network output differs from scale size");
    Eigen::Index k = 0;
    for (Eigen::Index c : components) k += c;
    if (k != outputScale.size()) throw InvalidInput("RegressorModel: component counts differ from output size");
    for (std::size_t l = 0; l < mlp.layers(); ++l)
      if (!mlp.weights[l].allFinite() || !mlp.biases[l].allFinite()) throw InvalidInput("RegressorModel: non-finite weights");
    if ((outputScale.array() < 0.0).any()) throw InvalidInput("RegressorModel: negative output scale");
    if (pca.stddev.size() != pca.components() || !(pca.stddev.array() > 0.0).all())
      throw InvalidInput("RegressorModel: PCA spreads must be positive");
  }
};

inline Eigen::VectorXd coefficientBounds(const GemModel& model) { return 3.0 * model.flatStddev(); }

namespace detail {

// Activations of a batch forward pass; columns are samples.
struct MlpTape {
  std::vector<Eigen::MatrixXd> input;  // input to each layer
  Eigen::MatrixXd output;              // pre-tanh output
};

inline Eigen::MatrixXd mlpForward(const Mlp& m, const Eigen::MatrixXd& x, MlpTape* tape = nullptr) {
  Eigen::MatrixXd a = x;
  if (tape) tape->input.clear();
  for (std::size_t l = 0; l < m.layers(); ++l) {
    if (tape) tape->input.push_back(a);
    Eigen::MatrixXd z = m.weights[l] * a;
    z.colwise() += m.biases[l];
    if (l + 1 < m.layers()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  if (tape) tape->output = a;
  return a;
}

}  // namespace detail

inline Eigen::VectorXd regressFlat(const RegressorModel& model, const Eigen::VectorXd& feature) {
  if (!feature.allFinite()) throw InvalidInput("regress: non-finite feature");
  const Eigen::VectorXd z = detail::mlpForward(model.mlp, model.pca.whiten(model.pca.project(feature)));
  return model.outputScale.array() * z.array().tanh();
}

inline CoefficientVector regress(const RegressorModel& model, const Eigen::VectorXd& feature) {
  const Eigen::VectorXd flat = regressFlat(model, feature);
  CoefficientVector k;
  Eigen::Index o = 0;
  for (Modality m : kModalities) {
    const Eigen::Index n = model.components[modalityIndex(m)];
    k[m] = flat.segment(o, n);
    o += n;
  }
  return k;
}

// Upper bound on the Lipschitz constant of k(kappa): tanh and ReLU are
// 1-Lipschitz, so the product of layer spectral norms times max scale, times
// the largest whitening factor, bounds it.
inline double lipschitzBound(const RegressorModel& model) {
  double b = model.outputScale.size() ? model.outputScale.maxCoeff() : 0.0;
  b /= model.pca.stddev.minCoeff();
  for (const auto& w : model.mlp.weights) b *= Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()[0];
  return b;
}

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
};

// Mean squared error over samples and coefficients, with gradients. kappa is
// inputs x N and targets K x N.
inline MlpGradients mseGradients(const Mlp& mlp, const Eigen::VectorXd& scale, const Eigen::MatrixXd& kappa,
                                 const Eigen::MatrixXd& targets) {
  detail::MlpTape tape;
  detail::mlpForward(mlp, kappa, &tape);
  const Eigen::ArrayXXd t = tape.output.array().tanh();
  const Eigen::ArrayXXd pred = t.colwise() * scale.array();
  const Eigen::ArrayXXd diff = pred - targets.array();
  const double inv = 1.0 / static_cast<double>(diff.size());
  MlpGradients g;
  g.loss = inv * diff.square().sum();
  Eigen::MatrixXd delta = ((2.0 * inv) * diff * (1.0 - t.square())).colwise() * scale.array();
  g.weights.resize(mlp.layers());
  g.biases.resize(mlp.layers());
  for (std::size_t l = mlp.layers(); l-- > 0;) {
    g.weights[l].noalias() = delta * tape.input[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = mlp.weights[l].transpose() * delta;
    delta = (tape.input[l].array() > 0.0).select(back, 0.0);
  }
  return g;
}

struct RegressorTrainConfig {
  int steps = 2000;
  double learningRate = 1e-3;
  std::uint64_t seed = 1;
  std::vector<Eigen::Index> hidden = {256, 256, 256};

  void validate() const {
    if (steps < 0) throw InvalidInput("RegressorTrainConfig: steps must be >= 0");
    if (!(learningRate > 0.0)) throw InvalidInput("RegressorTrainConfig: learningRate must be positive");
    for (Eigen::Index h : hidden)
      if (h < 1) throw InvalidInput("RegressorTrainConfig: hidden sizes must be positive");
  }
};

struct RegressorTrainResult {
  RegressorModel model;
  std::vector<double> loss;  // per step, before the update
  std::size_t clampedTargets = 0;
};

// Full-batch Adam on the MSE between regressed and target coefficients.
// features: N x featureDim, targets: N x K (flatten() order).
inline RegressorTrainResult trainRegressor(const FeaturePCA& pca, const Eigen::MatrixXd& features,
                                           const Eigen::MatrixXd& targets, const Eigen::VectorXd& outputScale,
                                           const std::array<Eigen::Index, 4>& components,
                                           const RegressorTrainConfig& cfg = {}) {
  cfg.validate();
  if (features.rows() == 0) throw InvalidInput("trainRegressor: empty training set");
  if (features.rows() != targets.rows()) throw InvalidInput("trainRegressor: feature and target counts differ");
  if (targets.cols() != outputScale.size()) throw InvalidInput("trainRegressor: target width differs from output scale");
  if (!features.allFinite() || !targets.allFinite()) throw InvalidInput("trainRegressor: non-finite training data");

  RegressorTrainResult res;
  RegressorModel& model = res.model;
  model.pca = pca;
  model.outputScale = outputScale;
  model.components = components;
  std::vector<Eigen::Index> sizes{pca.components()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(outputScale.size());
  model.mlp = initMlp(sizes, cfg.seed);
  model.validate();

  const Eigen::Index n = features.rows();
  Eigen::MatrixXd kappa(pca.components(), n);
  for (Eigen::Index i = 0; i < n; ++i) kappa.col(i) = pca.whiten(pca.project(features.row(i).transpose()));
  Eigen::MatrixXd t = targets.transpose();
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double bound = 0.999 * outputScale[i % t.rows()];
    if (std::abs(t.data()[i]) > bound) {
      t.data()[i] = std::clamp(t.data()[i], -bound, bound);
      ++res.clampedTargets;
    }
  }

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<Eigen::ArrayXXd> mw, vw;
  std::vector<Eigen::ArrayXd> mb, vb;
  for (std::size_t l = 0; l < model.mlp.layers(); ++l) {
    mw.push_back(Eigen::ArrayXXd::Zero(model.mlp.weights[l].rows(), model.mlp.weights[l].cols()));
    vw.push_back(mw.back());
    mb.push_back(Eigen::ArrayXd::Zero(model.mlp.biases[l].size()));
    vb.push_back(mb.back());
  }
  for (int step = 1; step <= cfg.steps; ++step) {
    const MlpGradients g = mseGradients(model.mlp, model.outputScale, kappa, t);
    if (!std::isfinite(g.loss)) throw NonFiniteLoss("trainRegressor: non-finite loss at step " + std::to_string(step));
    res.loss.push_back(g.loss);
    const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
    for (std::size_t l = 0; l < model.mlp.layers(); ++l) {
      mw[l] = b1 * mw[l] + (1.0 - b1) * g.weights[l].array();
      vw[l] = b2 * vw[l] + (1.0 - b2) * g.weights[l].array().square();
      model.mlp.weights[l].array() -= cfg.learningRate * (mw[l] / c1) / ((vw[l] / c2).sqrt() + eps);
      mb[l] = b1 * mb[l] + (1.0 - b1) * g.biases[l].array();
      vb[l] = b2 * vb[l] + (1.0 - b2) * g.biases[l].array().square();
      model.mlp.biases[l].array() -= cfg.learningRate * (mb[l] / c1) / ((vb[l] / c2).sqrt() + eps);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint: "GEMR", u32 version, PCA block, network block, output block.
// All reals are little-endian float32.

inline constexpr std::uint32_t kRegressorVersion = 1;

namespace detail {

template <typename M>
void writeReals(ByteWriter& w, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(m(r, c));
}

inline Eigen::MatrixXd readReals(ByteReader& r, std::uint64_t rows, std::uint64_t cols) {
  r.need(rows * cols * 4, "regressor: payload ends early");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f32("regressor");
  return m;
}

}  // namespace detail

inline std::string serializeRegressor(const RegressorModel& model) {
  model.validate();
  detail::ByteWriter w(0);
  w.bytes("GEMR", 4);
  w.u32(kRegressorVersion);
  w.u32(static_cast<std::uint32_t>(model.pca.featureDim()));
  w.u32(static_cast<std::uint32_t>(model.pca.components()));
  w.u32(static_cast<std::uint32_t>(model.pca.requested));
  detail::writeReals(w, model.pca.neutral.transpose());
  detail::writeReals(w, model.pca.mean.transpose());
  detail::writeReals(w, model.pca.basis);
  detail::writeReals(w, model.pca.stddev.transpose());
  w.u32(static_cast<std::uint32_t>(model.mlp.layers()));
  for (std::size_t l = 0; l < model.mlp.layers(); ++l) {
    w.u32(static_cast<std::uint32_t>(model.mlp.weights[l].rows()));
    w.u32(static_cast<std::uint32_t>(model.mlp.weights[l].cols()));
    detail::writeReals(w, model.mlp.weights[l]);
    detail::writeReals(w, model.mlp.biases[l].transpose());
  }
  for (Eigen::Index c : model.components) w.u32(static_cast<std::uint32_t>(c));
  detail::writeReals(w, model.outputScale.transpose());
  return w.take();
}

inline RegressorModel deserializeRegressor(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "GEMR") != 0) throw ParseError(ParseErrorKind::BadMagic, "regressor: bad magic");
  detail::ByteReader r(bytes);
  r.take(4, "regressor");
  if (r.u32("regressor") != kRegressorVersion) throw ParseError(ParseErrorKind::BadVersion, "regressor: unsupported version");
  RegressorModel m;
  const std::uint32_t dim = r.u32("regressor: payload ends early"), pcs = r.u32("regressor: payload ends early");
  m.pca.requested = r.u32("regressor: payload ends early");
  m.pca.neutral = detail::readReals(r, 1, dim).transpose();
  m.pca.mean = detail::readReals(r, 1, dim).transpose();
  m.pca.basis = detail::readReals(r, pcs, dim);
  m.pca.stddev = detail::readReals(r, 1, pcs).transpose();
  m.pca.rankWarning = m.pca.basis.rows() < m.pca.requested;
  const std::uint32_t layers = r.u32("regressor: payload ends early");
  if (layers == 0 || layers > 64) throw ParseError(ParseErrorKind::Inconsistent, "regressor: implausible layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t rows = r.u32("regressor: payload ends early"), cols = r.u32("regressor: payload ends early");
    m.mlp.weights.push_back(detail::readReals(r, rows, cols));
    m.mlp.biases.push_back(detail::readReals(r, 1, rows).transpose());
  }
  std::uint64_t k = 0;
  for (auto& c : m.components) k += (c = r.u32("regressor: payload ends early"));
  m.outputScale = detail::readReals(r, 1, k).transpose();
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::Inconsistent, "regressor: trailing bytes");
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(ParseErrorKind::Inconsistent, e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Pair manifest: which feature rows go with which coefficient rows, and where
// the coefficients came from.

struct FeaturePair {
  std::uint32_t featureRow = 0;
  std::uint32_t coefficientRow = 0;
};

struct PairManifest {
  std::string features;      // matrix file, N x featureDim
  std::string coefficients;  // matrix file, rows x K
  std::string provenance = "projected";
  std::uint32_t neutralRow = 0;
  std::vector<FeaturePair> pairs;

  void validate() const {
    if (provenance != "projected" && provenance != "fitted" && provenance != "synthetic")
      throw InvalidInput("pair manifest: provenance must be projected, fitted or synthetic");
    if (features.empty() || coefficients.empty()) throw InvalidInput("pair manifest: file paths are required");
  }
};

inline nlohmann::json toJson(const PairManifest& m) {
  nlohmann::json j;
  j["features"] = m.features;
  j["coefficients"] = m.coefficients;
  j["provenance"] = m.provenance;
  j["neutralRow"] = m.neutralRow;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : m.pairs) j["pairs"].push_back({{"featureRow", p.featureRow}, {"coefficientRow", p.coefficientRow}});
  return j;
}

inline PairManifest pairManifestFromJson(const nlohmann::json& j) {
  static const std::vector<std::string> keys = {"features", "coefficients", "provenance", "neutralRow", "pairs"};
  if (!j.is_object()) throw InvalidInput("pair manifest: expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw InvalidInput("pair manifest: unknown key '" + key + "'");
  PairManifest m;
  try {
    m.features = j.at("features").get<std::string>();
    m.coefficients = j.at("coefficients").get<std::string>();
    m.provenance = j.value("provenance", m.provenance);
    m.neutralRow = j.value("neutralRow", 0u);
    for (const auto& p : j.at("pairs")) {
      for (const auto& [key, value] : p.items())
        if (key != "featureRow" && key != "coefficientRow")
          throw InvalidInput("pair manifest: unknown pair key '" + key + "'");
      m.pairs.push_back({p.at("featureRow").get<std::uint32_t>(), p.at("coefficientRow").get<std::uint32_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("pair manifest: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace gem
