#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gem/eigenmodel.hpp"
#include "gem/metrics.hpp"
#include "gem/renderer.hpp"

namespace gem {

// Optional perceptual term: returns its loss and, when grad is non-null, fills
// dLoss/dRender. No implementation ships with the library.
using PerceptualHook = std::function<double(const ImageBuffer& render, const ImageBuffer& target, ImageBuffer* grad)>;

// Multiplier applied to the step size at a given step (constant when unset).
using StepSchedule = std::function<double(int step)>;

struct RefineConfig {
  double omega = 0.2;     // D-SSIM weight
  double zeta = 0.0;      // perceptual weight, only used with a hook
  double lambda = 1e-2;   // position offset regularizer
  double gamma = 1e-3;    // scale regularizer
  double stepSize = 1e-3;
  int steps = 0;
  int orthogonalizeEvery = 1000;
  int batch = 1;
  // Step-size multipliers for position, rotation, scale, opacity.
  std::array<double, 4> modalityRate{1.0, 0.1, 0.1, 0.5};
  double colorRate = 1.0;
  RenderSettings render;
  PerceptualHook perceptual;
  StepSchedule schedule;

  void validate() const {
    if (!(omega >= 0.0 && omega < 1.0)) throw InvalidInput("RefineConfig: omega must lie in [0, 1)");
    if (!(zeta >= 0.0 && lambda >= 0.0 && gamma >= 0.0)) throw InvalidInput("RefineConfig: weights must be >= 0");
    if (orthogonalizeEvery < 1) throw InvalidInput("RefineConfig: orthogonalizeEvery must be >= 1");
    if (steps < 0 || batch < 1) throw InvalidInput("RefineConfig: steps >= 0 and batch >= 1 required");
    if (!(stepSize > 0.0)) throw InvalidInput("RefineConfig: stepSize must be positive");
  }
};

struct LossTerms {
  double l1 = 0.0;
  double dssim = 0.0;
  double perceptual = 0.0;
  double total = 0.0;
  ImageBuffer grad;  // dTotal/dRender
};

// (1 - omega) L1 + omega D-SSIM + zeta perceptual, with D-SSIM = (1 - SSIM) / 2.
inline LossTerms photometricLoss(const ImageBuffer& render, const ImageBuffer& target, const RefineConfig& cfg,
                                 bool wantGrad = true) {
  requireSameShape(render, target, "photometricLoss");
  LossTerms out;
  const std::size_t n = render.pixels.size();
  ImageBuffer ssimGrad;
  // D-SSIM is still reported at omega = 0 when the image is large enough for the window.
  const bool haveSsim = cfg.omega > 0.0 || std::min(render.width, render.height) >= SsimSettings{}.window;
  if (haveSsim) out.dssim = 0.5 * (1.0 - ssim(render, target, wantGrad && cfg.omega > 0.0 ? &ssimGrad : nullptr));
  out.l1 = l1(render, target);
  out.total = (1.0 - cfg.omega) * out.l1 + cfg.omega * out.dssim;
  if (wantGrad) {
    out.grad = ImageBuffer(render.width, render.height);
    const double wl1 = (1.0 - cfg.omega) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = render.pixels[i] - target.pixels[i];
      out.grad.pixels[i] = d > 0.0 ? wl1 : (d < 0.0 ? -wl1 : 0.0);
      if (cfg.omega > 0.0) out.grad.pixels[i] -= 0.5 * cfg.omega * ssimGrad.pixels[i];
    }
  }
  if (cfg.perceptual && cfg.zeta > 0.0) {
    ImageBuffer pg;
    out.perceptual = cfg.perceptual(render, target, wantGrad ? &pg : nullptr);
    out.total += cfg.zeta * out.perceptual;
    if (wantGrad) {
      requireSameShape(pg, render, "perceptual hook gradient");
      for (std::size_t i = 0; i < n; ++i) out.grad.pixels[i] += cfg.zeta * pg.pixels[i];
    }
  }
  return out;
}

struct TrainingView {
  std::size_t frame = 0;  // index into TrainingSet::coefficients
  Camera camera;
  ImageBuffer target;
};

struct TrainingSet {
  std::vector<CoefficientVector> coefficients;  // one per frame
  std::vector<TrainingView> views;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  void validate(const GemModel& model) const {
    if (views.empty()) throw InvalidInput("TrainingSet: no views");
    for (const auto& k : coefficients)
      for (Modality m : kModalities)
        if (k[m].size() != model.basis(m).components())
          throw ContractViolation("TrainingSet: coefficient block length differs from the model");
    for (const auto& v : views) {
      if (v.frame >= coefficients.size()) throw InvalidInput("TrainingSet: view references a missing frame");
      if (v.target.width != v.camera.width || v.target.height != v.camera.height)
        throw InvalidInput("TrainingSet: target size differs from its camera");
    }
  }
};

struct LossRecord {
  int step = 0;
  double l1 = 0.0;
  double dssim = 0.0;
  double total = 0.0;
  double psnr = 0.0;
};

struct CheckpointRecord {
  int step = 0;
  double psnrBefore = 0.0;  // training-set mean PSNR before QR
  double psnrAfter = 0.0;
  double orthErrorBefore = 0.0;  // worst ||BB^T - I||_max over modalities
};

struct RefineResult {
  GemModel model;
  std::vector<CoefficientVector> coefficients;
  std::vector<LossRecord> history;
  std::vector<CheckpointRecord> checkpoints;
};

inline std::string lossHistoryCsv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os.precision(10);
  os << "step,l1,dssim,total,psnr\n";
  for (const auto& r : history) os << r.step << ',' << r.l1 << ',' << r.dssim << ',' << r.total << ',' << r.psnr << '\n';
  return os.str();
}

// Mean PSNR of renders of every view against its target.
inline double trainingPsnr(const GemModel& model, const TrainingSet& set,
                           const std::vector<CoefficientVector>& coefficients, const RenderSettings& settings = {}) {
  double sum = 0.0;
  for (const auto& v : set.views) {
    const GaussianCloud cloud = evaluate(model, coefficients[v.frame]);
    sum += psnr(renderForward(cloud, v.camera, set.background, settings).image, v.target);
  }
  return sum / static_cast<double>(set.views.size());
}

namespace detail {

// Adam state for one dense parameter block.
struct AdamBlock {
  Eigen::ArrayXd m, v;
  long long t = 0;

  void reset(Eigen::Index n) {
    m = Eigen::ArrayXd::Zero(n);
    v = Eigen::ArrayXd::Zero(n);
    t = 0;
  }

  template <typename Param>
  void step(Param& param, const Eigen::Ref<const Eigen::ArrayXd>& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    Eigen::Map<Eigen::ArrayXd> p(param.data(), param.size());
    p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
};

// Raw (pre-normalization) rotation vector and the evaluated cloud.
struct Evaluated {
  GaussianCloud cloud;
  Eigen::VectorXd rawRotation;
};

inline Evaluated evaluateRaw(const GemModel& model, const CoefficientVector& k) {
  Evaluated e{evaluate(model, k), model.basis(Modality::Rotation).reconstruct(k[Modality::Rotation])};
  return e;
}

// Per-modality dL/dx for attribute vectors x, given renderer gradients taken at
// the normalized quaternions.
inline std::array<Eigen::VectorXd, 4> modalityGradients(const RenderGradients& g, const Evaluated& e) {
  std::array<Eigen::VectorXd, 4> out;
  out[0] = Eigen::Map<const Eigen::VectorXd>(g.position.data(), g.position.size());
  out[2] = Eigen::Map<const Eigen::VectorXd>(g.logScale.data(), g.logScale.size());
  out[3] = g.opacityLogit;
  Eigen::VectorXd rot(e.rawRotation.size());
  for (Eigen::Index t = 0; t < rot.size() / 4; ++t) {
    const Eigen::Vector4d x = e.rawRotation.segment<4>(4 * t);
    const double len = x.norm();
    const Eigen::Vector4d q = x / len;
    const Eigen::Vector4d gq = g.rotation.row(t).transpose();
    rot.segment<4>(4 * t) = (gq - q * q.dot(gq)) / len;
  }
  out[1] = std::move(rot);
  return out;
}

inline std::string snapshot(int step, std::size_t view, const LossTerms& l) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << ", view " << view << " (l1=" << l.l1 << ", dssim=" << l.dssim
     << ", perceptual=" << l.perceptual << ")";
  return os.str();
}

}  // namespace detail

// Orthogonalizes every basis and re-projects the stored coefficients so each
// frame's reconstruction is preserved. Stddevs are recomputed from the
// re-projected coefficients.
inline void orthogonalizeCheckpoint(GemModel& model, std::vector<CoefficientVector>& coefficients) {
  for (Modality m : kModalities) {
    EigenBasis& b = model.basis(m);
    if (b.components() == 0) continue;
    std::vector<Eigen::VectorXd> offsets;
    offsets.reserve(coefficients.size());
    for (const auto& k : coefficients) offsets.push_back(b.basis.transpose() * k[m]);
    b.basis = orthogonalize(b.basis, std::string(modalityName(m)));
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(b.components());
    for (std::size_t f = 0; f < coefficients.size(); ++f) {
      coefficients[f][m] = b.basis * offsets[f];
      sq += coefficients[f][m].cwiseAbs2();
    }
    if (coefficients.size() >= 2) b.stddev = (sq / static_cast<double>(coefficients.size() - 1)).cwiseSqrt();
  }
}

struct BasisGradients {
  std::array<Eigen::VectorXd, 4> mean;
  std::array<Eigen::MatrixXd, 4> basis;  // M x D per modality
  RowMatX3 color;
  LossRecord record;  // batch-mean loss terms
};

// Gradient of the batch-mean refinement loss (photometric + regularizer) with
// respect to means, basis rows and color. `anchor` holds each frame's position
// reconstruction that the offset regularizer pulls toward.
inline BasisGradients basisGradients(const GemModel& model, const TrainingSet& set,
                                     const std::vector<CoefficientVector>& coeffs,
                                     const std::vector<Eigen::VectorXd>& anchor, const std::vector<std::size_t>& batch,
                                     const RefineConfig& cfg, int step = 0) {
  const Eigen::Index t = model.texels();
  BasisGradients out;
  for (Modality m : kModalities) {
    out.mean[modalityIndex(m)] = Eigen::VectorXd::Zero(model.basis(m).mean.size());
    out.basis[modalityIndex(m)] = Eigen::MatrixXd::Zero(model.basis(m).components(), model.basis(m).mean.size());
  }
  out.color = RowMatX3::Zero(t, 3);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t vi : batch) {
    const TrainingView& view = set.views[vi];
    const CoefficientVector& k = coeffs[view.frame];
    const detail::Evaluated e = detail::evaluateRaw(model, k);
    const RenderResult fwd = renderForward(e.cloud, view.camera, set.background, cfg.render);
    const LossTerms loss = photometricLoss(fwd.image, view.target, cfg);

    const Eigen::VectorXd offset = modalityVector(e.cloud, Modality::Position) - anchor[view.frame];
    const Eigen::ArrayXd scale2 = (2.0 * modalityVector(e.cloud, Modality::Scale).array()).exp();
    const double reg = (cfg.lambda * offset.squaredNorm() + cfg.gamma * scale2.sum()) / static_cast<double>(t);
    if (!std::isfinite(loss.total) || !std::isfinite(reg)) throw NonFiniteLoss(detail::snapshot(step, vi, loss));

    out.record.l1 += inv * loss.l1;
    out.record.dssim += inv * loss.dssim;
    out.record.total += inv * (loss.total + reg);
    out.record.psnr += inv * psnr(fwd.image, view.target);

    const RenderGradients rg = renderBackward(fwd.sorted, view.camera, loss.grad);
    auto g = detail::modalityGradients(rg, e);
    g[0] += (2.0 * cfg.lambda / static_cast<double>(t)) * offset;
    g[2] += ((2.0 * cfg.gamma / static_cast<double>(t)) * scale2).matrix();
    for (Modality m : kModalities) {
      const std::size_t mi = modalityIndex(m);
      out.mean[mi] += inv * g[mi];
      if (k[m].size() > 0) out.basis[mi].noalias() += inv * k[m] * g[mi].transpose();
    }
    out.color += inv * rg.color;
  }
  return out;
}

// Position reconstruction of every stored frame.
inline std::vector<Eigen::VectorXd> positionAnchors(const GemModel& model, const std::vector<CoefficientVector>& coeffs) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& k : coeffs) out.push_back(model.basis(Modality::Position).reconstruct(k[Modality::Position]));
  return out;
}

// Photometric refinement of means, basis rows and color with coefficients held
// fixed. Bases are orthogonalized every cfg.orthogonalizeEvery steps and at the end.
inline RefineResult refineBases(const GemModel& initial, const TrainingSet& set, const RefineConfig& cfg) {
  cfg.validate();
  initial.validate();
  set.validate(initial);

  RefineResult res{initial, set.coefficients, {}, {}};
  if (cfg.steps == 0) return res;
  GemModel& model = res.model;
  auto& coeffs = res.coefficients;

  // Position reconstructions at the start anchor the offset regularizer.
  const std::vector<Eigen::VectorXd> anchor = positionAnchors(model, coeffs);

  std::array<detail::AdamBlock, 4> meanState, basisState;
  detail::AdamBlock colorState;
  for (Modality m : kModalities) {
    meanState[modalityIndex(m)].reset(model.basis(m).mean.size());
    basisState[modalityIndex(m)].reset(model.basis(m).basis.size());
  }
  colorState.reset(model.colorTexture.size());

  auto checkpoint = [&](int step) {
    CheckpointRecord rec;
    rec.step = step;
    for (Modality m : kModalities) rec.orthErrorBefore = std::max(rec.orthErrorBefore, orthonormalityError(model.basis(m).basis));
    rec.psnrBefore = trainingPsnr(model, set, coeffs, cfg.render);
    orthogonalizeCheckpoint(model, coeffs);
    rec.psnrAfter = trainingPsnr(model, set, coeffs, cfg.render);
    res.checkpoints.push_back(rec);
    // The basis moved within its span; old moments refer to the previous rows.
    for (Modality m : kModalities) basisState[modalityIndex(m)].reset(model.basis(m).basis.size());
  };

  const std::size_t views = set.views.size();
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    for (int b = 0; b < cfg.batch; ++b) batch.push_back((static_cast<std::size_t>(step) * cfg.batch + b) % views);
    BasisGradients g = basisGradients(model, set, coeffs, anchor, batch, cfg, step);
    const auto& gMean = g.mean;
    const auto& gBasis = g.basis;
    const RowMatX3& gColor = g.color;
    LossRecord rec = g.record;
    rec.step = step;
    res.history.push_back(rec);

    const double lr = cfg.stepSize * (cfg.schedule ? cfg.schedule(step) : 1.0);
    for (Modality m : kModalities) {
      const std::size_t mi = modalityIndex(m);
      EigenBasis& eb = model.basis(m);
      meanState[mi].step(eb.mean, gMean[mi].array(), lr * cfg.modalityRate[mi]);
      if (eb.components() > 0)
        basisState[mi].step(eb.basis, Eigen::Map<const Eigen::ArrayXd>(gBasis[mi].data(), gBasis[mi].size()),
                            lr * cfg.modalityRate[mi]);
    }
    colorState.step(model.colorTexture, Eigen::Map<const Eigen::ArrayXd>(gColor.data(), gColor.size()),
                    lr * cfg.colorRate);

    const int done = step + 1;
    if (done % cfg.orthogonalizeEvery == 0 || done == cfg.steps) checkpoint(done);
  }
  return res;
}

struct FitConfig {
  double omega = 0.2;
  // Adam step in units of each coefficient's stddev.
  double stepSize = 0.05;
  int steps = 200;
  double clampSigmas = 4.0;
  RenderSettings render;
  PerceptualHook perceptual;
  double zeta = 0.0;
  StepSchedule schedule;
};

struct FitTarget {
  Camera camera;
  ImageBuffer image;
};

struct FitResult {
  CoefficientVector coefficients;
  std::vector<double> loss;  // summed over views, one entry per iteration
};

// Analysis-by-synthesis: minimizes the summed photometric loss over k with the
// model frozen. dx/dk is the basis itself.
inline FitResult fitCoefficients(const GemModel& model, const std::vector<FitTarget>& targets,
                                 const CoefficientVector& init, const FitConfig& cfg,
                                 const Eigen::Vector3d& background = Eigen::Vector3d::Zero()) {
  if (targets.empty()) throw InvalidInput("fitCoefficients: no target views");
  for (Modality m : kModalities)
    if (init[m].size() != model.basis(m).components())
      throw ContractViolation("fitCoefficients: initial coefficient length differs from the model");
  RefineConfig lossCfg;
  lossCfg.omega = cfg.omega;
  lossCfg.zeta = cfg.zeta;
  lossCfg.perceptual = cfg.perceptual;

  const Eigen::VectorXd sigma = model.flatStddev();
  const Eigen::VectorXd bound = cfg.clampSigmas * sigma;
  Eigen::VectorXd k = init.flatten().cwiseMax(-bound).cwiseMin(bound);
  detail::AdamBlock state;
  state.reset(k.size());
  FitResult res;

  auto lossAndGrad = [&](const Eigen::VectorXd& flat, Eigen::VectorXd* grad) {
    const CoefficientVector kv = model.unflatten(flat);
    const detail::Evaluated e = detail::evaluateRaw(model, kv);
    double total = 0.0;
    if (grad) grad->setZero(flat.size());
    for (const auto& tgt : targets) {
      const RenderResult fwd = renderForward(e.cloud, tgt.camera, background, cfg.render);
      const LossTerms l = photometricLoss(fwd.image, tgt.image, lossCfg, grad != nullptr);
      if (!std::isfinite(l.total)) throw NonFiniteLoss("fitCoefficients: non-finite loss");
      total += l.total;
      if (!grad) continue;
      const auto g = detail::modalityGradients(renderBackward(fwd.sorted, tgt.camera, l.grad), e);
      Eigen::Index o = 0;
      for (Modality m : kModalities) {
        const Eigen::Index n = model.basis(m).components();
        grad->segment(o, n) += model.basis(m).basis * g[modalityIndex(m)];
        o += n;
      }
    }
    return total;
  };

  Eigen::VectorXd grad;
  for (int it = 0; it < cfg.steps; ++it) {
    res.loss.push_back(lossAndGrad(k, &grad));
    const double lr = cfg.stepSize * (cfg.schedule ? cfg.schedule(it) : 1.0);
    // Per-coefficient step proportional to its stddev; zero-stddev entries stay put.
    Eigen::VectorXd scaled = k;
    for (Eigen::Index j = 0; j < k.size(); ++j) scaled[j] = sigma[j] > 0.0 ? k[j] / sigma[j] : 0.0;
    state.step(scaled, (grad.array() * sigma.array()), lr);
    for (Eigen::Index j = 0; j < k.size(); ++j) k[j] = std::clamp(scaled[j] * sigma[j], -bound[j], bound[j]);
  }
  res.coefficients = model.unflatten(k);
  return res;
}

}  // namespace gem
