#pragma once

#include <gem/eigenmodel.hpp>
#include <gem/refine.hpp>
#include <gem/synth.hpp>

namespace gemtest {

using namespace gem;

// A distilled synthetic sequence with its per-frame projections.
struct DistilledScene {
  SynthSequence seq;
  GemModel model;
  std::vector<CoefficientVector> coefficients;
};

inline SynthSpec smallSpec(int tex = 16, int frames = 12, int cameras = 2, int image = 32, std::uint64_t seed = 5) {
  SynthSpec spec;
  spec.seed = seed;
  spec.texResolution = tex;
  spec.frameCount = frames;
  spec.cameraCount = cameras;
  spec.imageSize = image;
  spec.subdivisions = 2;
  spec.motion = defaultMotion(6, 0.12, 0.7, seed);
  spec.background = Eigen::Vector3d(0.1, 0.1, 0.1);
  return spec;
}

inline DistilledScene distillScene(const SynthSpec& spec, Eigen::Index components) {
  DistilledScene s;
  s.seq = generateSequence(spec);
  s.model = distill(s.seq.clouds, s.seq.layout, {components, components, components, components});
  for (const auto& c : s.seq.clouds) s.coefficients.push_back(project(s.model, c));
  return s;
}

// Every (frame, camera) view with targets rendered from the given clouds.
inline TrainingSet trainingSet(const std::vector<GaussianCloud>& clouds, const std::vector<Camera>& cameras,
                               const std::vector<CoefficientVector>& coefficients, const Eigen::Vector3d& bg) {
  TrainingSet set;
  set.coefficients = coefficients;
  set.background = bg;
  for (std::size_t f = 0; f < clouds.size(); ++f)
    for (const auto& cam : cameras) set.views.push_back({f, cam, renderForward(clouds[f], cam, bg).image});
  return set;
}

}  // namespace gemtest
