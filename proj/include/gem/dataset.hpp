#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "gem/io.hpp"
#include "gem/synth.hpp"

// On-disk synthetic dataset:
//   spec.json, layout.json, meshes/frame_%04d.obj, clouds/frame_%04d.ply,
//   cams/cam_%02d.json, images/f%04d_c%02d.pfm, coeffs.bin, features.bin
namespace gem {

namespace fs = std::filesystem;

inline std::string indexedName(const char* pattern, int a, int b = 0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

inline nlohmann::json toJson(const BlendShape& b) {
  return {{"weight", b.weight},
          {"frequency", b.frequency},
          {"phase", b.phase},
          {"spatial", {b.spatial.x(), b.spatial.y(), b.spatial.z()}},
          {"spatialPhase", b.spatialPhase},
          {"direction", {b.direction.x(), b.direction.y(), b.direction.z()}}};
}

inline nlohmann::json toJson(const SynthSpec& s) {
  nlohmann::json motion = nlohmann::json::array();
  for (const auto& b : s.motion) motion.push_back(toJson(b));
  return {{"seed", s.seed},
          {"texResolution", s.texResolution},
          {"frameCount", s.frameCount},
          {"cameraCount", s.cameraCount},
          {"imageSize", s.imageSize},
          {"subdivisions", s.subdivisions},
          {"motion", motion},
          {"vertexNoise", s.vertexNoise},
          {"background", {s.background.x(), s.background.y(), s.background.z()}}};
}

namespace detail {

inline void requireKeys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw InvalidInput(what + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidInput(what + ": unknown key '" + key + "'");
}

inline Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidInput("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

inline SynthSpec synthSpecFromJson(const nlohmann::json& j) {
  detail::requireKeys(j, {"seed", "texResolution", "frameCount", "cameraCount", "imageSize", "subdivisions", "motion",
                          "vertexNoise", "background"},
                      "spec.json");
  SynthSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.texResolution = j.value("texResolution", s.texResolution);
    s.frameCount = j.value("frameCount", s.frameCount);
    s.cameraCount = j.value("cameraCount", s.cameraCount);
    s.imageSize = j.value("imageSize", s.imageSize);
    s.subdivisions = j.value("subdivisions", s.subdivisions);
    s.vertexNoise = j.value("vertexNoise", s.vertexNoise);
    if (j.contains("background")) s.background = detail::vec3(j["background"]);
    if (j.contains("motion"))
      for (const auto& m : j["motion"]) {
        detail::requireKeys(m, {"weight", "frequency", "phase", "spatial", "spatialPhase", "direction"}, "blend shape");
        BlendShape b;
        b.weight = m.value("weight", b.weight);
        b.frequency = m.value("frequency", b.frequency);
        b.phase = m.value("phase", b.phase);
        b.spatialPhase = m.value("spatialPhase", b.spatialPhase);
        if (m.contains("spatial")) b.spatial = detail::vec3(m["spatial"]);
        if (m.contains("direction")) b.direction = detail::vec3(m["direction"]);
        s.motion.push_back(b);
      }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("spec.json: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json toJson(const TexelLayout& l) {
  std::vector<std::uint32_t> active;
  for (std::size_t i = 0; i < l.activeMask.size(); ++i)
    if (l.activeMask[i]) active.push_back(static_cast<std::uint32_t>(i));
  return {{"texWidth", l.texWidth}, {"texHeight", l.texHeight}, {"active", active}};
}

inline TexelLayout layoutFromJson(const nlohmann::json& j) {
  detail::requireKeys(j, {"texWidth", "texHeight", "active"}, "layout.json");
  TexelLayout l;
  try {
    l.texWidth = j.at("texWidth").get<int>();
    l.texHeight = j.at("texHeight").get<int>();
    if (l.texWidth < 1 || l.texHeight < 1) throw InvalidInput("layout.json: non-positive size");
    l.activeMask.assign(static_cast<std::size_t>(l.texWidth) * l.texHeight, 0);
    for (std::uint32_t i : j.at("active").get<std::vector<std::uint32_t>>()) {
      if (i >= l.activeMask.size()) throw InvalidInput("layout.json: active index out of range");
      l.activeMask[i] = 1;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("layout.json: ") + e.what());
  }
  return l;
}

// Files in `dir` whose names start with `prefix` and end with `suffix`, sorted by name.
inline std::vector<fs::path> listFiles(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() >= prefix.size() + suffix.size() && name.rfind(prefix, 0) == 0 &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<GaussianCloud> loadClouds(const fs::path& dir) {
  std::vector<GaussianCloud> out;
  for (const auto& p : listFiles(dir, "", ".ply")) out.push_back(decodePly(readFile(p.string())));
  return out;
}

inline std::vector<Camera> loadCameras(const fs::path& dir) {
  std::vector<Camera> out;
  for (const auto& p : listFiles(dir, "cam_", ".json")) {
    try {
      out.push_back(cameraFromJson(nlohmann::json::parse(readFile(p.string()))));
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidInput(p.string() + ": " + e.what());
    }
  }
  return out;
}

inline fs::path datasetImagePath(const fs::path& root, int frame, int camera) {
  return root / "images" / indexedName("f%04d_c%02d.pfm", frame, camera);
}

struct DatasetContents {
  SynthSequence sequence;
  std::vector<ImageBuffer> images;  // frame-major
  FeatureSet features;
};

// Generates the sequence, renders it, synthesizes features from the blend
// weights and writes everything under `root`.
inline DatasetContents writeDataset(const fs::path& root, const SynthSpec& spec, int featureDim = 2048,
                                    double featureNoise = 0.0) {
  DatasetContents d;
  d.sequence = generateSequence(spec);
  const SynthSequence& s = d.sequence;
  d.images = renderGroundTruth(s.clouds, s.cameras, spec.background);
  std::vector<Eigen::VectorXd> weights;
  for (Eigen::Index f = 0; f < s.weights.rows(); ++f) weights.push_back(s.weights.row(f).transpose());
  d.features = synthesizeFeatures(weights, featureDim, spec.seed, featureNoise);

  for (const char* sub : {"meshes", "clouds", "cams", "images"}) fs::create_directories(root / sub);
  writeFile((root / "spec.json").string(), toJson(spec).dump(2) + "\n");
  writeFile((root / "layout.json").string(), toJson(s.layout).dump() + "\n");
  for (std::size_t f = 0; f < s.clouds.size(); ++f) {
    const int fi = static_cast<int>(f);
    writeFile((root / "meshes" / indexedName("frame_%04d.obj", fi)).string(),
              writeObj(s.canonical.withVertices(s.frameVertices[f])));
    writeFile((root / "clouds" / indexedName("frame_%04d.ply", fi)).string(), encodePly(s.clouds[f]));
  }
  for (std::size_t c = 0; c < s.cameras.size(); ++c)
    writeFile((root / "cams" / indexedName("cam_%02d.json", static_cast<int>(c))).string(),
              cameraToJson(s.cameras[c]).dump(2) + "\n");
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const int f = static_cast<int>(i / s.cameras.size()), c = static_cast<int>(i % s.cameras.size());
    writeFile(datasetImagePath(root, f, c).string(), encodePfm(d.images[i]));
  }
  writeFile((root / "coeffs.bin").string(), encodeMatrixFile(s.weights));
  writeFile((root / "features.bin").string(), encodeMatrixFile(d.features.features));
  return d;
}

}  // namespace gem
