#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

#include <gem/dataset.hpp>
#include <gem/eigenmodel.hpp>
#include <gem/png.hpp>
#include <gem/renderer.hpp>

#include "options.hpp"

namespace gemcli {

namespace fs = std::filesystem;
using namespace gem;

inline void requirePath(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError("missing " + what);
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

inline ImageBuffer readImage(const std::string& path) {
  requirePath(path, "image");
  const std::string bytes = readFile(path);
  if (bytes.rfind("\x89PNG", 0) == 0) return decodePng(bytes);
  if (bytes.rfind("P6", 0) == 0) return decodePpm(bytes);
  return decodePfm(bytes);
}

inline std::string encodeImage(const ImageBuffer& img, const std::string& format) {
  if (format == "png") return encodePng(img);
  if (format == "ppm") return encodePpm(img);
  if (format == "pfm") return encodePfm(img);
  throw UsageError("unknown image format '" + format + "' (png, ppm or pfm)");
}

inline void writeImage(const std::string& path, const ImageBuffer& img) {
  const std::string ext = fs::path(path).extension().string();
  if (ext.size() < 2) throw UsageError("output image needs a .png, .ppm or .pfm extension: " + path);
  writeFile(path, encodeImage(img, ext.substr(1)));
}

inline GemModel loadModel(const std::string& path) {
  requirePath(path, "model");
  return deserialize(readFile(path));
}

inline Camera loadCamera(const std::string& path) {
  requirePath(path, "camera");
  try {
    return cameraFromJson(json::parse(readFile(path)));
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

inline Eigen::Vector3d vec3(const json& j, const std::string& key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw UsageError(key + " needs three values");
  return {v[0], v[1], v[2]};
}

inline json coefficientsToJson(const CoefficientVector& k) {
  json j;
  for (Modality m : kModalities) j[std::string(modalityName(m))] = std::vector<double>(k[m].data(), k[m].data() + k[m].size());
  return j;
}

inline CoefficientVector coefficientsFromJson(const json& j, const GemModel& model) {
  if (!j.is_object()) throw InvalidInput("coefficients: expected an object");
  for (const auto& [key, value] : j.items()) parseModality(key);
  CoefficientVector k = model.zeroCoefficients();
  for (Modality m : kModalities) {
    const std::string name(modalityName(m));
    if (!j.contains(name)) continue;
    const auto v = j[name].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != model.basis(m).components())
      throw InvalidInput("coefficients: " + name + " has " + std::to_string(v.size()) + " values, model has " +
                         std::to_string(model.basis(m).components()));
    k[m] = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return k;
}

inline CoefficientVector loadCoefficients(const std::string& path, const GemModel& model) {
  requirePath(path, "coefficients");
  try {
    json j = json::parse(readFile(path));
    if (j.contains("coefficients")) j = j["coefficients"];
    return coefficientsFromJson(j, model);
  } catch (const json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

// Comma-separated flat coefficients (flatten() order); an empty string means all zeros.
inline CoefficientVector parseFlatCoefficients(const std::string& text, const GemModel& model) {
  const Eigen::Index total = model.zeroCoefficients().flatten().size();
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(total);
  if (!text.empty()) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::logic_error&) {
        throw InvalidInput("coefficient '" + item + "' is not a number");
      }
      if (used != item.size() || !std::isfinite(v)) throw InvalidInput("coefficient '" + item + "' is not a number");
      values.push_back(v);
    }
    if (static_cast<Eigen::Index>(values.size()) != total)
      throw InvalidInput("expected " + std::to_string(total) + " coefficients, got " + std::to_string(values.size()));
    flat = Eigen::Map<const Eigen::VectorXd>(values.data(), total);
  }
  return model.unflatten(flat);
}

inline ImageBuffer renderModel(const GemModel& model, const CoefficientVector& k, const Camera& cam,
                               const Eigen::Vector3d& background) {
  return renderForward(evaluate(model, k), cam, background).image;
}

// Model summary shared by `info` and GET /meta.
inline json modelMeta(const GemModel& model) {
  json meta;
  meta["texWidth"] = model.layout.texWidth;
  meta["texHeight"] = model.layout.texHeight;
  meta["T"] = model.texels();
  json counts, stddev;
  for (Modality m : kModalities) {
    const std::string name(modalityName(m));
    counts[name] = model.basis(m).components();
    const Eigen::VectorXd& s = model.basis(m).stddev;
    stddev[name] = std::vector<double>(s.data(), s.data() + s.size());
  }
  meta["M"] = counts;
  meta["stddev"] = stddev;
  meta["bytes"] = gemSerializedBytes(model.layout.texWidth, model.layout.texHeight,
                                     static_cast<std::uint64_t>(model.texels()), model.componentCounts());
  return meta;
}

// Background stored in a dataset's spec.json, or the given fallback.
inline Eigen::Vector3d datasetBackground(const fs::path& root, const Eigen::Vector3d& fallback) {
  const fs::path spec = root / "spec.json";
  if (!fs::exists(spec)) return fallback;
  return synthSpecFromJson(json::parse(readFile(spec.string()))).background;
}

}  // namespace gemcli
