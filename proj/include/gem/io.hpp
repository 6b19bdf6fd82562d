#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gem/core.hpp"
#include "gem/error.hpp"

namespace gem {

// ---------------------------------------------------------------------------
// Binary PLY clouds. Scales and opacities are stored activated.

inline const std::vector<std::string>& plyProperties() {
  static const std::vector<std::string> names = {"x",       "y",       "z",       "rot_0",   "rot_1",
                                                 "rot_2",   "rot_3",   "scale_0", "scale_1", "scale_2",
                                                 "opacity", "red",     "green",   "blue"};
  return names;
}

inline std::string encodePly(const GaussianCloud& c) {
  std::ostringstream head;
  head << "ply\nformat binary_little_endian 1.0\nelement vertex " << c.count() << '\n';
  for (const auto& p : plyProperties()) head << "property float " << p << '\n';
  head << "end_header\n";
  std::string out = head.str();
  out.reserve(out.size() + c.count() * 14 * 4);
  auto put = [&](double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  };
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(c.count()); ++i) {
    for (int k = 0; k < 3; ++k) put(c.positions(i, k));
    for (int k = 0; k < 4; ++k) put(c.rotations(i, k));
    for (int k = 0; k < 3; ++k) put(std::exp(c.logScales(i, k)));
    put(sigmoid(c.opacityLogits[i]));
    for (int k = 0; k < 3; ++k) put(c.colors(i, k));
  }
  return out;
}

inline GaussianCloud decodePly(const std::string& bytes) {
  auto fail = [](ParseErrorKind k, const std::string& why) { throw ParseError(k, "ply: " + why); };
  if (bytes.rfind("ply\n", 0) != 0) fail(ParseErrorKind::BadMagic, "missing 'ply' header");
  const auto end = bytes.find("end_header\n");
  if (end == std::string::npos) fail(ParseErrorKind::Truncated, "missing end_header");
  std::istringstream head(bytes.substr(4, end - 4));
  std::string line;
  std::size_t count = 0;
  bool sawVertex = false;
  struct Prop {
    std::string name;
    int size;
    bool isDouble;
  };
  std::vector<Prop> props;
  while (std::getline(head, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") fail(ParseErrorKind::BadVersion, "only binary_little_endian is supported");
    } else if (tag == "element") {
      std::string name;
      ls >> name;
      if (name != "vertex" || sawVertex) fail(ParseErrorKind::Inconsistent, "unexpected element '" + name + "'");
      ls >> count;
      sawVertex = true;
    } else if (tag == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type == "float" || type == "float32") props.push_back({name, 4, false});
      else if (type == "double" || type == "float64") props.push_back({name, 8, true});
      else fail(ParseErrorKind::Inconsistent, "unsupported property type '" + type + "'");
    }
  }
  if (!sawVertex) fail(ParseErrorKind::Inconsistent, "no vertex element");
  std::vector<int> column(plyProperties().size(), -1);
  std::size_t stride = 0;
  std::vector<std::size_t> offset;
  for (std::size_t p = 0; p < props.size(); ++p) {
    offset.push_back(stride);
    stride += static_cast<std::size_t>(props[p].size);
    for (std::size_t k = 0; k < plyProperties().size(); ++k)
      if (props[p].name == plyProperties()[k]) column[k] = static_cast<int>(p);
  }
  for (std::size_t k = 0; k < column.size(); ++k)
    if (column[k] < 0) fail(ParseErrorKind::Inconsistent, "missing property " + plyProperties()[k]);
  const std::size_t body = end + 11;
  if (bytes.size() - body < count * stride) fail(ParseErrorKind::Truncated, "vertex data shorter than declared");

  GaussianCloud c(count);
  auto read = [&](std::size_t row, std::size_t k) {
    const Prop& p = props[static_cast<std::size_t>(column[k])];
    const char* src = bytes.data() + body + row * stride + offset[static_cast<std::size_t>(column[k])];
    if (p.isDouble) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[b])) << (8 * b);
      return std::bit_cast<double>(bits);
    }
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[b])) << (8 * b);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  for (std::size_t i = 0; i < count; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 3; ++k) c.positions(r, k) = read(i, static_cast<std::size_t>(k));
    for (int k = 0; k < 4; ++k) c.rotations(r, k) = read(i, static_cast<std::size_t>(3 + k));
    for (int k = 0; k < 3; ++k) c.logScales(r, k) = std::log(read(i, static_cast<std::size_t>(7 + k)));
    c.opacityLogits[r] = logit(read(i, 10));
    for (int k = 0; k < 3; ++k) c.colors(r, k) = read(i, static_cast<std::size_t>(11 + k));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Camera JSON: {"width","height","fx","fy","cx","cy","worldToCamera":[16, row-major]}

inline nlohmann::json cameraToJson(const Camera& cam) {
  nlohmann::json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m[static_cast<std::size_t>(4 * r + c)] = cam.worldToCamera(r, c);
  j["worldToCamera"] = m;
  return j;
}

inline Camera cameraFromJson(const nlohmann::json& j) {
  static const char* keys[] = {"width", "height", "fx", "fy", "cx", "cy", "worldToCamera"};
  if (!j.is_object()) throw InvalidInput("camera json: expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(keys), std::end(keys), key) == std::end(keys))
      throw InvalidInput("camera json: unknown key '" + key + "'");
  Camera cam;
  try {
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    const auto m = j.at("worldToCamera").get<std::vector<double>>();
    if (m.size() != 16) throw InvalidInput("camera json: worldToCamera needs 16 numbers");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) cam.worldToCamera(r, c) = m[static_cast<std::size_t>(4 * r + c)];
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("camera json: ") + e.what());
  }
  cam.validate();
  return cam;
}

// ---------------------------------------------------------------------------
// Matrix files: u32 rows, u32 cols, then rows*cols little-endian float32.

inline std::string encodeMatrixFile(const Eigen::MatrixXd& m) {
  std::string out;
  out.reserve(8 + static_cast<std::size_t>(m.size()) * 4);
  auto u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  };
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) u32(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
  return out;
}

inline Eigen::MatrixXd decodeMatrixFile(const std::string& bytes) {
  if (bytes.size() < 8) throw ParseError(ParseErrorKind::Truncated, "matrix file: missing shape header");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    return v;
  };
  const std::uint64_t rows = u32(0), cols = u32(4);
  if (bytes.size() - 8 != rows * cols * 4)
    throw ParseError(bytes.size() - 8 < rows * cols * 4 ? ParseErrorKind::Truncated : ParseErrorKind::Inconsistent,
                     "matrix file: payload size differs from the header");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t at = 8;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c, at += 4) m(r, c) = std::bit_cast<float>(u32(at));
  return m;
}

}  // namespace gem
