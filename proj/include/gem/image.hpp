#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gem/error.hpp"

namespace gem {

// Float RGB raster, row-major with exact-width rows (no padding).
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // height * width * 3
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  ImageBuffer() = default;
  ImageBuffer(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t size() const { return pixels.size(); }
  double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool sameShape(const ImageBuffer& o) const { return width == o.width && height == o.height; }
};

inline void requireSameShape(const ImageBuffer& a, const ImageBuffer& b, const char* where) {
  if (!a.sameShape(b) || a.pixels.size() != b.pixels.size())
    throw InvalidInput(std::string(where) + ": image size mismatch");
}

inline std::uint8_t toByte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Binary P6, 8-bit, linear values clamped to [0,1].
inline std::string encodePpm(const ImageBuffer& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) out.push_back(static_cast<char>(toByte(v)));
  return out;
}

inline ImageBuffer decodePpm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (magic != "P6") throw ParseError(ParseErrorKind::BadMagic, "expected P6");
  if (w <= 0 || h <= 0 || maxv != 255) throw ParseError(ParseErrorKind::Inconsistent, "PPM header");
  in.get();
  ImageBuffer img(w, h);
  std::string data(img.pixels.size(), '\0');
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size()))
    throw ParseError(ParseErrorKind::Truncated, "PPM pixel data");
  for (std::size_t i = 0; i < data.size(); ++i)
    img.pixels[i] = static_cast<unsigned char>(data[i]) / 255.0;
  return img;
}

// PFM color, little-endian (negative scale). PFM stores rows bottom-to-top.
inline std::string encodePfm(const ImageBuffer& img) {
  std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + img.pixels.size() * 4);
  char* dst = out.data() + header;
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float f = static_cast<float>(img.at(x, y, c));
        std::uint32_t u = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((u >> (8 * b)) & 0xFF);
      }
    }
  }
  return out;
}

inline ImageBuffer decodePfm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (magic != "PF") throw ParseError(ParseErrorKind::BadMagic, "expected PF");
  if (w <= 0 || h <= 0) throw ParseError(ParseErrorKind::Inconsistent, "PFM header");
  if (scale >= 0) throw ParseError(ParseErrorKind::Inconsistent, "big-endian PFM not supported");
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  ImageBuffer img(w, h);
  if (bytes.size() < offset + img.pixels.size() * 4)
    throw ParseError(ParseErrorKind::Truncated, "PFM pixel data");
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(*src++) << (8 * b);
        img.at(x, y, c) = std::bit_cast<float>(u);
      }
    }
  }
  return img;
}

inline std::string readFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void writeFile(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace gem
