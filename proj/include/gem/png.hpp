#pragma once

#include <png.h>

#include <string>
#include <vector>

#include "gem/image.hpp"

namespace gem {

// 8-bit RGB PNG of an image, values clamped to [0,1] and rounded like the PPM writer.
inline std::string encodePng(const ImageBuffer& img) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(img.pixels.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = toByte(img.pixels[i]);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw Error(std::string("png: ") + desc.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw Error(std::string("png: ") + desc.message);
  out.resize(size);
  return out;
}

inline ImageBuffer decodePng(const std::string& bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw ParseError(ParseErrorKind::BadMagic, std::string("png: ") + desc.message);
  desc.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, rgb.data(), 0, nullptr))
    throw ParseError(ParseErrorKind::Truncated, std::string("png: ") + desc.message);
  ImageBuffer img(static_cast<int>(desc.width), static_cast<int>(desc.height));
  for (std::size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = rgb[i] / 255.0;
  return img;
}

}  // namespace gem
