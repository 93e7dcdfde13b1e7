#pragma once

// 8-bit RGB image files. Pixels map to [-1,1] as v/127.5 - 1 and are rounded
// to the nearest integer (after clamping) on the way out.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "teawib/tensor.hpp"

namespace teawib {

/// Interleaved RGB bytes to a [3,H,W] tensor in [-1,1].
inline Tensor from_rgb8(const std::uint8_t* rgb, int height, int width) {
  Tensor t(Shape{3, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(c, y, x) = static_cast<float>(rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]) / 127.5f - 1.0f;
  return t;
}

inline std::uint8_t to_byte(float v) {
  const double q = std::round((static_cast<double>(v) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

inline std::vector<std::uint8_t> to_rgb8(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("image must be [3,H,W], got " + to_string(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
  return out;
}

/// Round-trip through 8-bit storage.
inline Tensor quantize(const Tensor& image) {
  auto bytes = to_rgb8(image);
  return from_rgb8(bytes.data(), image.dim(1), image.dim(2));
}

inline void write_png(const std::filesystem::path& path, const Tensor& image) {
  auto bytes = to_rgb8(image);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(2));
  img.height = static_cast<png_uint_32>(image.dim(1));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw Error("cannot write PNG '" + path.string() + "': " + img.message);
}

inline Tensor read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw Error("cannot read PNG '" + path.string() + "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  return from_rgb8(bytes.data(), static_cast<int>(img.height), static_cast<int>(img.width));
}

inline void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  auto bytes = to_rgb8(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "P6\n" << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P6") throw Error("'" + path.string() + "' is not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error("malformed PPM header in '" + path.string() + "'");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error("unsupported PPM '" + path.string() + "'");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error("PPM '" + path.string() + "' is truncated");
  return from_rgb8(bytes.data(), h, w);
}

/// Dispatch on extension: .ppm is PPM, anything else PNG.
inline void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (path.extension() == ".ppm") write_ppm(path, image);
  else write_png(path, image);
}

inline Tensor read_image(const std::filesystem::path& path) {
  if (path.extension() == ".ppm") return read_ppm(path);
  return read_png(path);
}

}  // namespace teawib
