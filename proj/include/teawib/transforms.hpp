#pragma once

// Image post-processing applied to [3,H,W] images in [-1,1]. Each transform
// works on the [0,1] view and clamps back into range. At its identity
// magnitude every transform returns the input unchanged.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "teawib/rng.hpp"
#include "teawib/tensor.hpp"

namespace teawib {

enum class TransformKind { brightness, contrast, saturation, sharpen, crop, text_overlay, gauss_noise };

struct TransformSpec {
  TransformKind kind = TransformKind::brightness;
  double magnitude = 1.0;
  std::uint64_t seed = 0;
};

inline const char* transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::brightness: return "brightness";
    case TransformKind::contrast: return "contrast";
    case TransformKind::saturation: return "saturation";
    case TransformKind::sharpen: return "sharpen";
    case TransformKind::crop: return "crop";
    case TransformKind::text_overlay: return "text_overlay";
    case TransformKind::gauss_noise: return "gauss_noise";
  }
  return "?";
}

inline TransformKind parse_transform_kind(const std::string& s) {
  for (auto k : {TransformKind::brightness, TransformKind::contrast, TransformKind::saturation,
                 TransformKind::sharpen, TransformKind::crop, TransformKind::text_overlay,
                 TransformKind::gauss_noise})
    if (s == transform_name(k)) return k;
  throw Error("unknown transform '" + s + "'");
}

/// "kind:magnitude", e.g. "sharpen:2".
inline TransformSpec parse_transform(const std::string& s, std::uint64_t seed = 0) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw Error("transform '" + s + "' must look like kind:magnitude");
  TransformSpec t;
  t.kind = parse_transform_kind(s.substr(0, colon));
  try {
    t.magnitude = std::stod(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error("transform '" + s + "' has a non-numeric magnitude");
  }
  t.seed = seed;
  return t;
}

inline std::string to_string(const TransformSpec& t) {
  std::string m = std::to_string(t.magnitude);
  m.erase(m.find_last_not_of('0') + 1);
  if (!m.empty() && m.back() == '.') m.pop_back();
  return std::string(transform_name(t.kind)) + ":" + m;
}

struct MagnitudeRange {
  double lo, hi, identity;
};

inline MagnitudeRange magnitude_range(TransformKind k) {
  switch (k) {
    case TransformKind::brightness:
    case TransformKind::contrast:
    case TransformKind::saturation:
    case TransformKind::sharpen: return {0.0, 4.0, 1.0};
    case TransformKind::crop: return {0.01, 1.0, 1.0};
    case TransformKind::text_overlay: return {0.0, 4.0, 0.0};  // glyph scale in pixels per font pixel
    case TransformKind::gauss_noise: return {0.0, 1.0, 0.0};   // sigma on the [0,1] scale
  }
  return {0, 0, 0};
}

/// Post-processing settings of the robustness table, in column order.
inline std::vector<TransformSpec> standard_transforms(std::uint64_t seed = 0) {
  return {{TransformKind::brightness, 1.5, seed}, {TransformKind::sharpen, 2.0, seed},
          {TransformKind::sharpen, 1.5, seed},    {TransformKind::text_overlay, 1.0, seed},
          {TransformKind::contrast, 1.5, seed},   {TransformKind::crop, 0.1, seed},
          {TransformKind::saturation, 2.0, seed}, {TransformKind::saturation, 1.5, seed}};
}

namespace detail {

inline constexpr double kLuma[3] = {0.299, 0.587, 0.114};

inline double to01(float v) { return 0.5 * (static_cast<double>(v) + 1.0); }
inline float from01(double p) { return static_cast<float>(2.0 * std::clamp(p, 0.0, 1.0) - 1.0); }

/// 5x7 bitmap glyphs; each row is 5 bits, most significant bit leftmost.
struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

inline constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
};

inline const Glyph& glyph(char c) {
  for (const auto& g : kFont)
    if (g.c == c) return g;
  throw Error(std::string("text overlay: no glyph for '") + c + "'");
}

inline Tensor gauss3(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor tmp(x.shape()), out(x.shape());
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int i = 0; i < w; ++i)
        tmp.at(ch, y, i) = 0.25f * x.at(ch, y, std::max(i - 1, 0)) + 0.5f * x.at(ch, y, i) +
                           0.25f * x.at(ch, y, std::min(i + 1, w - 1));
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int i = 0; i < w; ++i)
        out.at(ch, y, i) = 0.25f * tmp.at(ch, std::max(y - 1, 0), i) + 0.5f * tmp.at(ch, y, i) +
                           0.25f * tmp.at(ch, std::min(y + 1, h - 1), i);
  return out;
}

}  // namespace detail

inline constexpr const char* kOverlayText = "WM";

/// Stamp `text` in black at a seeded position, each font pixel drawn as a scale x scale block.
inline Tensor overlay_text(const Tensor& image, const std::string& text, int scale, std::uint64_t seed) {
  Tensor out = image;
  if (scale <= 0 || text.empty()) return out;
  const int h = image.dim(1), w = image.dim(2);
  const int tw = static_cast<int>(text.size()) * 6 * scale - scale, th = 7 * scale;
  Rng rng(seed);
  const int x0 = tw >= w ? 0 : static_cast<int>(rng.below(static_cast<std::uint64_t>(w - tw + 1)));
  const int y0 = th >= h ? 0 : static_cast<int>(rng.below(static_cast<std::uint64_t>(h - th + 1)));
  for (std::size_t n = 0; n < text.size(); ++n) {
    const auto& g = detail::glyph(text[n]);
    for (int r = 0; r < 7; ++r)
      for (int col = 0; col < 5; ++col) {
        if (!(g.rows[r] & (0x10 >> col))) continue;
        for (int dy = 0; dy < scale; ++dy)
          for (int dx = 0; dx < scale; ++dx) {
            const int y = y0 + r * scale + dy, x = x0 + (static_cast<int>(n) * 6 + col) * scale + dx;
            if (y >= h || x >= w) continue;
            for (int ch = 0; ch < image.dim(0); ++ch) out.at(ch, y, x) = -1.0f;
          }
      }
  }
  return out;
}

/// Side length and seeded offset of a crop keeping `area` of the image.
struct CropWindow {
  int y0, x0, height, width;
};

inline CropWindow crop_window(int h, int w, double area, std::uint64_t seed) {
  const double side = std::sqrt(area);
  const int ch = std::clamp(static_cast<int>(std::lround(h * side)), std::min(8, h), h);
  const int cw = std::clamp(static_cast<int>(std::lround(w * side)), std::min(8, w), w);
  Rng rng(seed);
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ch + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw + 1)));
  return {y0, x0, ch, cw};
}

inline Tensor apply_transform(const Tensor& image, const TransformSpec& spec) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("apply_transform: expected [3,H,W], got " + to_string(image.shape()));
  const auto range = magnitude_range(spec.kind);
  const double mag = spec.magnitude;
  if (!(mag >= range.lo && mag <= range.hi))
    throw Error(std::string("apply_transform: ") + transform_name(spec.kind) + " magnitude " +
                std::to_string(mag) + " outside [" + std::to_string(range.lo) + ", " +
                std::to_string(range.hi) + "]");
  if (mag == range.identity) return image;

  const int h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  switch (spec.kind) {
    case TransformKind::brightness:
      for (std::size_t i = 0; i < image.size(); ++i) out[i] = detail::from01(detail::to01(image[i]) * mag);
      return out;
    case TransformKind::contrast: {
      double mean = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) mean += detail::kLuma[c] * detail::to01(image.at(c, y, x));
      mean /= static_cast<double>(h) * w;
      for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = detail::from01((detail::to01(image[i]) - mean) * mag + mean);
      return out;
    }
    case TransformKind::saturation:
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double luma = 0;
          for (int c = 0; c < 3; ++c) luma += detail::kLuma[c] * detail::to01(image.at(c, y, x));
          for (int c = 0; c < 3; ++c)
            out.at(c, y, x) = detail::from01(luma + mag * (detail::to01(image.at(c, y, x)) - luma));
        }
      return out;
    case TransformKind::sharpen: {
      const Tensor blur = detail::gauss3(image);
      for (std::size_t i = 0; i < image.size(); ++i) {
        const double p = detail::to01(image[i]);
        out[i] = detail::from01(p + (mag - 1.0) * (p - detail::to01(blur[i])));
      }
      return out;
    }
    case TransformKind::crop: {
      const auto win = crop_window(h, w, mag, spec.seed);
      Tensor cropped(Shape{3, win.height, win.width});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < win.height; ++y)
          for (int x = 0; x < win.width; ++x) cropped.at(c, y, x) = image.at(c, win.y0 + y, win.x0 + x);
      return cropped;
    }
    case TransformKind::text_overlay: {
      if (mag != std::floor(mag)) throw Error("apply_transform: text_overlay magnitude must be an integer scale");
      return overlay_text(image, kOverlayText, static_cast<int>(mag), spec.seed);
    }
    case TransformKind::gauss_noise: {
      Rng rng(spec.seed);
      for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = detail::from01(detail::to01(image[i]) + mag * rng.gaussian());
      return out;
    }
  }
  return image;
}

}  // namespace teawib
