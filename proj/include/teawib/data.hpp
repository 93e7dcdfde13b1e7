#pragma once

// Procedural 32x32 training corpus: gradients, rectangles, ellipses, stripes
// and value-noise textures, quantized to 8 bits like any image on disk.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <vector>

#include "teawib/image_io.hpp"
#include "teawib/rng.hpp"

namespace teawib {

namespace detail {

using Rgb = std::array<double, 3>;

inline Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

struct Canvas {
  int size;
  std::vector<Rgb> px;

  explicit Canvas(int n) : size(n), px(static_cast<std::size_t>(n) * n) {}
  Rgb& at(int y, int x) { return px[static_cast<std::size_t>(y) * size + x]; }

  /// Blend `color` with per-pixel coverage in [0,1] estimated by 4x4 supersampling.
  template <typename Inside>
  void paint(const Rgb& color, double opacity, Inside inside) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx) hits += inside(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0);
        if (!hits) continue;
        const double a = opacity * hits / 16.0;
        auto& p = at(y, x);
        for (int c = 0; c < 3; ++c) p[c] = (1 - a) * p[c] + a * color[c];
      }
  }
};

/// Bilinearly interpolated lattice noise in [0,1].
inline std::vector<double> value_noise(int size, int cells, Rng& rng) {
  std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double fy = (y + 0.5) * cells / size, fx = (x + 0.5) * cells / size;
      const int iy = std::min(static_cast<int>(fy), cells - 1), ix = std::min(static_cast<int>(fx), cells - 1);
      double ty = fy - iy, tx = fx - ix;
      ty = ty * ty * (3 - 2 * ty);
      tx = tx * tx * (3 - 2 * tx);
      auto l = [&](int a, int b) { return lattice[static_cast<std::size_t>(a) * (cells + 1) + b]; };
      const double top = l(iy, ix) * (1 - tx) + l(iy, ix + 1) * tx;
      const double bottom = l(iy + 1, ix) * (1 - tx) + l(iy + 1, ix + 1) * tx;
      out[static_cast<std::size_t>(y) * size + x] = top * (1 - ty) + bottom * ty;
    }
  return out;
}

}  // namespace detail

/// One procedural image, [3,size,size] in [-1,1] on the 8-bit grid.
inline Tensor procedural_image(Rng& rng, int size = 32) {
  using detail::Rgb;
  detail::Canvas canvas(size);
  const Rgb c0 = detail::random_color(rng), c1 = detail::random_color(rng);
  const double angle = rng.uniform(0, 2 * M_PI);
  const double gx = std::cos(angle), gy = std::sin(angle);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = 0.5 + 0.5 * ((x - size / 2.0) * gx + (y - size / 2.0) * gy) / (size * 0.7071);
      for (int c = 0; c < 3; ++c) canvas.at(y, x)[c] = (1 - t) * c0[c] + t * c1[c];
    }

  const int shapes = 1 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const Rgb color = detail::random_color(rng);
    const double opacity = rng.uniform(0.6, 1.0);
    switch (rng.below(4)) {
      case 0: {  // axis-aligned rectangle
        const double x0 = rng.uniform(-4, size - 4), y0 = rng.uniform(-4, size - 4);
        const double w = rng.uniform(4, size * 0.7), h = rng.uniform(4, size * 0.7);
        canvas.paint(color, opacity, [=](double x, double y) { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; });
        break;
      }
      case 1: {  // rotated ellipse
        const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
        const double rx = rng.uniform(3, size * 0.4), ry = rng.uniform(3, size * 0.4);
        const double th = rng.uniform(0, M_PI), ct = std::cos(th), st = std::sin(th);
        canvas.paint(color, opacity, [=](double x, double y) {
          const double u = ((x - cx) * ct + (y - cy) * st) / rx;
          const double v = (-(x - cx) * st + (y - cy) * ct) / ry;
          return u * u + v * v <= 1.0;
        });
        break;
      }
      case 2: {  // stripes inside a disc
        const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
        const double radius = rng.uniform(6, size * 0.6);
        const double period = rng.uniform(4, 10), th = rng.uniform(0, M_PI);
        const double ct = std::cos(th), st = std::sin(th);
        canvas.paint(color, opacity, [=](double x, double y) {
          const double dx = x - cx, dy = y - cy;
          if (dx * dx + dy * dy > radius * radius) return false;
          const double phase = std::fmod(std::abs(dx * ct + dy * st), period);
          return phase < period / 2;
        });
        break;
      }
      default: {  // value-noise texture tinted between two colours
        const Rgb other = detail::random_color(rng);
        const int cells = 2 + static_cast<int>(rng.below(4));
        auto noise = detail::value_noise(size, cells, rng);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            const double t = noise[static_cast<std::size_t>(y) * size + x];
            auto& p = canvas.at(y, x);
            for (int c = 0; c < 3; ++c) {
              const double tex = (1 - t) * color[c] + t * other[c];
              p[c] = (1 - opacity * 0.8) * p[c] + opacity * 0.8 * tex;
            }
          }
        break;
      }
    }
  }

  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(canvas.at(y, x)[c], 0.0, 1.0);
        bytes[(static_cast<std::size_t>(y) * size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return from_rgb8(bytes.data(), size, size);
}

inline std::vector<Tensor> procedural_corpus(int count, std::uint64_t seed) {
  if (count < 0) throw Error("image count must be non-negative");
  Rng rng(seed);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(procedural_image(rng));
  return out;
}

/// Every .png / .ppm file in a directory, sorted by file name.
inline std::vector<Tensor> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("image directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tensor> out;
  for (const auto& f : files) {
    auto img = read_image(f);
    if (img.dim(1) != 32 || img.dim(2) != 32)
      throw Error("'" + f.string() + "' is " + std::to_string(img.dim(2)) + "x" +
                  std::to_string(img.dim(1)) + ", expected 32x32");
    out.push_back(std::move(img));
  }
  return out;
}

/// Train / held-out split: the last tenth (at least min(200, n/2) images) is held out.
struct Split {
  std::vector<Tensor> train, held_out;
};

inline Split split_corpus(std::vector<Tensor> images) {
  const std::size_t n = images.size();
  const std::size_t held = std::max(n / 10, std::min<std::size_t>(200, n / 2));
  Split s;
  s.held_out.assign(std::make_move_iterator(images.end() - static_cast<std::ptrdiff_t>(held)),
                    std::make_move_iterator(images.end()));
  images.resize(n - held);
  s.train = std::move(images);
  return s;
}

}  // namespace teawib
