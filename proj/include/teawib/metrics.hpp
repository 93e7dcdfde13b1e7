#pragma once

// Image quality metrics. Inputs are [C,H,W] in [-1,1]; everything is computed
// after mapping to [0,1].

#include <algorithm>
#include <cmath>
#include <vector>

#include "teawib/tensor.hpp"

namespace teawib {

inline constexpr double kPsnrCap = 100.0;

struct QualityReport {
  double psnr_db = kPsnrCap;
  double ssim = 1.0;
  double linf = 0.0;  // 0-255 scale
};

inline double mse01(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 0.5 * (static_cast<double>(a[i]) - b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline double psnr(const Tensor& a, const Tensor& b) {
  const double m = mse01(a, b);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

inline double linf(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "linf");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, 0.5 * std::abs(static_cast<double>(a[i]) - b[i]));
  return m * 255.0;
}

/// Mean SSIM over channels and valid window positions (11x11 Gaussian, sigma 1.5).
/// Images smaller than the window use a window truncated to the image.
inline double ssim(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "ssim");
  if (a.rank() != 3) throw ShapeError("ssim: expected [C,H,W]");
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int win = std::min({11, h, w});
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> g(static_cast<std::size_t>(win));
  double norm = 0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    norm += g[i];
  }
  for (auto& v : g) v /= norm;

  double total = 0;
  long count = 0;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y + win <= h; ++y)
      for (int x = 0; x + win <= w; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double wt = g[i] * g[j];
            const double p = 0.5 * (a.at(c, y + i, x + j) + 1.0);
            const double q = 0.5 * (b.at(c, y + i, x + j) + 1.0);
            mx += wt * p;
            my += wt * q;
            sxx += wt * p * p;
            syy += wt * q * q;
            sxy += wt * p * q;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

inline QualityReport quality(const Tensor& a, const Tensor& b) {
  return {psnr(a, b), ssim(a, b), linf(a, b)};
}

}  // namespace teawib
