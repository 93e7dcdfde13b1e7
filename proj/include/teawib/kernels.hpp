#pragma once

// Tensor-level kernels with no autodiff bookkeeping. The autograd layer
// composes these for both forward and backward passes.

#include <numeric>

#include <Eigen/Core>

#include "teawib/tensor.hpp"

namespace teawib::kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  int in_channels, in_h, in_w;
  int out_channels, kernel;
  int stride, padding;
  int out_h, out_w;

  int patch() const { return in_channels * kernel * kernel; }
  int pixels() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& kernel, int stride,
                           int padding) {
  if (input.rank() != 3)
    throw ShapeError("conv2d: input must be [C,H,W], got " + to_string(input.shape()));
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [O,C,k,k], got " + to_string(kernel.shape()));
  if (kernel.dim(1) != input.dim(0))
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(0)) + " of input " +
                     to_string(input.shape()) + " do not match kernel " +
                     to_string(kernel.shape()));
  if (kernel.dim(2) != kernel.dim(3))
    throw ShapeError("conv2d: kernel must be square, got " + to_string(kernel.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2),
                 stride,       padding,      0,            0};
  int span_h = g.in_h + 2 * padding - g.kernel;
  int span_w = g.in_w + 2 * padding - g.kernel;
  if (span_h < 0 || span_w < 0)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

/// Unfold input patches into a [C*k*k, H'*W'] matrix.
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& input, const ConvGeometry& g) {
  const int k = g.kernel;
  std::vector<T> cols(static_cast<std::size_t>(g.patch()) * g.pixels(), T(0));
  const T* src = input.raw();
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * g.pixels();
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* line = src + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (g.stride == 1) {
            int ox_begin = std::max(0, g.padding - kx);
            int ox_end = std::min(g.out_w, g.in_w + g.padding - kx);
            for (int ox = ox_begin; ox < ox_end; ++ox) dst[ox] = line[ox - g.padding + kx];
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              int ix = ox * g.stride - g.padding + kx;
              if (ix >= 0 && ix < g.in_w) dst[ox] = line[ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

/// Scatter-add a [C*k*k, H'*W'] matrix back onto a [C,H,W] gradient.
template <typename T>
void col2im_add(const std::vector<T>& cols, const ConvGeometry& g, BasicTensor<T>& out) {
  const int k = g.kernel;
  T* dst = out.raw();
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * g.pixels();
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* line = dst + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          const T* src = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.in_w) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// out[o] = sum_{c,ky,kx} kernel[o,c,ky,kx] * input[c, y*s-p+ky, x*s-p+kx] + bias[o].
/// `cols_out`, when given, receives the unfolded input for reuse in backward.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>* bias, int stride, int padding,
                      std::vector<T>* cols_out = nullptr) {
  ConvGeometry g = conv_geometry(input, kernel, stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_channels))
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " does not match kernel " +
                     to_string(kernel.shape()));
  std::vector<T> cols = im2col(input, g);
  BasicTensor<T> out(Shape{g.out_channels, g.out_h, g.out_w});
  ConstMatMap<T> w(kernel.raw(), g.out_channels, g.patch());
  ConstMatMap<T> x(cols.data(), g.patch(), g.pixels());
  MatMap<T> y(out.raw(), g.out_channels, g.pixels());
  y.noalias() = w * x;
  if (bias) {
    for (int o = 0; o < g.out_channels; ++o) y.row(o).array() += (*bias)[o];
  }
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

/// Gradients of conv2d given the unfolded input from the forward pass.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const std::vector<T>& cols,
                     const BasicTensor<T>& kernel, const BasicTensor<T>& grad_out,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_kernel,
                     BasicTensor<T>* grad_bias) {
  ConstMatMap<T> dy(grad_out.raw(), g.out_channels, g.pixels());
  if (grad_kernel) {
    MatMap<T> dw(grad_kernel->raw(), g.out_channels, g.patch());
    ConstMatMap<T> x(cols.data(), g.patch(), g.pixels());
    dw.noalias() += dy * x.transpose();
  }
  if (grad_bias) {
    // Sequential sum: Eigen's vectorized redux rounds differently depending on heap alignment.
    const T* row = grad_out.raw();
    for (int o = 0; o < g.out_channels; ++o, row += g.pixels())
      (*grad_bias)[o] += std::accumulate(row, row + g.pixels(), T(0));
  }
  if (grad_input) {
    std::vector<T> dcols(static_cast<std::size_t>(g.patch()) * g.pixels());
    ConstMatMap<T> w(kernel.raw(), g.out_channels, g.patch());
    MatMap<T> dx(dcols.data(), g.patch(), g.pixels());
    dx.noalias() = w.transpose() * dy;
    col2im_add(dcols, g, *grad_input);
  }
}

/// out = weight * input + bias, weight [m,n].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias) {
  if (input.rank() != 1 || weight.rank() != 2 || weight.dim(1) != input.dim(0))
    throw ShapeError("linear: input " + to_string(input.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  const int m = weight.dim(0), n = weight.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != m))
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  BasicTensor<T> out(Shape{m});
  for (int i = 0; i < m; ++i) {
    T acc = bias ? (*bias)[i] : T(0);
    const T* row = weight.raw() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * input[j];
    out[i] = acc;
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& input, int factor) {
  if (input.rank() != 3) throw ShapeError("upsample: input must be [C,H,W]");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  BasicTensor<T> out(Shape{c, h * factor, w * factor});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h * factor; ++y)
      for (int x = 0; x < w * factor; ++x) out.at(ch, y, x) = input.at(ch, y / factor, x / factor);
  return out;
}

}  // namespace teawib::kernels
