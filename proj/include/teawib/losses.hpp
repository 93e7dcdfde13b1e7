#pragma once

// Training objectives.
//   L   = lambda_w * L_w + lambda_p * L_v + lambda_l * L_l
//   L_w = mean binary cross-entropy between sigmoid(logits) and the message bits
//   L_v = MSE(a, b) + MSE(lap(a), lap(b)), lap = 3x3 Laplacian, valid region
//   L_l = MSE of frozen encoder activations (both hidden layers)

#include "teawib/nets.hpp"

namespace teawib {

template <typename T>
BasicVar<T> watermark_loss(const BasicVar<T>& logits, const WatermarkMessage& m) {
  if (static_cast<int>(logits.value().size()) != m.length())
    throw ShapeError("watermark_loss: " + std::to_string(logits.value().size()) + " logits vs " +
                     std::to_string(m.length()) + " message bits");
  return bce_with_logits(logits, m.as_targets().template cast<T>());
}

/// Per-channel 4-neighbour Laplacian as a [C,C,3,3] kernel.
template <typename T>
BasicTensor<T> laplacian_kernel(int channels) {
  BasicTensor<T> k(Shape{channels, channels, 3, 3});
  for (int c = 0; c < channels; ++c) {
    T* p = k.raw() + static_cast<std::size_t>(c * channels + c) * 9;
    p[1] = p[3] = p[5] = p[7] = T(1);
    p[4] = T(-4);
  }
  return k;
}

template <typename T>
BasicVar<T> laplacian(const BasicVar<T>& x) {
  auto& tape = x.tape();
  return conv2d(x, tape.constant(laplacian_kernel<T>(x.value().dim(0))), std::optional<BasicVar<T>>{}, 1, 0);
}

template <typename T>
BasicVar<T> visual_proxy_loss(const BasicVar<T>& a, const BasicVar<T>& b) {
  return add(mse(a, b), mse(laplacian(a), laplacian(b)));
}

template <typename T>
BasicVar<T> feature_proxy_loss(BasicToyEncoder<T>& encoder, BasicTape<T>& tape, const BasicVar<T>& a,
                               const BasicVar<T>& b) {
  auto fa = encoder.features(tape, a);
  auto fb = encoder.features(tape, b);
  return add(mse(fa.f1, fb.f1), mse(fa.f2, fb.f2));
}

struct LossWeights {
  double w = 1.0, p = 0.2, l = 1.0;
};

struct LossBreakdown {
  double l_w = 0, l_v = 0, l_l = 0, total = 0, bit_acc = 0;
};

/// Per-image loss graph; `total` is the variable to differentiate.
template <typename T>
struct LossTerms {
  BasicVar<T> l_w, l_v, l_l, total;
  bool has_l_l = false;
};

template <typename T>
LossTerms<T> combine_losses(BasicVar<T> l_w, BasicVar<T> l_v, std::optional<BasicVar<T>> l_l,
                            const LossWeights& lw) {
  LossTerms<T> out;
  out.l_w = l_w;
  out.l_v = l_v;
  out.total = add(affine(l_w, static_cast<T>(lw.w)), affine(l_v, static_cast<T>(lw.p)));
  if (l_l) {
    out.l_l = *l_l;
    out.has_l_l = true;
    out.total = add(out.total, affine(*l_l, static_cast<T>(lw.l)));
  }
  return out;
}

/// lambda_p * L_v + lambda_l * L_l on its own (no watermark term).
template <typename T>
BasicVar<T> perceptual_loss(BasicToyEncoder<T>& encoder, BasicTape<T>& tape, const BasicVar<T>& a,
                            const BasicVar<T>& b, const LossWeights& lw = {}) {
  return add(affine(visual_proxy_loss(a, b), static_cast<T>(lw.p)),
             affine(feature_proxy_loss(encoder, tape, a, b), static_cast<T>(lw.l)));
}

}  // namespace teawib
