#pragma once

// Watermark-informed blending for one convolution.
//
// With fingerprint r, scale s = s_head(r), bias b = A_l(r), blend a = sigmoid(alpha_raw):
//   W'  = W * (s + b)                          (per input channel)
//   y_d = a * conv(W', x) + (1 - a) * conv(W, x) + bias
//   y_i = aug + lambda_n * eps,  aug = M_l(r) per output channel, eps ~ N(0, sigma^2)
//   y   = y_d + y_i
// Convolution is linear in the kernel, so y_d also equals conv(W * (a(s+b) + 1 - a), x),
// which is the folded form used for training speed and for baking.

#include <optional>
#include <string>

#include "teawib/layers.hpp"
#include "teawib/registry.hpp"

namespace teawib {

enum class BlendRoute { folded, two_pass };

struct WibOptions {
  bool augment = true;
  bool noise = true;
  BlendRoute route = BlendRoute::folded;
  std::optional<double> alpha;  // injected blend factor, bypasses alpha_raw
};

inline constexpr double kNoiseSigma = 1.0;

/// E_w: d_w -> d_r -> d_r with leaky ReLU between. Bits enter recentred to +-1.
template <typename T>
struct BasicMappingNetwork {
  LinearLayer<T> fc1, fc2;

  BasicMappingNetwork() = default;
  BasicMappingNetwork(int d_w, int d_r, Rng& rng, Init init = Init::standard)
      : fc1("mapping.fc1", d_w, d_r, rng, init), fc2("mapping.fc2", d_r, d_r, rng, init) {}

  int message_bits() const { return fc1.in_features(); }
  int fingerprint_dim() const { return fc2.out_features(); }

  BasicVar<T> operator()(BasicTape<T>& tape, const WatermarkMessage& m) {
    if (m.length() != message_bits())
      throw ShapeError("map_watermark: message has " + std::to_string(m.length()) +
                       " bits, mapping network expects " + std::to_string(message_bits()));
    BasicTensor<T> x(Shape{m.length()});
    for (int i = 0; i < m.length(); ++i) x[i] = m.bits[static_cast<std::size_t>(i)] ? T(1) : T(-1);
    return fc2(tape, leaky_relu(fc1(tape, tape.constant(std::move(x)))));
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    fc1.collect(out);
    fc2.collect(out);
    return out;
  }
};

template <typename T>
BasicTensor<T> map_watermark(BasicMappingNetwork<T>& net, const WatermarkMessage& m) {
  BasicTape<T> tape(false);
  return net(tape, m).value();
}

/// Gaussian noise of the given shape, N(0, sigma^2).
template <typename T>
BasicTensor<T> gaussian_tensor(const Shape& shape, Rng& rng, double sigma = kNoiseSigma) {
  BasicTensor<T> eps(shape);
  for (auto& v : eps.data()) v = static_cast<T>(sigma * rng.gaussian());
  return eps;
}

/// y_i = aug broadcast over space + lambda_n * eps. `aug` may be absent.
template <typename T>
BasicVar<T> image_quality_term(BasicTape<T>& tape, const Shape& out_shape,
                               const std::optional<BasicVar<T>>& aug, const BasicVar<T>& lambda_n,
                               Rng* rng) {
  BasicVar<T> y = tape.constant(BasicTensor<T>(out_shape));
  if (aug) y = add_channel(y, *aug);
  if (rng) y = add(y, scale_by(tape.constant(gaussian_tensor<T>(out_shape, *rng)), lambda_n));
  return y;
}

/// A fingerprint folded into plain convolution weights; no heads retained.
template <typename T>
struct BasicBakedConvLayer {
  BasicParameter<T> weight, bias, aug, lambda_n;
  int stride = 1;

  int padding() const { return (weight.value.dim(2) - 1) / 2; }

  BasicVar<T> forward(BasicTape<T>& tape, const BasicVar<T>& x, Rng* noise_rng) {
    auto y_d = conv2d(x, tape.param(weight), std::optional<BasicVar<T>>(tape.param(bias)), stride,
                      padding());
    auto y_i = image_quality_term(tape, y_d.shape(), std::optional<BasicVar<T>>(tape.param(aug)),
                                  tape.param(lambda_n), noise_rng);
    return add(y_d, y_i);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
    out.push_back(&aug);
    out.push_back(&lambda_n);
  }
};

template <typename T>
struct BasicWibConvLayer {
  ConvLayer<T> base;  // pre-trained W and bias, frozen
  Mlp2<T> s_head;
  LinearLayer<T> a_l;
  Mlp2<T> m_l;
  BasicParameter<T> alpha_raw, lambda_n;

  BasicWibConvLayer() = default;

  /// Wrap a pre-trained convolution; head initialisation makes the layer
  /// reproduce it exactly (s = 0, b = 1, aug = 0, lambda_n = 0).
  BasicWibConvLayer(const std::string& name, const ConvLayer<T>& pretrained, int d_r, Rng& rng)
      : base(pretrained),
        s_head(name + ".s_head", d_r, d_r, pretrained.in_channels(), rng, Init::zero),
        a_l(name + ".a_l", d_r, pretrained.in_channels(), rng, Init::zero_weight_unit_bias),
        m_l(name + ".m_l", d_r, d_r, pretrained.out_channels(), rng, Init::zero),
        alpha_raw(name + ".alpha_raw", BasicTensor<T>::scalar(T(0))),
        lambda_n(name + ".lambda_n", BasicTensor<T>::scalar(T(0))) {
    base.weight.name = name + ".W";
    base.bias.name = name + ".bias";
    base.weight.trainable = false;
    base.bias.trainable = false;
  }

  int in_channels() const { return base.in_channels(); }
  int out_channels() const { return base.out_channels(); }

  BasicVar<T> alpha(BasicTape<T>& tape, const WibOptions& opt) {
    if (opt.alpha) return tape.constant(BasicTensor<T>::scalar(static_cast<T>(*opt.alpha)));
    return sigmoid(tape.param(alpha_raw));
  }

  /// s + b, one entry per input channel.
  BasicVar<T> modulation(BasicTape<T>& tape, const BasicVar<T>& r) {
    return add(s_head(tape, r), a_l(tape, r));
  }

  /// W' = W * (s + b).
  BasicVar<T> modulated_weights(BasicTape<T>& tape, const BasicVar<T>& r) {
    return scale_in_channels(tape.param(base.weight), modulation(tape, r));
  }

  /// a(s + b) + (1 - a), the per-channel factor of the folded kernel.
  BasicVar<T> blend_factor(BasicTape<T>& tape, const BasicVar<T>& r, const WibOptions& opt) {
    auto a = alpha(tape, opt);
    return affine(scale_by(affine(modulation(tape, r), T(1), T(-1)), a), T(1), T(1));
  }

  BasicVar<T> blended_conv(BasicTape<T>& tape, const BasicVar<T>& r, const BasicVar<T>& x,
                           const WibOptions& opt) {
    auto bias = std::optional<BasicVar<T>>(tape.param(base.bias));
    const int s = base.stride, p = base.padding();
    if (opt.route == BlendRoute::folded) {
      auto kernel = scale_in_channels(tape.param(base.weight), blend_factor(tape, r, opt));
      return conv2d(x, kernel, bias, s, p);
    }
    auto a = alpha(tape, opt);
    auto modulated = conv2d(x, modulated_weights(tape, r), std::optional<BasicVar<T>>{}, s, p);
    auto original = conv2d(x, tape.param(base.weight), std::optional<BasicVar<T>>{}, s, p);
    auto blended = add(scale_by(modulated, a), scale_by(original, affine(a, T(-1), T(1))));
    return add_channel(blended, *bias);
  }

  BasicVar<T> iqp(BasicTape<T>& tape, const BasicVar<T>& r, const Shape& out_shape, Rng* noise_rng,
                  const WibOptions& opt) {
    std::optional<BasicVar<T>> aug;
    if (opt.augment) aug = m_l(tape, r);
    return image_quality_term(tape, out_shape, aug, tape.param(lambda_n),
                              opt.noise ? noise_rng : nullptr);
  }

  BasicVar<T> forward(BasicTape<T>& tape, const BasicVar<T>& r, const BasicVar<T>& x,
                      Rng* noise_rng, const WibOptions& opt) {
    auto y_d = blended_conv(tape, r, x, opt);
    if (!opt.augment && !(opt.noise && noise_rng)) return y_d;
    return add(y_d, iqp(tape, r, y_d.shape(), noise_rng, opt));
  }

  /// Pre-trained convolution alone (the frozen path).
  BasicVar<T> plain(BasicTape<T>& tape, const BasicVar<T>& x) { return base(tape, x); }

  BasicBakedConvLayer<T> bake(const BasicTensor<T>& fingerprint, const std::string& name,
                              const WibOptions& opt) {
    BasicTape<T> tape(false);
    auto r = tape.constant(fingerprint);
    auto factor = blend_factor(tape, r, opt);
    auto folded = scale_in_channels(tape.param(base.weight), factor);
    BasicBakedConvLayer<T> out;
    out.stride = base.stride;
    out.weight = BasicParameter<T>(name + ".weight", folded.value());
    out.bias = BasicParameter<T>(name + ".bias", base.bias.value);
    out.aug = BasicParameter<T>(name + ".aug",
                                opt.augment ? m_l(tape, r).value() : BasicTensor<T>(Shape{out_channels()}));
    out.lambda_n = BasicParameter<T>(name + ".lambda_n", lambda_n.value);
    return out;
  }

  /// Baked form of the frozen path (for layers that carry no fingerprint).
  BasicBakedConvLayer<T> bake_plain(const std::string& name) {
    BasicBakedConvLayer<T> out;
    out.stride = base.stride;
    out.weight = BasicParameter<T>(name + ".weight", base.weight.value);
    out.bias = BasicParameter<T>(name + ".bias", base.bias.value);
    out.aug = BasicParameter<T>(name + ".aug", BasicTensor<T>(Shape{out_channels()}));
    out.lambda_n = BasicParameter<T>(name + ".lambda_n", BasicTensor<T>::scalar(T(0)));
    return out;
  }

  void collect_frozen(ParamList<T>& out) {
    out.push_back(&base.weight);
    out.push_back(&base.bias);
  }

  void collect_heads(ParamList<T>& out) {
    s_head.collect(out);
    a_l.collect(out);
    m_l.collect(out);
    out.push_back(&alpha_raw);
    out.push_back(&lambda_n);
  }
};

}  // namespace teawib
