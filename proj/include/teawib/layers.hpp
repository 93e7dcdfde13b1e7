#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "teawib/autograd.hpp"
#include "teawib/checkpoint.hpp"
#include "teawib/rng.hpp"

namespace teawib {

template <typename T>
BasicTensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
using ParamList = std::vector<BasicParameter<T>*>;

/// Trainable parameters enter the tape as gradient leaves, frozen ones as constants.
template <typename T>
BasicVar<T> bind(BasicTape<T>& tape, BasicParameter<T>& p) {
  return p.trainable ? tape.param(p) : tape.frozen(p);
}

enum class Init { standard, zero, zero_weight_unit_bias };

/// Fully connected layer: weight [out, in], bias [out].
template <typename T>
struct LinearLayer {
  BasicParameter<T> weight, bias;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in, int out, Rng& rng, Init init = Init::standard) {
    BasicTensor<T> w(Shape{out, in}), b(Shape{out});
    if (init == Init::standard) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      w = uniform_tensor<T>({out, in}, bound, rng);
    } else if (init == Init::zero_weight_unit_bias) {
      b.fill(T(1));
    }
    weight = BasicParameter<T>(name + ".weight", std::move(w));
    bias = BasicParameter<T>(name + ".bias", std::move(b));
  }

  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& x) {
    return linear(x, bind(tape, weight), bind(tape, bias));
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Two linear layers with a leaky ReLU between them.
template <typename T>
struct Mlp2 {
  LinearLayer<T> fc1, fc2;

  Mlp2() = default;
  Mlp2(const std::string& name, int in, int hidden, int out, Rng& rng, Init final_init)
      : fc1(name + ".fc1", in, hidden, rng), fc2(name + ".fc2", hidden, out, rng, final_init) {}

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& x) {
    return fc2(tape, leaky_relu(fc1(tape, x)));
  }

  void collect(ParamList<T>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

/// Plain convolution with square odd kernel and shape-preserving padding.
template <typename T>
struct ConvLayer {
  BasicParameter<T> weight, bias;
  int stride = 1;

  ConvLayer() = default;
  ConvLayer(const std::string& name, int in, int out, int kernel, int stride_, Rng& rng)
      : stride(stride_) {
    const double fan_in = static_cast<double>(in * kernel * kernel);
    const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
    weight = BasicParameter<T>(name + ".weight", uniform_tensor<T>({out, in, kernel, kernel}, bound, rng));
    bias = BasicParameter<T>(name + ".bias", BasicTensor<T>(Shape{out}));
  }

  int in_channels() const { return weight.value.dim(1); }
  int out_channels() const { return weight.value.dim(0); }
  int kernel() const { return weight.value.dim(2); }
  int padding() const { return (kernel() - 1) / 2; }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& x) {
    return conv2d(x, bind(tape, weight), std::optional<BasicVar<T>>(bind(tape, bias)), stride,
                  padding());
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Copy parameter values between two models of identical structure,
/// converting scalar type as needed.
template <typename Src, typename Dst>
void copy_parameters(Src& src, Dst& dst) {
  auto from = src.parameters();
  auto to = dst.parameters();
  if (from.size() != to.size()) throw Error("copy_parameters: structure mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->value.shape() != to[i]->value.shape() || from[i]->name != to[i]->name)
      throw Error("copy_parameters: mismatch at '" + from[i]->name + "'");
    using U = typename std::remove_reference_t<decltype(to[i]->value)>::value_type;
    to[i]->value = from[i]->value.template cast<U>();
    to[i]->zero_grad();
    to[i]->trainable = from[i]->trainable;
  }
}

template <typename Model>
void write_parameters(Model& model, Checkpoint& ckpt) {
  for (auto* p : model.parameters()) ckpt.put(p->name, p->value.template cast<float>());
}

template <typename Model>
void read_parameters(Model& model, const Checkpoint& ckpt) {
  for (auto* p : model.parameters()) {
    const Tensor& t = ckpt.get(p->name);
    if (t.shape() != p->value.shape())
      throw FormatError("tensor '" + p->name + "' has shape " + to_string(t.shape()) +
                        ", model expects " + to_string(p->value.shape()));
    using U = typename std::remove_reference_t<decltype(p->value)>::value_type;
    p->value = t.template cast<U>();
    p->zero_grad();
  }
}

template <typename T>
void set_trainable(const ParamList<T>& params, bool trainable) {
  for (auto* p : params) p->trainable = trainable;
}

}  // namespace teawib
