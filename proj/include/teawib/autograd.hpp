#pragma once

// Define-by-run reverse-mode differentiation.
//
// A BasicTape records every primitive applied to its variables in creation
// order, which is a topological order of the computation graph. backward()
// walks it in reverse, accumulating gradients additively across fan-out, then
// deposits leaf gradients into their Parameters and frees the recording.

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "teawib/kernels.hpp"
#include "teawib/tensor.hpp"

namespace teawib {

template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }

  template <typename U>
  BasicParameter<U> cast() const {
    BasicParameter<U> p(name, value.template cast<U>(), trainable);
    return p;
  }
};

template <typename T>
class BasicTape;

/// Handle to a value recorded on a tape.
template <typename T>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<T>* tape, int id) : tape_(tape), id_(id) {}

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  BasicTape<T>& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  BasicTape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class BasicTape {
 public:
  using Var = BasicVar<T>;
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicTape&, const TensorT&)>;

  explicit BasicTape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(TensorT value) {
    Node& n = push();
    n.owned = std::move(value);
    return Var(this, last_id());
  }

  /// Non-owning constant; `value` must outlive the tape.
  Var constant_ref(const TensorT& value) {
    Node& n = push();
    n.ref = &value;
    return Var(this, last_id());
  }

  /// Leaf bound to a parameter. On backward its gradient is added to p.grad,
  /// whether or not the parameter is trainable; optimizers skip frozen ones.
  Var param(BasicParameter<T>& p) {
    Node& n = push();
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    return Var(this, last_id());
  }

  /// Parameter used as a plain constant (no gradient is ever formed for it).
  Var frozen(const BasicParameter<T>& p) { return constant_ref(p.value); }

  /// Record an op result. `backward` is dropped when no input needs a gradient.
  Var record(TensorT value, bool requires_grad, BackwardFn backward) {
    Node& n = push();
    n.owned = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(backward);
    return Var(this, last_id());
  }

  const TensorT& value(int id) const { return node(id).value(); }
  bool requires_grad(int id) const { return node(id).requires_grad; }

  /// Gradient accumulator for node `id`, allocated as zeros on first use.
  TensorT& grad(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = TensorT(n.value().shape());
    return n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(const Var& loss) {
    if (consumed_) throw Error("backward called twice without a new forward pass");
    if (loss.value().size() != 1)
      throw ShapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
    if (!requires_grad(loss.id())) {
      release();
      return;
    }
    grad(loss.id()).fill(T(1));
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
    release();
  }

  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    TensorT owned;
    const TensorT* ref = nullptr;
    TensorT grad;
    bool requires_grad = false;
    BasicParameter<T>* param = nullptr;
    BackwardFn backward;

    const TensorT& value() const { return ref ? *ref : owned; }
  };

  Node& push() {
    if (consumed_) throw Error("tape already consumed by backward; start a new forward pass");
    nodes_.emplace_back();
    return nodes_.back();
  }

  int last_id() const { return static_cast<int>(nodes_.size()) - 1; }

  Node& node(int id) {
    if (consumed_) throw Error("tape values were released by backward");
    return nodes_.at(static_cast<std::size_t>(id));
  }
  const Node& node(int id) const {
    if (consumed_) throw Error("tape values were released by backward");
    return nodes_.at(static_cast<std::size_t>(id));
  }

  void release() {
    nodes_.clear();
    consumed_ = true;
  }

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
};

template <typename T>
const BasicTensor<T>& BasicVar<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool BasicVar<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

using Parameter = BasicParameter<float>;
using Tape = BasicTape<float>;
using Var = BasicVar<float>;

// ---------------------------------------------------------------------------
// Differentiable primitives
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
BasicTape<T>& same_tape(const BasicVar<T>& a, const BasicVar<T>& b) {
  if (&a.tape() != &b.tape()) throw Error("variables belong to different tapes");
  return a.tape();
}

template <typename T>
void accumulate(BasicTape<T>& tape, int id, const BasicTensor<T>& g) {
  if (tape.requires_grad(id)) tape.grad(id) += g;
}

}  // namespace detail

template <typename T>
BasicVar<T> conv2d(const BasicVar<T>& x, const BasicVar<T>& kernel,
                   const std::optional<BasicVar<T>>& bias, int stride, int padding) {
  auto& tape = detail::same_tape(x, kernel);
  if (bias) detail::same_tape(x, *bias);
  const bool need = x.requires_grad() || kernel.requires_grad() || (bias && bias->requires_grad());
  auto geometry = kernels::conv_geometry(x.value(), kernel.value(), stride, padding);
  auto cols = std::make_shared<std::vector<T>>();
  auto out = kernels::conv2d(x.value(), kernel.value(), bias ? &bias->value() : nullptr, stride,
                             padding, need && tape.grad_enabled() ? cols.get() : nullptr);
  const int xi = x.id(), ki = kernel.id(), bi = bias ? bias->id() : -1;
  return tape.record(std::move(out), need,
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       kernels::conv2d_backward(
                           geometry, *cols, t.value(ki), g,
                           t.requires_grad(xi) ? &t.grad(xi) : nullptr,
                           t.requires_grad(ki) ? &t.grad(ki) : nullptr,
                           bi >= 0 && t.requires_grad(bi) ? &t.grad(bi) : nullptr);
                     });
}

template <typename T>
BasicVar<T> linear(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias) {
  auto& tape = detail::same_tape(x, weight);
  detail::same_tape(x, bias);
  auto out = kernels::linear(x.value(), weight.value(), &bias.value());
  const bool need = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  const int xi = x.id(), wi = weight.id(), bi = bias.id();
  return tape.record(std::move(out), need, [=](BasicTape<T>& t, const BasicTensor<T>& g) {
    const auto& in = t.value(xi);
    const auto& w = t.value(wi);
    const int m = w.dim(0), n = w.dim(1);
    if (t.requires_grad(wi)) {
      auto& gw = t.grad(wi);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gw[static_cast<std::size_t>(i) * n + j] += g[i] * in[j];
    }
    if (t.requires_grad(bi)) t.grad(bi) += g;
    if (t.requires_grad(xi)) {
      auto& gx = t.grad(xi);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gx[j] += g[i] * w[static_cast<std::size_t>(i) * n + j];
    }
  });
}

enum class Activation { relu, leaky_relu, sigmoid, tanh };

inline constexpr double kLeakySlope = 0.2;

template <typename T>
BasicVar<T> activation(Activation kind, const BasicVar<T>& x) {
  auto& tape = x.tape();
  const auto& in = x.value();
  BasicTensor<T> out(in.shape());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < in.size(); ++i) {
    T v = in[i];
    switch (kind) {
      case Activation::relu: out[i] = v > T(0) ? v : T(0); break;
      case Activation::leaky_relu: out[i] = v > T(0) ? v : slope * v; break;
      case Activation::sigmoid:
        // Kept strictly inside (0,1) even where the exact value rounds to 0 or 1.
        out[i] = std::clamp(T(1) / (T(1) + std::exp(-v)), std::numeric_limits<T>::min(),
                            std::nextafter(T(1), T(0)));
        break;
      case Activation::tanh: out[i] = std::tanh(v); break;
    }
  }
  const int xi = x.id();
  const int oi = static_cast<int>(tape.size());  // id the output will receive
  return tape.record(std::move(out), x.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       const auto& in = t.value(xi);
                       const auto& y = t.value(oi);
                       auto& gx = t.grad(xi);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         T d = T(0);
                         switch (kind) {
                           case Activation::relu: d = in[i] > T(0) ? T(1) : T(0); break;
                           case Activation::leaky_relu: d = in[i] > T(0) ? T(1) : slope; break;
                           case Activation::sigmoid: d = y[i] * (T(1) - y[i]); break;
                           case Activation::tanh: d = T(1) - y[i] * y[i]; break;
                         }
                         gx[i] += g[i] * d;
                       }
                     });
}

template <typename T>
BasicVar<T> relu(const BasicVar<T>& x) { return activation(Activation::relu, x); }
template <typename T>
BasicVar<T> leaky_relu(const BasicVar<T>& x) { return activation(Activation::leaky_relu, x); }
template <typename T>
BasicVar<T> sigmoid(const BasicVar<T>& x) { return activation(Activation::sigmoid, x); }
template <typename T>
BasicVar<T> tanh(const BasicVar<T>& x) { return activation(Activation::tanh, x); }

template <typename T>
BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b) {
  auto& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "add");
  BasicTensor<T> out = a.value();
  out += b.value();
  const int ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       detail::accumulate(t, ai, g);
                       detail::accumulate(t, bi, g);
                     });
}

template <typename T>
BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b) {
  auto& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "sub");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const int ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       detail::accumulate(t, ai, g);
                       if (t.requires_grad(bi)) {
                         auto& gb = t.grad(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

template <typename T>
BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b) {
  auto& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "mul");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const int ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(ai)) {
                         const auto& bv = t.value(bi);
                         auto& ga = t.grad(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                       }
                       if (t.requires_grad(bi)) {
                         const auto& av = t.value(ai);
                         auto& gb = t.grad(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       }
                     });
}

/// a * c + d for constants c, d.
template <typename T>
BasicVar<T> affine(const BasicVar<T>& a, T c, T d = T(0)) {
  auto& tape = a.tape();
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v = v * c + d;
  const int ai = a.id();
  return tape.record(std::move(out), a.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       auto& ga = t.grad(ai);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                     });
}

/// x * s where s is a one-element variable.
template <typename T>
BasicVar<T> scale_by(const BasicVar<T>& x, const BasicVar<T>& s) {
  auto& tape = detail::same_tape(x, s);
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must have one element");
  const T sv = s.value()[0];
  BasicTensor<T> out = x.value();
  out *= sv;
  const int xi = x.id(), si = s.id();
  return tape.record(std::move(out), x.requires_grad() || s.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(xi)) {
                         auto& gx = t.grad(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
                       }
                       if (t.requires_grad(si)) {
                         const auto& xv = t.value(xi);
                         T acc = 0;
                         for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
                         t.grad(si)[0] += acc;
                       }
                     });
}

/// kernel[o,i,:,:] * factor[i]: one factor per input channel.
template <typename T>
BasicVar<T> scale_in_channels(const BasicVar<T>& kernel, const BasicVar<T>& factor) {
  auto& tape = detail::same_tape(kernel, factor);
  const auto& k = kernel.value();
  if (k.rank() != 4 || factor.value().rank() != 1 || factor.value().dim(0) != k.dim(1))
    throw ShapeError("scale_in_channels: kernel " + to_string(k.shape()) + " vs factor " +
                     to_string(factor.shape()));
  const int co = k.dim(0), ci = k.dim(1), area = k.dim(2) * k.dim(3);
  BasicTensor<T> out = k;
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < ci; ++i) {
      const T f = factor.value()[i];
      T* p = out.raw() + (static_cast<std::size_t>(o) * ci + i) * area;
      for (int a = 0; a < area; ++a) p[a] *= f;
    }
  const int ki = kernel.id(), fi = factor.id();
  return tape.record(std::move(out), kernel.requires_grad() || factor.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       const auto& kv = t.value(ki);
                       const auto& fv = t.value(fi);
                       const bool gk = t.requires_grad(ki), gf = t.requires_grad(fi);
                       for (int o = 0; o < co; ++o)
                         for (int i = 0; i < ci; ++i) {
                           const std::size_t base = (static_cast<std::size_t>(o) * ci + i) * area;
                           if (gk) {
                             auto& gkt = t.grad(ki);
                             for (int a = 0; a < area; ++a) gkt[base + a] += g[base + a] * fv[i];
                           }
                           if (gf) {
                             T acc = 0;
                             for (int a = 0; a < area; ++a) acc += g[base + a] * kv[base + a];
                             t.grad(fi)[i] += acc;
                           }
                         }
                     });
}

/// x[c,h,w] + v[c]: one value per channel broadcast over space.
template <typename T>
BasicVar<T> add_channel(const BasicVar<T>& x, const BasicVar<T>& v) {
  auto& tape = detail::same_tape(x, v);
  const auto& xv = x.value();
  if (xv.rank() != 3 || v.value().rank() != 1 || v.value().dim(0) != xv.dim(0))
    throw ShapeError("add_channel: feature map " + to_string(xv.shape()) + " vs " +
                     to_string(v.shape()));
  const int c = xv.dim(0), area = xv.dim(1) * xv.dim(2);
  BasicTensor<T> out = xv;
  for (int ch = 0; ch < c; ++ch) {
    T* p = out.raw() + static_cast<std::size_t>(ch) * area;
    for (int a = 0; a < area; ++a) p[a] += v.value()[ch];
  }
  const int xi = x.id(), vi = v.id();
  return tape.record(std::move(out), x.requires_grad() || v.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       detail::accumulate(t, xi, g);
                       if (t.requires_grad(vi)) {
                         auto& gv = t.grad(vi);
                         for (int ch = 0; ch < c; ++ch) {
                           T acc = 0;
                           const T* p = g.raw() + static_cast<std::size_t>(ch) * area;
                           for (int a = 0; a < area; ++a) acc += p[a];
                           gv[ch] += acc;
                         }
                       }
                     });
}

template <typename T>
BasicVar<T> upsample_nearest(const BasicVar<T>& x, int factor) {
  auto& tape = x.tape();
  auto out = kernels::upsample_nearest(x.value(), factor);
  const int xi = x.id();
  return tape.record(std::move(out), x.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       auto& gx = t.grad(xi);
                       const int c = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
                       for (int ch = 0; ch < c; ++ch)
                         for (int y = 0; y < h * factor; ++y)
                           for (int xx = 0; xx < w * factor; ++xx)
                             gx.at(ch, y / factor, xx / factor) += g.at(ch, y, xx);
                     });
}

/// [C,H,W] -> [C], mean over spatial positions.
template <typename T>
BasicVar<T> global_avg_pool(const BasicVar<T>& x) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("global_avg_pool: input must be [C,H,W]");
  const int c = xv.dim(0), area = xv.dim(1) * xv.dim(2);
  BasicTensor<T> out(Shape{c});
  for (int ch = 0; ch < c; ++ch) {
    T acc = 0;
    const T* p = xv.raw() + static_cast<std::size_t>(ch) * area;
    for (int a = 0; a < area; ++a) acc += p[a];
    out[ch] = acc / static_cast<T>(area);
  }
  const int xi = x.id();
  return tape.record(std::move(out), x.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       auto& gx = t.grad(xi);
                       for (int ch = 0; ch < c; ++ch) {
                         T* p = gx.raw() + static_cast<std::size_t>(ch) * area;
                         const T share = g[ch] / static_cast<T>(area);
                         for (int a = 0; a < area; ++a) p[a] += share;
                       }
                     });
}

template <typename T>
BasicVar<T> sum(const BasicVar<T>& x) {
  auto& tape = x.tape();
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const int xi = x.id();
  return tape.record(BasicTensor<T>::scalar(acc), x.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       auto& gx = t.grad(xi);
                       for (auto& v : gx.data()) v += g[0];
                     });
}

template <typename T>
BasicVar<T> mean(const BasicVar<T>& x) {
  return affine(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
BasicVar<T> sum_squares(const BasicVar<T>& x) {
  auto& tape = x.tape();
  T acc = 0;
  for (T v : x.value().data()) acc += v * v;
  const int xi = x.id();
  return tape.record(BasicTensor<T>::scalar(acc), x.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       const auto& xv = t.value(xi);
                       auto& gx = t.grad(xi);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += T(2) * xv[i] * g[0];
                     });
}

/// Mean squared difference between two equally shaped variables.
template <typename T>
BasicVar<T> mse(const BasicVar<T>& a, const BasicVar<T>& b) {
  auto& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "mse");
  const auto& av = a.value();
  const auto& bv = b.value();
  const T n = static_cast<T>(av.size());
  T acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    T d = av[i] - bv[i];
    acc += d * d;
  }
  const int ai = a.id(), bi = b.id();
  return tape.record(BasicTensor<T>::scalar(acc / n), a.requires_grad() || b.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       const auto& av = t.value(ai);
                       const auto& bv = t.value(bi);
                       const T s = T(2) * g[0] / n;
                       T* ga = t.requires_grad(ai) ? t.grad(ai).raw() : nullptr;
                       T* gb = t.requires_grad(bi) ? t.grad(bi).raw() : nullptr;
                       for (std::size_t i = 0; i < av.size(); ++i) {
                         T d = (av[i] - bv[i]) * s;
                         if (ga) ga[i] += d;
                         if (gb) gb[i] -= d;
                       }
                     });
}

inline constexpr double kLogitClamp = 15.0;

/// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets. Logits
/// are clamped to |z| <= 15 first; the clamp passes no gradient when active.
template <typename T>
BasicVar<T> bce_with_logits(const BasicVar<T>& logits, const BasicTensor<T>& targets) {
  auto& tape = logits.tape();
  const auto& z = logits.value();
  if (z.size() != targets.size())
    throw ShapeError("bce_with_logits: " + std::to_string(z.size()) + " logits vs " +
                     std::to_string(targets.size()) + " targets");
  const T lim = static_cast<T>(kLogitClamp);
  const T n = static_cast<T>(z.size());
  T acc = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    T zc = std::clamp(z[i], -lim, lim);
    // -[m log s(z) + (1-m) log(1-s(z))] = softplus(z) - m z, evaluated stably.
    T softplus = std::max(zc, T(0)) + std::log1p(std::exp(-std::abs(zc)));
    acc += softplus - targets[i] * zc;
  }
  const int zi = logits.id();
  return tape.record(BasicTensor<T>::scalar(acc / n), logits.requires_grad(),
                     [=](BasicTape<T>& t, const BasicTensor<T>& g) {
                       const auto& z = t.value(zi);
                       auto& gz = t.grad(zi);
                       for (std::size_t i = 0; i < z.size(); ++i) {
                         if (z[i] > lim || z[i] < -lim) continue;
                         T s = T(1) / (T(1) + std::exp(-z[i]));
                         gz[i] += g[0] * (s - targets[i]) / n;
                       }
                     });
}

template <typename T>
BasicVar<T> operator+(const BasicVar<T>& a, const BasicVar<T>& b) { return add(a, b); }
template <typename T>
BasicVar<T> operator-(const BasicVar<T>& a, const BasicVar<T>& b) { return sub(a, b); }
template <typename T>
BasicVar<T> operator*(const BasicVar<T>& a, const BasicVar<T>& b) { return mul(a, b); }

}  // namespace teawib
