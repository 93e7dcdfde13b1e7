#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "teawib/checkpoint.hpp"
#include "teawib/gradcheck.hpp"
#include "teawib/layers.hpp"
#include "teawib/optim.hpp"

namespace teawib {
namespace {

using DTensor = BasicTensor<double>;
using DTape = BasicTape<double>;
using DParam = BasicParameter<double>;
using DVar = BasicVar<double>;

const Tensor* const kNoBias = nullptr;
const DTensor* const kNoBiasD = nullptr;

template <typename T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.gaussian() * scale);
  return t;
}

// Direct six-fold loop, zero padding.
DTensor conv_loop(const DTensor& x, const DTensor& w, const DTensor* b, int stride, int pad) {
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int o = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  DTensor out(Shape{o, oh, ow});
  for (int oc = 0; oc < o; ++oc)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        double acc = b ? (*b)[oc] : 0.0;
        for (int ic = 0; ic < c; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
              acc += w[((static_cast<std::size_t>(oc) * c + ic) * k + ky) * k + kx] * x.at(ic, iy, ix);
            }
        out.at(oc, y, xx) = acc;
      }
  return out;
}

TEST(Conv2d, IdentityKernelReturnsInput) {
  Rng rng(1);
  auto x = random_tensor<float>({1, 5, 5}, rng);
  Tensor k(Shape{1, 1, 3, 3});
  k[4] = 1.0f;
  auto y = kernels::conv2d(x, k, kNoBias, 1, 1);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, OnesKernelOnOnesInput) {
  Tensor x = Tensor::ones({1, 3, 3});
  Tensor k = Tensor::ones({1, 1, 3, 3});
  auto y = kernels::conv2d(x, k, kNoBias, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 9.0f);
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(2);
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      auto x = random_tensor<double>({3, 7, 6}, rng);
      auto w = random_tensor<double>({4, 3, 3, 3}, rng);
      auto b = random_tensor<double>({4}, rng);
      auto fast = kernels::conv2d(x, w, &b, stride, pad);
      auto slow = conv_loop(x, w, &b, stride, pad);
      ASSERT_EQ(fast.shape(), slow.shape());
      EXPECT_LT(fast.max_abs_diff(slow), 1e-12) << "stride " << stride << " pad " << pad;
    }
}

TEST(Conv2d, LinearInKernel) {
  Rng rng(3);
  auto x = random_tensor<double>({2, 6, 6}, rng);
  auto k1 = random_tensor<double>({3, 2, 3, 3}, rng);
  auto k2 = random_tensor<double>({3, 2, 3, 3}, rng);
  const double a = 0.7, b = -1.3;
  DTensor mix(k1.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * k1[i] + b * k2[i];
  auto lhs = kernels::conv2d(x, mix, kNoBiasD, 1, 1);
  auto y1 = kernels::conv2d(x, k1, kNoBiasD, 1, 1);
  auto y2 = kernels::conv2d(x, k2, kNoBiasD, 1, 1);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * y1[i] + b * y2[i], 1e-12);
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  Tensor x(Shape{3, 4, 4});
  Tensor k(Shape{2, 2, 3, 3});
  try {
    kernels::conv2d(x, k, kNoBias, 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3,4,4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,2,3,3]"), std::string::npos) << msg;
  }
}

TEST(Linear, IdentityAndZeroWeight) {
  Tensor x(Shape{3}, std::vector<float>{1, -2, 3});
  Tensor eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye[static_cast<std::size_t>(i * 4)] = 1;
  Tensor zero_b(Shape{3});
  EXPECT_EQ(kernels::linear(x, eye, &zero_b), x);
  Tensor zero_w(Shape{2, 3});
  Tensor b(Shape{2}, std::vector<float>{0.5f, -4});
  EXPECT_EQ(kernels::linear(x, zero_w, &b), b);
}

TEST(Linear, MismatchThrows) {
  Tensor x(Shape{4});
  Tensor w(Shape{2, 3});
  EXPECT_THROW(kernels::linear(x, w, kNoBias), ShapeError);
}

TEST(Activations, KnownValues) {
  Tape tape;
  auto x = tape.constant(Tensor(Shape{3}, std::vector<float>{-1, 0, 2}));
  auto r = relu(x).value();
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(r[2], 2.0f);
  EXPECT_EQ(sigmoid(x).value()[1], 0.5f);
  EXPECT_FLOAT_EQ(tanh(x).value()[2], std::tanh(2.0f));
}

TEST(Activations, SigmoidStaysInsideOpenInterval) {
  Tape tape;
  auto x = tape.constant(Tensor(Shape{6}, std::vector<float>{-1000, -90, -30, 30, 90, 1000}));
  for (float v : sigmoid(x).value().data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(4);
  Parameter p("x", random_tensor<float>({5}, rng));
  Tape tape;
  tape.backward(sum_squares(tape.param(p)));
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_FLOAT_EQ(p.grad[i], 2 * p.value[i]);
}

TEST(Backward, TanhMatchesFiniteDifference) {
  Rng rng(5);
  DParam p("x", random_tensor<double>({6}, rng));
  auto report = grad_check<double>([&](DTape& t) { return sum(tanh(t.param(p))); }, {&p}, 1,
                                   {1e-5, 6, 0.0});
  EXPECT_LT(report.max_rel_error, 1e-7);
}

TEST(Backward, ConvReluLinearCompositeMatchesFiniteDifference) {
  Rng rng(6);
  DParam x("x", random_tensor<double>({2, 6, 6}, rng));
  DParam k("k", random_tensor<double>({3, 2, 3, 3}, rng, 0.5));
  DParam kb("kb", random_tensor<double>({3}, rng, 0.1));
  DParam w("w", random_tensor<double>({4, 27}, rng, 0.3));
  DParam wb("wb", random_tensor<double>({4}, rng, 0.1));
  auto loss = [&](DTape& t) {
    auto h = relu(conv2d(t.param(x), t.param(k), std::optional<DVar>(t.param(kb)), 2, 1));
    auto flat = t.record(h.value().reshaped({27}), h.requires_grad(),
                         [hi = h.id()](DTape& tt, const DTensor& g) { tt.grad(hi) += g.reshaped({3, 3, 3}); });
    return sum_squares(linear(flat, t.param(w), t.param(wb)));
  };
  auto report = grad_check<double>(loss, {&x, &k, &kb, &w, &wb}, 7, {1e-3, 12, 1e-2});
  EXPECT_GT(report.checked, 30);
  EXPECT_LT(report.max_rel_error, 1e-3) << report.worst_parameter << "[" << report.worst_index << "]";
}

TEST(Backward, FanOutAccumulates) {
  Parameter p("x", Tensor(Shape{1}, std::vector<float>{3}));
  Tape tape;
  auto v = tape.param(p);
  tape.backward(sum(mul(v, v) + v));  // d/dx (x^2 + x) = 2x + 1
  EXPECT_FLOAT_EQ(p.grad[0], 7.0f);
}

TEST(Backward, DisconnectedParameterGetsZeroGradient) {
  Parameter used("a", Tensor::ones({2}));
  Parameter unused("b", Tensor::ones({2}));
  Tape tape;
  tape.param(unused);
  tape.backward(sum(tape.param(used)));
  EXPECT_EQ(unused.grad, Tensor::zeros({2}));
  EXPECT_EQ(used.grad, Tensor::ones({2}));
}

TEST(Backward, FrozenBindingFormsNoGradient) {
  Parameter p("a", Tensor::ones({2}), false);
  Tape tape;
  auto v = bind(tape, p);
  EXPECT_FALSE(v.requires_grad());
  tape.backward(sum(v));
  EXPECT_EQ(p.grad, Tensor::zeros({2}));
}

TEST(Backward, TwiceWithoutForwardThrows) {
  Parameter p("a", Tensor::ones({2}));
  Tape tape;
  auto l = sum(tape.param(p));
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), Error);
}

TEST(Backward, NonScalarLossThrows) {
  Parameter p("a", Tensor::ones({2}));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.param(p)), ShapeError);
}

TEST(Backward, NoGradTapeRecordsNothingDifferentiable) {
  Parameter p("a", Tensor::ones({2}));
  Tape tape(false);
  auto l = sum(tape.param(p));
  EXPECT_FALSE(l.requires_grad());
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  DParam p("a", DTensor::ones({3}));
  auto report = grad_check<double>([&](DTape& t) {
    t.param(p);
    return t.constant(DTensor::scalar(2.5));
  }, {&p}, 1);
  EXPECT_EQ(report.max_rel_error, 0.0);
  for (double g : p.grad.data()) EXPECT_EQ(g, 0.0);
}

// Reference AdamW in double precision.
struct AdamOracle {
  double m = 0, v = 0;
  long t = 0;
  double step(double w, double g, const AdamWOptions& o) {
    ++t;
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(o.beta2, static_cast<double>(t)));
    return w * (1 - o.lr * o.weight_decay) - o.lr * mh / (std::sqrt(vh) + o.eps);
  }
};

TEST(AdamW, ZeroGradientZeroDecayLeavesWeights) {
  Rng rng(8);
  Parameter p("w", random_tensor<float>({4}, rng));
  const Tensor before = p.value;
  AdamW opt({&p}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 10; ++i) opt.step();
  EXPECT_EQ(p.value, before);
}

TEST(AdamW, ConvergesOnQuadratic) {
  BasicParameter<double> p("w", DTensor::zeros({1}));
  BasicAdamW<double> opt({&p}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    p.grad[0] = 2 * (p.value[0] - 3);
    opt.step();
  }
  EXPECT_LT(std::abs(p.value[0] - 3), 0.1);
}

TEST(AdamW, MatchesReferenceAcrossSteps) {
  const AdamWOptions o{1e-2, 0.9, 0.999, 1e-8, 0.01};
  BasicParameter<double> p("w", DTensor(Shape{1}, std::vector<double>{0.8}));
  BasicAdamW<double> opt({&p}, o);
  AdamOracle ref;
  double w = 0.8;
  for (int i = 0; i < 20; ++i) {
    const double g = std::sin(0.3 * i) + 0.5;
    opt.zero_grad();
    p.grad[0] = g;
    opt.step();
    w = ref.step(w, g, o);
    ASSERT_NEAR(p.value[0], w, 1e-12) << "step " << i;
  }
}

TEST(AdamW, FrozenParameterUntouched) {
  Parameter frozen("f", Tensor::ones({3}), false);
  frozen.grad.fill(5.0f);
  AdamW opt({&frozen}, {});
  opt.step();
  EXPECT_EQ(frozen.value, Tensor::ones({3}));
}

TEST(AdamW, NonPositiveLearningRateThrows) {
  Parameter p("w", Tensor::ones({1}));
  EXPECT_THROW(AdamW({&p}, {0.0}), Error);
  EXPECT_THROW(AdamW({&p}, {-1e-3}), Error);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, GaussianMoments) {
  Rng rng(9);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Rng, BelowIsInRange) {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
}

TEST(Determinism, IdenticalSeedsGiveBitIdenticalForward) {
  auto run = [] {
    Rng rng(11);
    ConvLayer<float> conv("c", 3, 4, 3, 1, rng);
    auto x = random_tensor<float>({3, 8, 8}, rng);
    Tape tape(false);
    return conv(tape, tape.constant(x)).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsByteExact) {
  Rng rng(12);
  Checkpoint c;
  c.meta = {{"kind", "test"}, {"d_w", 16}};
  c.put("a.weight", random_tensor<float>({2, 3}, rng));
  c.put("b", random_tensor<float>({4, 1, 3, 3}, rng));
  const auto bytes = serialize(c);
  const auto back = deserialize(bytes);
  EXPECT_EQ(back.names(), c.names());
  EXPECT_EQ(back.get("a.weight"), c.get("a.weight"));
  EXPECT_EQ(back.meta, c.meta);
  EXPECT_EQ(serialize(back), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  Checkpoint c;
  c.put("x", Tensor(Shape{2}, std::vector<float>{1.5f, -2}));
  const auto path = std::filesystem::temp_directory_path() / "teawib_ckpt_roundtrip.twb";
  save_checkpoint(path, c);
  EXPECT_EQ(load_checkpoint(path).get("x"), c.get("x"));
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicAndTruncationRejected) {
  Checkpoint c;
  c.put("x", Tensor::ones({8}));
  auto bytes = serialize(c);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 4);
  EXPECT_THROW(deserialize(cut), FormatError);
}

TEST(Checkpoint, MissingTensorNamed) {
  Checkpoint c;
  try {
    c.get("decoder.conv0.W");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.conv0.W"), std::string::npos);
  }
}

}  // namespace
}  // namespace teawib
