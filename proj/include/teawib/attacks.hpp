#pragma once

// Attacks on a distributed watermark and the robustness sweep.
//   purification: fine-tune the baked decoder toward the original decoder's outputs
//   adversarial:  gradient descent on pixels toward a chosen message (extractor leaked)
//   autoencoder:  round-trip through a compressive autoencoder
//   collusion:    average two users' baked decoders

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "teawib/image_io.hpp"
#include "teawib/metrics.hpp"
#include "teawib/optim.hpp"
#include "teawib/stats.hpp"
#include "teawib/training.hpp"
#include "teawib/transforms.hpp"

namespace teawib {

// ---------------------------------------------------------------------------
// Robustness sweep
// ---------------------------------------------------------------------------

/// A generated image and the message its decoder carries.
struct MarkedImage {
  Tensor image;
  WatermarkMessage message;
};

struct SweepRow {
  std::string name;  // "none" or kind:magnitude
  double bit_accuracy = 0;
};

/// Mean bit accuracy on the untouched images, then under each transform.
/// Image i is transformed with seed spec.seed + i.
inline std::vector<SweepRow> robustness_sweep(WatermarkExtractor& extractor, const std::vector<MarkedImage>& set,
                                              const std::vector<TransformSpec>& transforms) {
  if (set.empty()) throw Error("robustness_sweep: empty image set");
  auto run = [&](const TransformSpec* spec) {
    double acc = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      Tensor img = set[i].image;
      if (spec) {
        TransformSpec s = *spec;
        s.seed += i;
        img = apply_transform(img, s);
      }
      acc += bit_accuracy(extract_message(extractor, img), set[i].message);
    }
    return acc / static_cast<double>(set.size());
  };
  std::vector<SweepRow> rows{{"none", run(nullptr)}};
  for (const auto& t : transforms) rows.push_back({to_string(t), run(&t)});
  return rows;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(10);
  out << "transform,bit_acc\n";
  for (const auto& r : rows) out << r.name << ',' << r.bit_accuracy << '\n';
}

// ---------------------------------------------------------------------------
// Purification
// ---------------------------------------------------------------------------

struct PurificationOptions {
  int steps = 500;
  int batch_size = 8;
  double lr = 1e-4;
  int eval_every = 10;
  int eval_images = 32;
  std::uint64_t seed = 0;
};

struct TrajectoryPoint {
  int step = 0;
  double psnr = 0;     // attacked output vs. the untouched watermarked output
  double bit_acc = 0;  // against the user's message
};

/// The attacker holds the baked decoder and the original decoder (not the
/// extractor); the extractor here only scores the trajectory.
inline std::vector<TrajectoryPoint> purification_attack(const BakedDecoder& baked, ToyDecoder& original,
                                                        WatermarkExtractor& extractor,
                                                        const WatermarkMessage& message,
                                                        const std::vector<Tensor>& attack_latents,
                                                        const std::vector<Tensor>& eval_latents,
                                                        const PurificationOptions& opt) {
  if (attack_latents.empty() || eval_latents.empty()) throw Error("purification: empty latent sets");
  BakedDecoder attacked = baked;
  BakedDecoder reference = baked;
  Rng root(opt.seed);
  Rng batches = root.fork(1), noise = root.fork(2);

  const std::size_t n_eval = std::min<std::size_t>(eval_latents.size(), static_cast<std::size_t>(opt.eval_images));
  // Every evaluation replays the same noise draws, so step 0 compares the decoder with itself.
  const Rng eval_stream = root.fork(3);
  std::vector<Tensor> watermarked;
  {
    Rng eval_noise = eval_stream;
    for (std::size_t i = 0; i < n_eval; ++i) watermarked.push_back(decode_baked(reference, eval_latents[i], &eval_noise));
  }
  auto evaluate = [&](int step) {
    Rng eval_noise = eval_stream;
    TrajectoryPoint p;
    p.step = step;
    for (std::size_t i = 0; i < n_eval; ++i) {
      auto img = decode_baked(attacked, eval_latents[i], &eval_noise);
      p.psnr += psnr(img, watermarked[i]);
      p.bit_acc += bit_accuracy(extract_message(extractor, img), message);
    }
    p.psnr /= static_cast<double>(n_eval);
    p.bit_acc /= static_cast<double>(n_eval);
    return p;
  };

  std::vector<TrajectoryPoint> out{evaluate(0)};
  AdamWOptions ao;
  ao.lr = opt.lr;
  ao.weight_decay = 0;
  AdamW adam(attacked.parameters(), ao);
  const float inv = 1.0f / static_cast<float>(opt.batch_size);
  for (int step = 1; step <= opt.steps; ++step) {
    adam.zero_grad();
    for (int b = 0; b < opt.batch_size; ++b) {
      const auto& z = attack_latents[batches.below(attack_latents.size())];
      const Tensor target = decode_plain(original, z);
      Tape tape;
      auto loss = mse(attacked(tape, tape.constant_ref(z), &noise), tape.constant_ref(target));
      if (!std::isfinite(loss.value().item()))
        throw DivergenceError("purification diverged at step " + std::to_string(step), step);
      tape.backward(affine(loss, inv));
    }
    adam.step();
    if (step % opt.eval_every == 0 || step == opt.steps) out.push_back(evaluate(step));
  }
  return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryPoint>& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(10);
  out << "step,psnr,bit_acc\n";
  for (const auto& p : t) out << p.step << ',' << p.psnr << ',' << p.bit_acc << '\n';
}

// ---------------------------------------------------------------------------
// Adversarial message substitution
// ---------------------------------------------------------------------------

struct AdversarialOptions {
  int steps = 200;
  double lr = 2e-3;
  bool stop_on_success = true;  // stop once every target bit is decoded
};

struct AdversarialResult {
  Tensor image;
  int steps_run = 0;
  double acc_original = 0;
  double acc_target = 0;
  double psnr = kPsnrCap;  // attacked vs. input
};

/// Adam on the pixels minimizing ||sigmoid(logits) - target||^2, clamped to [-1,1].
inline AdversarialResult adversarial_message_attack(WatermarkExtractor& extractor, const Tensor& image,
                                                    const WatermarkMessage& original,
                                                    const WatermarkMessage& target,
                                                    const AdversarialOptions& opt) {
  if (target.length() != extractor.message_bits())
    throw ShapeError("adversarial attack: target length differs from extractor output");
  WatermarkExtractor frozen = extractor;
  set_trainable(frozen.parameters(), false);
  Parameter pixels("pixels", image);
  AdamWOptions ao;
  ao.lr = opt.lr;
  ao.weight_decay = 0;
  AdamW adam({&pixels}, ao);
  const Tensor goal = target.as_targets();
  AdversarialResult r;
  for (int step = 0; step < opt.steps; ++step) {
    if (opt.stop_on_success && extract_message(frozen, pixels.value) == target) break;
    adam.zero_grad();
    Tape tape;
    auto probs = sigmoid(frozen(tape, tape.param(pixels)));
    tape.backward(sum_squares(sub(probs, tape.constant_ref(goal))));
    adam.step();
    for (auto& v : pixels.value.data()) v = std::clamp(v, -1.0f, 1.0f);
    r.steps_run = step + 1;
  }
  r.image = pixels.value;
  const auto decoded = extract_message(frozen, r.image);
  r.acc_original = bit_accuracy(decoded, original);
  r.acc_target = bit_accuracy(decoded, target);
  r.psnr = psnr(r.image, image);
  return r;
}

// ---------------------------------------------------------------------------
// Compressive autoencoder
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 4> kBottleneckWidths = {16, 8, 4, 2};

/// Image -> b x 8 x 8 -> image, trained on clean images only.
struct CompressiveAutoencoder {
  std::array<ConvLayer<float>, 3> enc;
  std::array<ConvLayer<float>, 4> dec;

  CompressiveAutoencoder() = default;
  CompressiveAutoencoder(int bottleneck, Rng& rng) {
    const std::string p = "cae" + std::to_string(bottleneck);
    enc[0] = ConvLayer<float>(p + ".enc0", 3, 32, 3, 2, rng);
    enc[1] = ConvLayer<float>(p + ".enc1", 32, 32, 3, 2, rng);
    enc[2] = ConvLayer<float>(p + ".enc2", 32, bottleneck, 3, 1, rng);
    dec[0] = ConvLayer<float>(p + ".dec0", bottleneck, 32, 3, 1, rng);
    dec[1] = ConvLayer<float>(p + ".dec1", 32, 32, 3, 1, rng);
    dec[2] = ConvLayer<float>(p + ".dec2", 32, 32, 3, 1, rng);
    dec[3] = ConvLayer<float>(p + ".dec3", 32, 3, 3, 1, rng);
  }

  int bottleneck() const { return enc[2].out_channels(); }

  Var operator()(Tape& tape, const Var& image) {
    require_image(image.shape(), "compressive autoencoder");
    Var x = leaky_relu(enc[0](tape, image));
    x = leaky_relu(enc[1](tape, x));
    x = tanh(enc[2](tape, x));
    x = leaky_relu(dec[0](tape, x));
    x = upsample_nearest(x, 2);
    x = leaky_relu(dec[1](tape, x));
    x = upsample_nearest(x, 2);
    x = leaky_relu(dec[2](tape, x));
    return tanh(dec[3](tape, x));
  }

  Tensor reconstruct(const Tensor& image) {
    Tape tape(false);
    return (*this)(tape, tape.constant_ref(image)).value();
  }

  ParamList<float> parameters() {
    ParamList<float> out;
    for (auto& c : enc) c.collect(out);
    for (auto& c : dec) c.collect(out);
    return out;
  }
};

struct AutoencoderTraining {
  int steps = 800;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

inline CompressiveAutoencoder train_compressive_autoencoder(int bottleneck, const std::vector<Tensor>& images,
                                                            const AutoencoderTraining& opt) {
  if (images.empty()) throw Error("compressive autoencoder: no training images");
  Rng root(opt.seed + static_cast<std::uint64_t>(bottleneck));
  Rng init = root.fork(1), batches = root.fork(2);
  CompressiveAutoencoder ae(bottleneck, init);
  AdamWOptions ao;
  ao.lr = opt.lr;
  AdamW adam(ae.parameters(), ao);
  const float inv = 1.0f / static_cast<float>(opt.batch_size);
  for (int step = 1; step <= opt.steps; ++step) {
    adam.zero_grad();
    for (int b = 0; b < opt.batch_size; ++b) {
      const auto& img = images[batches.below(images.size())];
      Tape tape;
      auto x = tape.constant_ref(img);
      auto loss = mse(ae(tape, x), x);
      if (!std::isfinite(loss.value().item()))
        throw DivergenceError("compressive autoencoder diverged at step " + std::to_string(step), step);
      tape.backward(affine(loss, inv));
    }
    adam.step();
  }
  return ae;
}

/// Autoencoders for every supported bottleneck width.
class AutoencoderBank {
 public:
  AutoencoderBank() = default;
  AutoencoderBank(const std::vector<Tensor>& images, const AutoencoderTraining& opt) {
    for (int b : kBottleneckWidths) models_.emplace(b, train_compressive_autoencoder(b, images, opt));
  }

  CompressiveAutoencoder& at(int bottleneck) {
    auto it = models_.find(bottleneck);
    if (it == models_.end())
      throw Error("unknown bottleneck width " + std::to_string(bottleneck) + " (supported: 16, 8, 4, 2)");
    return it->second;
  }

  Checkpoint to_checkpoint() {
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "compressive_autoencoders"}};
    for (auto& [b, m] : models_) write_parameters(m, ckpt);
    return ckpt;
  }

  static AutoencoderBank from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.meta.value("kind", "") != "compressive_autoencoders")
      throw FormatError("checkpoint does not hold compressive autoencoders");
    AutoencoderBank bank;
    Rng rng(0);
    for (int b : kBottleneckWidths) {
      CompressiveAutoencoder m(b, rng);
      read_parameters(m, ckpt);
      bank.models_.emplace(b, std::move(m));
    }
    return bank;
  }

 private:
  std::map<int, CompressiveAutoencoder> models_;
};

struct AutoencoderAttackResult {
  Tensor image;
  double bit_accuracy = 0;
  double psnr = 0;  // reconstruction vs. the reference image given by the caller
};

inline AutoencoderAttackResult autoencoder_attack(AutoencoderBank& bank, int bottleneck, const Tensor& image,
                                                  const Tensor& reference, WatermarkExtractor& extractor,
                                                  const WatermarkMessage& message) {
  AutoencoderAttackResult r;
  r.image = bank.at(bottleneck).reconstruct(image);
  r.bit_accuracy = bit_accuracy(extract_message(extractor, r.image), message);
  r.psnr = psnr(r.image, reference);
  return r;
}

// ---------------------------------------------------------------------------
// Collusion
// ---------------------------------------------------------------------------

inline BakedModel collude_models(const BakedModel& a, const BakedModel& b) {
  BakedModel out = a;
  BakedModel other = b;
  auto pa = out.encoder.parameters();
  auto pb = other.encoder.parameters();
  for (auto* p : out.decoder.parameters()) pa.push_back(p);
  for (auto* p : other.decoder.parameters()) pb.push_back(p);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value.shape() != pb[i]->value.shape())
      throw ShapeError("collude: tensor '" + pa[i]->name + "' has shapes " + to_string(pa[i]->value.shape()) +
                       " and " + to_string(pb[i]->value.shape()));
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      pa[i]->value[j] = 0.5f * (pa[i]->value[j] + pb[i]->value[j]);
  }
  return out;
}

enum class BitCondition { both0, both1, first1, second1 };

inline const char* condition_name(BitCondition c) {
  switch (c) {
    case BitCondition::both0: return "00";
    case BitCondition::both1: return "11";
    case BitCondition::first1: return "10";
    case BitCondition::second1: return "01";
  }
  return "?";
}

struct CollusionReport {
  std::vector<BitCondition> condition;   // per position
  std::vector<double> extracted_mean;    // hard-bit mean per position
  std::vector<double> soft_mean;         // sigmoid(logit) mean per position
  std::vector<double> differing_deltas;  // m^j - m_2 for every image and differing position (hard bits)
  std::vector<double> differing_soft_deltas;
  int images = 0;

  double agreeing_frequency() const;      // how often agreeing positions decode to the shared bit
  double differing_mean_delta() const;    // pooled mean of m^j - m_2
  std::vector<long> histogram(int bins) const;  // soft deltas over [-0.5, 0.5]
};

inline double CollusionReport::agreeing_frequency() const {
  double acc = 0;
  int n = 0;
  for (std::size_t j = 0; j < condition.size(); ++j) {
    if (condition[j] == BitCondition::both0) acc += 1 - extracted_mean[j];
    else if (condition[j] == BitCondition::both1) acc += extracted_mean[j];
    else continue;
    ++n;
  }
  return n ? acc / n : 1.0;
}

inline double CollusionReport::differing_mean_delta() const {
  if (differing_deltas.empty()) return 0;
  double acc = 0;
  for (double d : differing_deltas) acc += d;
  return acc / static_cast<double>(differing_deltas.size());
}

inline std::vector<long> CollusionReport::histogram(int bins) const {
  std::vector<long> h(static_cast<std::size_t>(bins), 0);
  for (double d : differing_soft_deltas) {
    int b = static_cast<int>(std::floor((d + 0.5) * bins));
    h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  return h;
}

inline CollusionReport collusion_bit_stats(WatermarkExtractor& extractor, BakedModel& colluded,
                                           const WatermarkMessage& m0, const WatermarkMessage& m1,
                                           const std::vector<Tensor>& latents, int n_images, std::uint64_t seed) {
  if (m0.length() != m1.length()) throw ShapeError("collusion: message lengths differ");
  if (latents.empty() || n_images < 1) throw Error("collusion: need latents and n_images >= 1");
  const int k = m0.length();
  CollusionReport r;
  r.images = n_images;
  for (int j = 0; j < k; ++j) {
    const int a = m0.bits[static_cast<std::size_t>(j)], b = m1.bits[static_cast<std::size_t>(j)];
    r.condition.push_back(a == b ? (a ? BitCondition::both1 : BitCondition::both0)
                                 : (a ? BitCondition::first1 : BitCondition::second1));
  }
  r.extracted_mean.assign(static_cast<std::size_t>(k), 0);
  r.soft_mean.assign(static_cast<std::size_t>(k), 0);
  Rng noise(seed);
  for (int i = 0; i < n_images; ++i) {
    const auto& z = latents[static_cast<std::size_t>(i) % latents.size()];
    const Tensor image = quantize(decode_baked(colluded.decoder, z, &noise));
    const Tensor logits = extract_logits(extractor, image);
    for (int j = 0; j < k; ++j) {
      const double hard = logits[static_cast<std::size_t>(j)] > 0 ? 1.0 : 0.0;
      const double soft = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[static_cast<std::size_t>(j)])));
      r.extracted_mean[static_cast<std::size_t>(j)] += hard / n_images;
      r.soft_mean[static_cast<std::size_t>(j)] += soft / n_images;
      const auto c = r.condition[static_cast<std::size_t>(j)];
      if (c == BitCondition::first1 || c == BitCondition::second1) {
        r.differing_deltas.push_back(hard - 0.5);
        r.differing_soft_deltas.push_back(soft - 0.5);
      }
    }
  }
  return r;
}

inline nlohmann::json to_json(const CollusionReport& r) {
  nlohmann::json positions = nlohmann::json::array();
  for (std::size_t j = 0; j < r.condition.size(); ++j)
    positions.push_back({{"position", j},
                         {"condition", condition_name(r.condition[j])},
                         {"extracted_mean", r.extracted_mean[j]},
                         {"soft_mean", r.soft_mean[j]}});
  return {{"images", r.images},
          {"positions", positions},
          {"agreeing_frequency", r.agreeing_frequency()},
          {"differing_mean_delta", r.differing_mean_delta()},
          {"differing_soft_histogram", r.histogram(20)}};
}

}  // namespace teawib
