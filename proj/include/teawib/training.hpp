#pragma once

// Two training stages:
//   1. pretrain_autoencoder: encoder + plain decoder on image reconstruction.
//   2. train_wib: decoder weights frozen; mapping network, WIB heads and the
//      extractor are fitted with a fresh random message per batch item.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teawib/checkpoint.hpp"
#include "teawib/data.hpp"
#include "teawib/losses.hpp"
#include "teawib/metrics.hpp"
#include "teawib/optim.hpp"

namespace teawib {

struct AblationFlags {
  bool dwb_only = false;          // no noise, no aug, frozen extractor, no feature loss
  bool no_noise = false;
  bool no_aug = false;
  bool no_lpips_proxy = false;
  bool frozen_extractor = false;
  bool wib_inner_only = false;    // first and last convolutions stay plain

  bool augment() const { return !(dwb_only || no_aug); }
  bool noise() const { return !(dwb_only || no_noise); }
  bool joint_extractor() const { return !(dwb_only || frozen_extractor); }
  bool feature_loss() const { return !(dwb_only || no_lpips_proxy); }
  int active() const {
    return dwb_only + no_noise + no_aug + no_lpips_proxy + frozen_extractor + wib_inner_only;
  }
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainingConfig {
  double lr = 1e-4;
  double pretrain_lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double weight_decay = 0.01;
  int batch_size = 16;
  int pretrain_steps = 4000;
  int wib_steps = 3000;
  double lambda_w = 1.0, lambda_p = 0.2, lambda_l = 1.0;
  int d_w = 16;
  int d_r = 32;
  int latent_channels = 8;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  int corpus_size = 2000;
  std::string image_dir;  // optional PNG/PPM directory used instead of the procedural corpus
  int eval_pairs = 200;

  LossWeights loss_weights() const { return {lambda_w, lambda_p, lambda_l}; }

  AdamWOptions adamw(double rate) const {
    AdamWOptions o;
    o.lr = rate;
    o.beta1 = beta1;
    o.beta2 = beta2;
    o.weight_decay = weight_decay;
    return o;
  }

  void validate() const {
    if (!(lr > 0) || !(pretrain_lr > 0)) throw Error("config: learning rates must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw Error("config: betas must lie in [0,1)");
    if (weight_decay < 0) throw Error("config: weight_decay must be >= 0");
    if (batch_size < 1) throw Error("config: batch_size must be >= 1");
    if (pretrain_steps < 0 || wib_steps < 0) throw Error("config: step counts must be >= 0");
    if (lambda_w < 0 || lambda_p < 0 || lambda_l < 0) throw Error("config: loss weights must be >= 0");
    if (d_w < kMinMessageBits || d_w > 64) throw Error("config: d_w must lie in [8, 64]");
    if (d_r < 1 || latent_channels < 1) throw Error("config: d_r and latent_channels must be positive");
    if (ablation.active() > 1) throw Error("config: at most one ablation flag may be set");
    if (image_dir.empty() && corpus_size < 20) throw Error("config: corpus_size must be >= 20");
    if (eval_pairs < 1) throw Error("config: eval_pairs must be >= 1");
  }

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

inline nlohmann::json to_json(const AblationFlags& f) {
  return {{"dwb_only", f.dwb_only},           {"no_noise", f.no_noise},
          {"no_aug", f.no_aug},               {"no_lpips_proxy", f.no_lpips_proxy},
          {"frozen_extractor", f.frozen_extractor}, {"wib_inner_only", f.wib_inner_only}};
}

inline nlohmann::json to_json(const TrainingConfig& c) {
  return {{"lr", c.lr},
          {"pretrain_lr", c.pretrain_lr},
          {"betas", {c.beta1, c.beta2}},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"steps", {{"pretrain", c.pretrain_steps}, {"wib", c.wib_steps}}},
          {"lambda_w", c.lambda_w},
          {"lambda_p", c.lambda_p},
          {"lambda_l", c.lambda_l},
          {"d_w", c.d_w},
          {"d_r", c.d_r},
          {"latent_channels", c.latent_channels},
          {"seed", c.seed},
          {"ablation", to_json(c.ablation)},
          {"corpus_size", c.corpus_size},
          {"image_dir", c.image_dir},
          {"eval_pairs", c.eval_pairs}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

/// Overlay the keys present in `j` onto `base`. Unknown keys are rejected.
inline TrainingConfig config_from_json(const nlohmann::json& j, TrainingConfig c = {}) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  detail::reject_unknown(j,
                         {"lr", "pretrain_lr", "betas", "weight_decay", "batch_size", "steps", "lambda_w",
                          "lambda_p", "lambda_l", "d_w", "d_r", "latent_channels", "seed", "ablation",
                          "corpus_size", "image_dir", "eval_pairs"},
                         "config");
  try {
    c.lr = j.value("lr", c.lr);
    c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
    if (j.contains("betas")) {
      const auto& b = j.at("betas");
      if (!b.is_array() || b.size() != 2) throw Error("config: betas must be a two-element array");
      c.beta1 = b[0].get<double>();
      c.beta2 = b[1].get<double>();
    }
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("steps")) {
      const auto& s = j.at("steps");
      detail::reject_unknown(s, {"pretrain", "wib"}, "config.steps");
      c.pretrain_steps = s.value("pretrain", c.pretrain_steps);
      c.wib_steps = s.value("wib", c.wib_steps);
    }
    c.lambda_w = j.value("lambda_w", c.lambda_w);
    c.lambda_p = j.value("lambda_p", c.lambda_p);
    c.lambda_l = j.value("lambda_l", c.lambda_l);
    c.d_w = j.value("d_w", c.d_w);
    c.d_r = j.value("d_r", c.d_r);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      detail::reject_unknown(a,
                             {"dwb_only", "no_noise", "no_aug", "no_lpips_proxy", "frozen_extractor",
                              "wib_inner_only"},
                             "config.ablation");
      c.ablation.dwb_only = a.value("dwb_only", c.ablation.dwb_only);
      c.ablation.no_noise = a.value("no_noise", c.ablation.no_noise);
      c.ablation.no_aug = a.value("no_aug", c.ablation.no_aug);
      c.ablation.no_lpips_proxy = a.value("no_lpips_proxy", c.ablation.no_lpips_proxy);
      c.ablation.frozen_extractor = a.value("frozen_extractor", c.ablation.frozen_extractor);
      c.ablation.wib_inner_only = a.value("wib_inner_only", c.ablation.wib_inner_only);
    }
    c.corpus_size = j.value("corpus_size", c.corpus_size);
    c.image_dir = j.value("image_dir", c.image_dir);
    c.eval_pairs = j.value("eval_pairs", c.eval_pairs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

inline Split load_corpus(const TrainingConfig& c) {
  auto images = c.image_dir.empty() ? procedural_corpus(c.corpus_size, c.seed ^ 0xc0ffee)
                                    : load_image_dir(c.image_dir);
  if (images.size() < 20) throw Error("corpus has " + std::to_string(images.size()) + " images, need >= 20");
  return split_corpus(std::move(images));
}

struct LatentSet {
  std::vector<Tensor> train, held_out;
};

inline LatentSet encode_split(ToyEncoder& encoder, const Split& split) {
  LatentSet out;
  for (const auto& img : split.train) out.train.push_back(encode_image(encoder, img));
  for (const auto& img : split.held_out) out.held_out.push_back(encode_image(encoder, img));
  return out;
}

// ---------------------------------------------------------------------------
// Model bundles and checkpoints
// ---------------------------------------------------------------------------

/// Streams derived from the run seed.
enum Stream : std::uint64_t {
  kPretrainInit = 1,
  kPretrainBatches,
  kWibInit,
  kWibBatches,
  kWibMessages,
  kWibNoise,
  kEvaluation,
};

struct PretrainedModel {
  ToyEncoder encoder;
  ToyDecoder decoder;

  PretrainedModel() = default;
  PretrainedModel(int latent_channels, Rng& rng) : encoder(latent_channels, rng), decoder(latent_channels, rng) {}

  int latent_channels() const { return encoder.latent_channels(); }
};

inline Checkpoint to_checkpoint(PretrainedModel& m) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "pretrained"}, {"latent_channels", m.latent_channels()}};
  write_parameters(m.encoder, ckpt);
  write_parameters(m.decoder, ckpt);
  return ckpt;
}

inline PretrainedModel pretrained_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.baked || ckpt.meta.value("kind", "") != "pretrained")
    throw FormatError("checkpoint is not a pre-trained autoencoder");
  Rng rng(0);
  PretrainedModel m(ckpt.meta.at("latent_channels").get<int>(), rng);
  read_parameters(m.encoder, ckpt);
  read_parameters(m.decoder, ckpt);
  return m;
}

/// Generic (unbaked) watermarking model: frozen encoder, WIB decoder, extractor.
struct WatermarkModel {
  ToyEncoder encoder;
  WibDecoder decoder;
  WatermarkExtractor extractor;
  AblationFlags flags;

  WatermarkModel() = default;
  WatermarkModel(const PretrainedModel& pre, int d_w, int d_r, const AblationFlags& f, Rng& rng)
      : encoder(pre.encoder),
        decoder(pre.decoder, d_w, d_r, rng, f.wib_inner_only),
        extractor(d_w, rng),
        flags(f) {
    decoder.options.augment = f.augment();
    decoder.options.noise = f.noise();
    set_trainable(encoder.parameters(), false);
    set_trainable(extractor.parameters(), f.joint_extractor());
  }

  int message_bits() const { return decoder.message_bits(); }

  /// The pre-trained decoder, reassembled from the frozen weights.
  ToyDecoder pretrained_decoder() const {
    ToyDecoder d;
    for (int i = 0; i < kDecoderLayers; ++i) {
      d.convs[i] = decoder.layers[i].base;
      d.convs[i].weight.name = decoder_layer_name(i) + ".weight";
      d.convs[i].bias.name = decoder_layer_name(i) + ".bias";
    }
    return d;
  }
};

inline Checkpoint to_checkpoint(WatermarkModel& m) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "generic"},
               {"latent_channels", m.decoder.latent_channels()},
               {"d_w", m.decoder.message_bits()},
               {"d_r", m.decoder.fingerprint_dim()},
               {"ablation", to_json(m.flags)}};
  write_parameters(m.encoder, ckpt);
  write_parameters(m.decoder, ckpt);
  write_parameters(m.extractor, ckpt);
  return ckpt;
}

inline WatermarkModel generic_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.baked || ckpt.meta.value("kind", "") != "generic")
    throw FormatError("checkpoint is not a generic watermarking model");
  AblationFlags f;
  if (ckpt.meta.contains("ablation")) {
    const auto& a = ckpt.meta.at("ablation");
    f.dwb_only = a.value("dwb_only", false);
    f.no_noise = a.value("no_noise", false);
    f.no_aug = a.value("no_aug", false);
    f.no_lpips_proxy = a.value("no_lpips_proxy", false);
    f.frozen_extractor = a.value("frozen_extractor", false);
    f.wib_inner_only = a.value("wib_inner_only", false);
  }
  Rng rng(0);
  PretrainedModel shell(ckpt.meta.at("latent_channels").get<int>(), rng);
  WatermarkModel m(shell, ckpt.meta.at("d_w").get<int>(), ckpt.meta.at("d_r").get<int>(), f, rng);
  read_parameters(m.encoder, ckpt);
  read_parameters(m.decoder, ckpt);
  read_parameters(m.extractor, ckpt);
  return m;
}

/// A user's distributable model: baked decoder plus the (fingerprint-free) encoder.
struct BakedModel {
  ToyEncoder encoder;
  BakedDecoder decoder;
};

inline BakedModel bake_model(WatermarkModel& m, const WatermarkMessage& message) {
  return {m.encoder, m.decoder.bake(message)};
}

inline Checkpoint to_checkpoint(BakedModel& m, const std::string& user_id = {}) {
  Checkpoint ckpt;
  ckpt.baked = true;
  ckpt.meta = {{"kind", "baked"}, {"latent_channels", m.decoder.latent_channels()}};
  if (!user_id.empty()) ckpt.meta["user_id"] = user_id;
  write_parameters(m.encoder, ckpt);
  write_parameters(m.decoder, ckpt);
  return ckpt;
}

inline BakedModel baked_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.baked) throw FormatError("checkpoint is not a baked decoder");
  const int c = ckpt.meta.at("latent_channels").get<int>();
  Rng rng(0);
  BakedModel m;
  m.encoder = ToyEncoder(c, rng);
  auto layout = decoder_layout(c);
  for (int i = 0; i < kDecoderLayers; ++i) {
    const auto name = decoder_layer_name(i);
    auto& l = m.decoder.layers[i];
    l.weight = Parameter(name + ".weight", Tensor(Shape{layout[i].out, layout[i].in, 3, 3}));
    l.bias = Parameter(name + ".bias", Tensor(Shape{layout[i].out}));
    l.aug = Parameter(name + ".aug", Tensor(Shape{layout[i].out}));
    l.lambda_n = Parameter(name + ".lambda_n", Tensor::scalar(0));
  }
  read_parameters(m.encoder, ckpt);
  read_parameters(m.decoder, ckpt);
  return m;
}

/// SHA-256 over the serialized tensors that WIB training must leave untouched.
inline std::string frozen_checksum(WatermarkModel& m) {
  Checkpoint ckpt;
  write_parameters(m.encoder, ckpt);
  for (auto* p : m.decoder.frozen_parameters()) ckpt.put(p->name, p->value);
  return sha256_hex(serialize(ckpt));
}

// ---------------------------------------------------------------------------
// Stage 1: autoencoder
// ---------------------------------------------------------------------------

struct PretrainReport {
  std::vector<double> losses;  // mean batch loss per step
  int probe_images = 0;        // when > 0, track loss on the first held-out images after every step
  std::vector<double> probe_losses;
  double held_out_loss = 0;
  double held_out_psnr = 0;
};

using ProgressFn = std::function<void(int step, const LossBreakdown&)>;

inline double reconstruction_loss(PretrainedModel& m, const Tensor& image) {
  BasicTape<float> tape(false);
  auto x = tape.constant_ref(image);
  return mse(m.decoder(tape, m.encoder(tape, x)), x).value().item();
}

inline std::pair<double, double> held_out_reconstruction(PretrainedModel& m, const std::vector<Tensor>& images) {
  double loss = 0, db = 0;
  for (const auto& img : images) {
    auto rec = decode_plain(m.decoder, encode_image(m.encoder, img));
    loss += reconstruction_loss(m, img);
    db += psnr(rec, img);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, images.size()));
  return {loss / n, db / n};
}

inline PretrainedModel pretrain_autoencoder(const TrainingConfig& c, const Split& data,
                                            PretrainReport* report = nullptr,
                                            const ProgressFn& progress = {}) {
  if (data.train.size() + data.held_out.size() < 20) throw Error("pretraining needs at least 20 images");
  Rng root(c.seed);
  Rng init = root.fork(kPretrainInit), batches = root.fork(kPretrainBatches);
  PretrainedModel m(c.latent_channels, init);
  auto params = m.encoder.parameters();
  for (auto* p : m.decoder.parameters()) params.push_back(p);
  AdamW opt(params, c.adamw(c.pretrain_lr));
  const float inv_batch = 1.0f / static_cast<float>(c.batch_size);
  for (int step = 1; step <= c.pretrain_steps; ++step) {
    opt.zero_grad();
    double batch_loss = 0;
    for (int b = 0; b < c.batch_size; ++b) {
      const auto& img = data.train[batches.below(data.train.size())];
      Tape tape;
      auto x = tape.constant_ref(img);
      auto loss = mse(m.decoder(tape, m.encoder(tape, x)), x);
      const double v = loss.value().item();
      if (!std::isfinite(v))
        throw DivergenceError("pretraining diverged at step " + std::to_string(step), step);
      batch_loss += v;
      tape.backward(affine(loss, inv_batch));
    }
    opt.step();
    batch_loss /= c.batch_size;
    if (report) {
      report->losses.push_back(batch_loss);
      if (report->probe_images > 0) {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(report->probe_images), data.held_out.size());
        double probe = 0;
        for (std::size_t i = 0; i < n; ++i) probe += reconstruction_loss(m, data.held_out[i]);
        report->probe_losses.push_back(probe / static_cast<double>(std::max<std::size_t>(1, n)));
      }
    }
    if (progress) {
      LossBreakdown lb;
      lb.total = batch_loss;
      progress(step, lb);
    }
  }
  if (report) std::tie(report->held_out_loss, report->held_out_psnr) = held_out_reconstruction(m, data.held_out);
  return m;
}

// ---------------------------------------------------------------------------
// Stage 2: watermark-informed blending
// ---------------------------------------------------------------------------

inline double bit_accuracy_of_logits(const Tensor& logits, const WatermarkMessage& m) {
  int hit = 0;
  for (int i = 0; i < m.length(); ++i) hit += (logits[static_cast<std::size_t>(i)] > 0.0f) == (m.bits[static_cast<std::size_t>(i)] != 0);
  return static_cast<double>(hit) / m.length();
}

/// Loss graph for one (z, m) pair: I_w through the WIB decoder, I_o through the
/// frozen pre-trained path, extractor on I_w.
inline LossTerms<float> wib_losses(WatermarkModel& m, Tape& tape, const Tensor& z, const Tensor& original,
                                   const WatermarkMessage& message, Rng* noise_rng, const LossWeights& lw,
                                   Tensor* logits_out = nullptr) {
  auto zv = tape.constant_ref(z);
  auto image = m.decoder(tape, zv, message, m.flags.noise() ? noise_rng : nullptr);
  auto logits = m.extractor(tape, image);
  if (logits_out) *logits_out = logits.value();
  auto target = tape.constant_ref(original);
  std::optional<Var> l_l;
  if (m.flags.feature_loss()) l_l = feature_proxy_loss(m.encoder, tape, image, target);
  return combine_losses(watermark_loss(logits, message), visual_proxy_loss(image, target), l_l, lw);
}

struct WibReport {
  std::vector<LossBreakdown> log;
  std::string frozen_before, frozen_after;
};

inline void write_training_log(const std::filesystem::path& path, const std::vector<LossBreakdown>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training log '" + path.string() + "'");
  out.precision(9);
  out << "step,l_w,l_v,l_l,total,bit_acc\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& b = log[i];
    out << i + 1 << ',' << b.l_w << ',' << b.l_v << ',' << b.l_l << ',' << b.total << ',' << b.bit_acc << '\n';
  }
  if (!out) throw Error("failed writing training log '" + path.string() + "'");
}

inline WatermarkModel train_wib(const TrainingConfig& c, const PretrainedModel& pre, const LatentSet& latents,
                                WibReport* report = nullptr, const ProgressFn& progress = {}) {
  if (latents.train.empty()) throw Error("WIB training needs a non-empty latent set");
  if (pre.latent_channels() != c.latent_channels)
    throw Error("pre-trained model has " + std::to_string(pre.latent_channels()) +
                " latent channels, config says " + std::to_string(c.latent_channels));
  Rng root(c.seed);
  Rng init = root.fork(kWibInit), batches = root.fork(kWibBatches);
  Rng messages = root.fork(kWibMessages), noise = root.fork(kWibNoise);
  WatermarkModel m(pre, c.d_w, c.d_r, c.ablation, init);
  ToyDecoder original = m.pretrained_decoder();
  set_trainable(original.parameters(), false);

  const std::string before = frozen_checksum(m);
  auto params = m.decoder.trainable_parameters();
  if (m.flags.joint_extractor())
    for (auto* p : m.extractor.parameters()) params.push_back(p);
  AdamW opt(params, c.adamw(c.lr));
  const auto lw = c.loss_weights();
  const float inv_batch = 1.0f / static_cast<float>(c.batch_size);

  for (int step = 1; step <= c.wib_steps; ++step) {
    opt.zero_grad();
    LossBreakdown acc;
    for (int b = 0; b < c.batch_size; ++b) {
      const auto& z = latents.train[batches.below(latents.train.size())];
      const auto message = sample_message(c.d_w, messages);
      const Tensor target = decode_plain(original, z);
      Tape tape;
      Tensor logits;
      auto terms = wib_losses(m, tape, z, target, message, &noise, lw, &logits);
      const double total = terms.total.value().item();
      if (!std::isfinite(total))
        throw DivergenceError("WIB training diverged at step " + std::to_string(step), step);
      acc.l_w += terms.l_w.value().item();
      acc.l_v += terms.l_v.value().item();
      if (terms.has_l_l) acc.l_l += terms.l_l.value().item();
      acc.total += total;
      acc.bit_acc += bit_accuracy_of_logits(logits, message);
      tape.backward(affine(terms.total, inv_batch));
    }
    opt.step();
    const double n = c.batch_size;
    acc.l_w /= n;
    acc.l_v /= n;
    acc.l_l /= n;
    acc.total /= n;
    acc.bit_acc /= n;
    if (report) report->log.push_back(acc);
    if (progress) progress(step, acc);
  }

  const std::string after = frozen_checksum(m);
  if (report) {
    report->frozen_before = before;
    report->frozen_after = after;
  }
  if (before != after) throw Error("frozen weights changed during WIB training");
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct WibEvaluation {
  double bit_accuracy = 0;
  double psnr_db = 0;  // I_w against I_o
  int pairs = 0;
};

/// Clean bit accuracy and fidelity over `pairs` (z, m) draws from the held-out latents.
inline WibEvaluation evaluate_wib(WatermarkModel& m, const std::vector<Tensor>& latents, int pairs,
                                  std::uint64_t seed, bool noise = true) {
  if (latents.empty()) throw Error("evaluation needs held-out latents");
  Rng root(seed);
  Rng messages = root.fork(1), noise_rng = root.fork(2);
  ToyDecoder original = m.pretrained_decoder();
  WibEvaluation e;
  for (int i = 0; i < pairs; ++i) {
    const auto& z = latents[static_cast<std::size_t>(i) % latents.size()];
    const auto message = sample_message(m.message_bits(), messages);
    auto image = decode_watermarked(m.decoder, z, message, noise ? &noise_rng : nullptr);
    e.bit_accuracy += bit_accuracy_of_logits(extract_logits(m.extractor, image), message);
    e.psnr_db += psnr(image, decode_plain(original, z));
  }
  e.pairs = pairs;
  e.bit_accuracy /= pairs;
  e.psnr_db /= pairs;
  return e;
}

}  // namespace teawib
