// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance <artifact-dir> [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "../support/artifacts.hpp"

using namespace teawib;
using teawib::testing::Artifacts;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << (ok ? "" : "FAILED ") << what;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// Exact binomial tail P(M > tau), M ~ Bin(k, 1/2), from an integer numerator.
long double exact_tail(int tau, int k) {
  unsigned __int128 c = 1, total = 0;
  for (int j = 0; j <= k; ++j) {
    if (j > tau) total += c;
    c = c * static_cast<unsigned>(k - j) / static_cast<unsigned>(j + 1);
  }
  return std::ldexp(static_cast<long double>(total), -k);
}

template <typename T>
void perturb(const ParamList<T>& params, Rng& rng, double scale) {
  for (auto* p : params)
    for (auto& v : p->value.data()) v += static_cast<T>(rng.uniform(-scale, scale));
}

Tensor random_latent(Rng& rng, int channels) {
  Tensor z(Shape{channels, kLatentSize, kLatentSize});
  for (auto& v : z.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return z;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

/// Registered users, their baked decoders and 20 quantized generations each.
struct Fleet {
  static constexpr int kUsers = 10;
  static constexpr int kPerUser = 20;

  Registry registry;
  std::vector<BakedModel> baked;
  std::vector<MarkedImage> images;  // user-major
  std::vector<Tensor> originals;    // pre-trained decoder on the same z
  std::vector<int> owner;
};

class Gate {
 public:
  explicit Gate(Artifacts& a) : a_(a) {}

  Outcome autodiff() {
    using D = double;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto& c = a_.config();
    Rng rng(101);
    BasicToyEncoder<D> enc(c.latent_channels, rng);
    BasicToyDecoder<D> pre(c.latent_channels, rng);
    BasicWibDecoder<D> wib(pre, c.d_w, c.d_r, rng);
    BasicWatermarkExtractor<D> ext(c.d_w, rng);
    // Move every head off its identity initialisation so all paths carry gradient.
    perturb(wib.trainable_parameters(), rng, 0.05);
    for (auto& l : wib.layers) l.lambda_n.value[0] = 0.02;
    BasicTensor<D> z(Shape{c.latent_channels, kLatentSize, kLatentSize});
    for (auto& v : z.data()) v = rng.uniform(-1, 1);
    const auto m = sample_message(c.d_w, rng);
    const auto target = decode_plain(pre, z);
    auto params = wib.trainable_parameters();
    for (auto* p : ext.parameters()) params.push_back(p);
    auto loss = [&](BasicTape<D>& t) {
      Rng noise(5);
      auto img = wib(t, t.constant(z), m, &noise);
      auto target_v = t.constant(target);
      return combine_losses(watermark_loss(ext(t, img), m), visual_proxy_loss(img, target_v),
                            std::optional<BasicVar<D>>(feature_proxy_loss(enc, t, img, target_v)),
                            c.loss_weights())
          .total;
    };
    const auto r = grad_check<D>(loss, params, 7, {1e-6, 3, 1e-7});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(r.max_rel_error < 1e-3, "max rel error " + fmt(r.max_rel_error) + " over " + std::to_string(r.checked) +
                                        " coordinates (worst " + r.worst_parameter + ")");
    o.check(r.checked >= 100, std::to_string(r.skipped) + " skipped below magnitude floor");
    o.check(secs < 120, "runtime " + fmt(secs, 3) + " s");
    return o;
  }

  Outcome statistics() {
    Outcome o;
    double worst = 0;
    for (int k = 1; k <= 64; ++k)
      for (int tau = 0; tau <= k; ++tau) {
        const double exact = static_cast<double>(exact_tail(tau, k));
        worst = std::max(worst, std::abs(fpr_closed_form(tau, k) - exact));
      }
    o.check(worst <= 1e-12, "max |closed form - exact tail| " + fmt(worst) + " over k<=64");
    Rng rng(202);
    const long n = 1000000;
    for (auto [tau, k] : {std::pair{8, 16}, {11, 16}, {24, 48}, {30, 48}}) {
      const double p = fpr_closed_form(tau, k);
      const double sigma = std::sqrt(p * (1 - p) / n);
      const double mc = fpr_monte_carlo(tau, k, n, rng);
      o.check(std::abs(mc - p) <= 3 * sigma, "k=" + std::to_string(k) + " tau=" + std::to_string(tau) + " MC " +
                                                 fmt(mc, 6) + " vs " + fmt(p, 6));
    }
    o.check(fpr_closed_form(0, 2) == 0.75, "k=2 tau=0 gives " + fmt(fpr_closed_form(0, 2), 17));
    bool zero = true;
    for (int k = 1; k <= 64; ++k) zero = zero && fpr_closed_form(k, k) == 0.0;
    o.check(zero, "tau=k gives exactly 0");
    return o;
  }

  Outcome init_identity() {
    Outcome o;
    auto pre = a_.pretrained();
    const auto& c = a_.config();
    Rng rng(303);
    WatermarkModel fresh(pre, c.d_w, c.d_r, AblationFlags{}, rng);
    double worst_linf = 0, min_psnr = kPsnrCap;
    for (int i = 0; i < 100; ++i) {
      const auto z = random_latent(rng, c.latent_channels);
      const auto m = sample_message(c.d_w, rng);
      Rng noise(static_cast<std::uint64_t>(i));
      const auto marked = decode_watermarked(fresh.decoder, z, m, &noise);
      const auto plain = decode_plain(pre.decoder, z);
      worst_linf = std::max(worst_linf, linf(marked, plain));
      min_psnr = std::min(min_psnr, psnr(marked, plain));
    }
    o.check(worst_linf == 0.0, "max linf " + fmt(worst_linf));
    o.check(min_psnr == kPsnrCap, "min PSNR " + fmt(min_psnr) + " dB over 100 pairs");
    return o;
  }

  Outcome fold_equivalence() {
    Outcome o;
    auto& m = generic();
    const auto& c = a_.config();
    Rng rng(404);
    WibDecoder literal = m.decoder;
    literal.options.route = BlendRoute::two_pass;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
      const auto z = random_latent(rng, c.latent_channels);
      const auto msg = sample_message(c.d_w, rng);
      auto baked = m.decoder.bake(msg);
      worst = std::max(worst, max_abs_diff(decode_baked(baked, z, nullptr), decode_watermarked(literal, z, msg, nullptr)));
    }
    o.check(worst < 1e-4, "max |baked - two-pass| " + fmt(worst) + " on 20 inputs");
    return o;
  }

  Outcome attribution() {
    Outcome o;
    auto& m = generic();
    const auto& c = a_.config();
    const auto report = Artifacts::read_report(a_.report_path());
    const auto eval = evaluate_wib(m, held_out_latents(), 200, testing::kEvalSeed);
    o.check(eval.bit_accuracy >= 0.95, "clean bit accuracy " + fmt(eval.bit_accuracy) + " over 200 held-out pairs");
    if (report.contains("seconds")) o.detail << " (training took " << fmt(report["seconds"].get<double>() / 60, 3) << " min)";

    auto& f = fleet();
    const int tau = detection_threshold(c.d_w, 1e-6, 1);
    int hits = 0;
    for (std::size_t i = 0; i < f.images.size(); ++i)
      hits += detect(m.extractor, f.images[i].image, f.images[i].message, tau).detected;
    const double tpr = static_cast<double>(hits) / static_cast<double>(f.images.size());
    o.check(tpr >= 0.99, "TPR " + fmt(tpr) + " at tau=" + std::to_string(tau) + " (FPR 1e-6)");

    const auto& padded = padded_registry();
    CandidateSet set(padded);
    const int tau_n = detection_threshold(c.d_w, 1e-6, static_cast<long>(padded.size()));
    int correct = 0;
    for (std::size_t i = 0; i < f.images.size(); ++i) {
      const auto v = set.identify(extract_message(m.extractor, f.images[i].image), tau_n);
      correct += v.identified && v.best_user_id == f.registry.records()[static_cast<std::size_t>(f.owner[i])].user_id;
    }
    const double id_rate = static_cast<double>(correct) / static_cast<double>(f.images.size());
    o.check(id_rate >= 0.99, "identification " + fmt(id_rate) + " among " + std::to_string(padded.size()) +
                                 " candidates at tau=" + std::to_string(tau_n));

    // Unwatermarked: pre-trained decoder outputs on 1000 training-split latents.
    ToyDecoder original = m.pretrained_decoder();
    const auto& lat = train_latents();
    int false_ids = 0, false_detections = 0;
    for (int i = 0; i < 1000; ++i) {
      const Tensor img = quantize(decode_plain(original, lat[static_cast<std::size_t>(i) % lat.size()]));
      const auto bits = extract_message(m.extractor, img);
      false_ids += set.identify(bits, tau_n).identified;
      for (const auto& r : f.registry.records()) false_detections += detect_message(bits, r.message, tau).detected;
    }
    o.check(false_ids == 0 && false_detections == 0,
            std::to_string(false_ids) + " false identifications, " + std::to_string(false_detections) +
                " false detections on 1000 unwatermarked images");
    return o;
  }

  Outcome robustness() {
    Outcome o;
    auto& m = generic();
    const auto rows = robustness_sweep(m.extractor, fleet().images, standard_transforms(17));
    const double clean = rows.front().bit_accuracy;
    std::ostringstream table;
    for (const auto& r : rows) table << r.name << "=" << fmt(r.bit_accuracy, 3) << " ";
    o.detail << table.str();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.name.rfind("crop", 0) == 0) {
        o.check(r.bit_accuracy >= 0.70, r.name + " >= 0.70");
      } else {
        o.check(std::abs(clean - r.bit_accuracy) <= 0.08, r.name + " within 0.08 of clean");
      }
      o.check(clean >= r.bit_accuracy - 0.01, "clean >= " + r.name + " - 0.01");
    }
    return o;
  }

  Outcome attacks() {
    Outcome o;
    auto& m = generic();
    auto& f = fleet();
    const auto& user = f.registry.records()[0];

    // Purification.
    PurificationOptions popt;
    popt.seed = 31;
    ToyDecoder original = m.pretrained_decoder();
    const auto traj = purification_attack(f.baked[0].decoder, original, m.extractor, user.message, train_latents(),
                                          held_out_latents(), popt);
    const TrajectoryPoint* first_low = nullptr;
    for (const auto& p : traj)
      if (p.bit_acc < 0.75) {
        first_low = &p;
        break;
      }
    if (first_low) {
      const double drop = traj.front().psnr - first_low->psnr;
      o.check(drop >= 2.0, "purification: accuracy < 0.75 first at step " + std::to_string(first_low->step) +
                               " with PSNR drop " + fmt(drop, 3) + " dB");
    } else {
      o.check(true, "purification: accuracy stayed >= 0.75 for " + std::to_string(popt.steps) +
                        " steps (final " + fmt(traj.back().bit_acc, 3) + ", PSNR " + fmt(traj.back().psnr, 3) + " dB)");
    }

    // Adversarial substitution on 20 of the user's generations.
    Rng rng(505);
    double acc_target = 0, acc_orig = 0, db = 0, worst_db = kPsnrCap;
    const int n_adv = 20;
    for (int i = 0; i < n_adv; ++i) {
      const auto target = sample_message(user.message.length(), rng);
      const auto r = adversarial_message_attack(m.extractor, f.images[static_cast<std::size_t>(i)].image, user.message,
                                                target, AdversarialOptions{});
      acc_target += r.acc_target / n_adv;
      acc_orig += r.acc_original / n_adv;
      db += r.psnr / n_adv;
      worst_db = std::min(worst_db, r.psnr);
    }
    o.check(acc_target >= 0.9 && db >= 30, "adversarial: target accuracy " + fmt(acc_target, 3) + ", PSNR " +
                                               fmt(db, 3) + " dB (min " + fmt(worst_db, 3) + "), original accuracy " +
                                               fmt(acc_orig, 3));

    // Narrowest compressive autoencoder.
    auto bank = a_.autoencoders();
    const int narrow = kBottleneckWidths.back();
    double acc = 0, clean_db = 0, attacked_db = 0;
    const double n_img = static_cast<double>(f.images.size());
    for (std::size_t i = 0; i < f.images.size(); ++i) {
      const auto r = autoencoder_attack(bank, narrow, f.images[i].image, f.originals[i], m.extractor, f.images[i].message);
      acc += r.bit_accuracy / n_img;
      attacked_db += r.psnr / n_img;
      clean_db += psnr(f.images[i].image, f.originals[i]) / n_img;
    }
    o.check(acc >= 0.4 && acc <= 0.7, "autoencoder b=" + std::to_string(narrow) + ": accuracy " + fmt(acc, 3));
    o.check(clean_db - attacked_db >= 4.0, "autoencoder PSNR to original " + fmt(attacked_db, 3) + " dB vs clean " +
                                               fmt(clean_db, 3) + " dB");
    return o;
  }

  Outcome collusion() {
    Outcome o;
    auto& m = generic();
    auto& f = fleet();
    const auto& r0 = f.registry.records()[0];
    const auto& r1 = f.registry.records()[1];
    auto colluded = collude_models(f.baked[0], f.baked[1]);
    const auto rep = collusion_bit_stats(m.extractor, colluded, r0.message, r1.message, held_out_latents(), 200, 606);
    int agree = 0;
    for (auto c : rep.condition) agree += c == BitCondition::both0 || c == BitCondition::both1;
    o.check(rep.agreeing_frequency() >= 0.9, "agreeing positions (" + std::to_string(agree) + ") decode to the shared bit " +
                                                 fmt(rep.agreeing_frequency(), 3));
    o.check(std::abs(rep.differing_mean_delta()) <= 0.25,
            "differing positions mean(m^j - m2) " + fmt(rep.differing_mean_delta(), 3) + " over 200 images");
    return o;
  }

  Outcome ablations() {
    Outcome o;
    const auto held = held_out_latents();
    auto full = evaluate_wib(generic(), held, 200, testing::kEvalSeed);
    o.detail << "full acc " << fmt(full.bit_accuracy, 3) << " psnr " << fmt(full.psnr_db, 3);
    AblationFlags frozen, inner;
    frozen.frozen_extractor = true;
    inner.wib_inner_only = true;
    for (const auto& flags : {frozen, inner}) {
      auto model = a_.generic(flags);
      const auto e = evaluate_wib(model, held, 200, testing::kEvalSeed);
      const auto name = Artifacts::variant_name(flags);
      o.check(full.bit_accuracy >= e.bit_accuracy - 0.02 && full.psnr_db >= e.psnr_db - 0.5,
              name + " acc " + fmt(e.bit_accuracy, 3) + " psnr " + fmt(e.psnr_db, 3));
    }
    return o;
  }

  Outcome determinism() {
    Outcome o;
    auto run = [&](const fs::path& dir) {
      fs::remove_all(dir);
      fs::create_directories(dir / "images");
      TrainingConfig c = a_.config();
      c.corpus_size = 60;
      c.pretrain_steps = 30;
      c.wib_steps = 20;
      c.batch_size = 4;
      c.eval_pairs = 8;
      c.seed = 77;
      const auto images = procedural_corpus(c.corpus_size, c.seed ^ 0xc0ffee);
      for (std::size_t i = 0; i < images.size(); ++i)
        write_png(dir / "images" / ("img_" + std::to_string(1000 + i) + ".png"), images[i]);
      c.image_dir = (dir / "images").string();
      const auto split = load_corpus(c);
      PretrainReport pre_report;
      auto pre = pretrain_autoencoder(c, split, &pre_report);
      WibReport report;
      auto model = train_wib(c, pre, encode_split(pre.encoder, split), &report);
      write_training_log(dir / "training_log.csv", report.log);
      Registry reg(dir / "registry.jsonl");
      Rng rng(c.seed);
      const auto& user = reg.register_user("alice", c.d_w, rng, "", "2024-01-01T00:00:00Z");
      auto baked = bake_model(model, user.message);
      save_checkpoint(dir / "baked_alice.twb", to_checkpoint(baked, "alice"));
      return std::pair{read_bytes(dir / "training_log.csv"), read_bytes(dir / "baked_alice.twb")};
    };
    const auto base = a_.dir() / "determinism";
    const auto first = run(base / "a");
    const auto second = run(base / "b");
    o.check(first.first == second.first, "training logs identical (" + std::to_string(first.first.size()) + " bytes)");
    o.check(first.second == second.second,
            "baked checkpoints identical (sha256 " + sha256_hex(first.second).substr(0, 16) + ")");
    return o;
  }

 private:
  WatermarkModel& generic() {
    if (!generic_) generic_ = a_.generic();
    return *generic_;
  }

  const std::vector<Tensor>& held_out_latents() {
    if (held_.empty())
      for (const auto& img : a_.corpus().held_out) held_.push_back(encode_image(generic().encoder, img));
    return held_;
  }

  const std::vector<Tensor>& train_latents() {
    if (train_.empty())
      for (const auto& img : a_.corpus().train) train_.push_back(encode_image(generic().encoder, img));
    return train_;
  }

  Fleet& fleet() {
    if (fleet_) return *fleet_;
    auto& m = generic();
    Fleet f;
    Rng rng(a_.config().seed ^ 0xf1ee7ull);
    Rng noise(0x0153ull);
    ToyDecoder original = m.pretrained_decoder();
    const auto& lat = held_out_latents();
    for (int u = 0; u < Fleet::kUsers; ++u) {
      const auto& rec = f.registry.register_user("user" + std::to_string(u), m.message_bits(), rng, "",
                                                 "2024-01-01T00:00:00Z");
      f.baked.push_back(bake_model(m, rec.message));
      for (int j = 0; j < Fleet::kPerUser; ++j) {
        const auto& z = lat[static_cast<std::size_t>(u * Fleet::kPerUser + j) % lat.size()];
        f.images.push_back({quantize(decode_baked(f.baked.back().decoder, z, &noise)), rec.message});
        f.originals.push_back(quantize(decode_plain(original, z)));
        f.owner.push_back(u);
      }
    }
    fleet_ = std::move(f);
    return *fleet_;
  }

  const Registry& padded_registry() {
    if (padded_) return *padded_;
    Registry reg;
    for (const auto& r : fleet().registry.records()) reg.add(r);
    Rng decoys(0xdec0ull);
    for (std::size_t i = reg.size(); i < 10001; ++i)
      reg.register_user("decoy" + std::to_string(i), generic().message_bits(), decoys, "", "2024-01-01T00:00:00Z");
    padded_ = std::move(reg);
    return *padded_;
  }

  Artifacts& a_;
  std::optional<WatermarkModel> generic_;
  std::vector<Tensor> held_, train_;
  std::optional<Fleet> fleet_;
  std::optional<Registry> padded_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <artifact-dir> [criterion ...]\n";
    return 2;
  }
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  Artifacts artifacts(argv[1], false, true);
  Gate gate(artifacts);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff correctness", [&] { return gate.autodiff(); }},
      {"exact statistics", [&] { return gate.statistics(); }},
      {"init identity", [&] { return gate.init_identity(); }},
      {"fold equivalence", [&] { return gate.fold_equivalence(); }},
      {"end-to-end attribution", [&] { return gate.attribution(); }},
      {"robustness trend", [&] { return gate.robustness(); }},
      {"attack trade-offs", [&] { return gate.attacks(); }},
      {"collusion", [&] { return gate.collusion(); }},
      {"ablation directionality", [&] { return gate.ablations(); }},
      {"determinism", [&] { return gate.determinism(); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first
              << "): " << o.detail.str() << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
