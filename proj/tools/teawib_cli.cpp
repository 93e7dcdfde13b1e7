// teawib command-line front end. Every subcommand resolves a TrainingConfig
// (defaults < --config < --seed < TEAWIB_SEED), does its work, and leaves a
// <command>.manifest.json in --out describing exactly what ran.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "teawib/teawib.hpp"

#ifndef TEAWIB_VERSION
#define TEAWIB_VERSION "v0.0.0-unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace teawib;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kDivergence = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string registry = "registry.jsonl";
  std::string checkpoint;
  std::string out = ".";
  std::string data;
  bool quiet = false;
};

struct Run {
  std::string command;
  TrainingConfig config;
  std::string seed_source = "default";
  json options = json::object();
  json outputs = json::object();
  std::vector<std::string> argv;
};

std::uint64_t parse_seed(const std::string& text, const char* where) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string(where) + ": '" + text + "' is not a non-negative integer");
  }
}

TrainingConfig resolve_config(const Globals& g, Run& run) {
  TrainingConfig c;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw Error("cannot open config '" + g.config_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("config '" + g.config_path + "' is not valid JSON: " + e.what());
    }
    // A manifest from an earlier run is accepted as a config.
    if (j.is_object() && j.contains("command") && j.contains("config")) j = j.at("config");
    c = config_from_json(j, c);
    run.seed_source = "config";
  }
  if (g.seed) {
    c.seed = *g.seed;
    run.seed_source = "flag";
  }
  if (const char* env = std::getenv("TEAWIB_SEED"); env && *env) {
    c.seed = parse_seed(env, "TEAWIB_SEED");
    run.seed_source = "env";
  }
  if (!g.data.empty()) c.image_dir = g.data;
  c.validate();
  return c;
}

fs::path out_dir(const Globals& g) {
  fs::path p(g.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error("cannot create output directory '" + g.out + "'");
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void write_manifest(const fs::path& dir, const Run& run) {
  json m;
  m["tool"] = "teawib";
  m["version"] = TEAWIB_VERSION;
  m["command"] = run.command;
  m["argv"] = run.argv;
  m["seed_source"] = run.seed_source;
  m["config"] = to_json(run.config);
  m["options"] = run.options;
  m["outputs"] = run.outputs;
  write_json(dir / (run.command + ".manifest.json"), m);
}

void note(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cerr << line << '\n';
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
  return value;
}

Checkpoint load_existing(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " checkpoint path is required");
  if (!fs::exists(path)) throw Error(std::string(what) + " checkpoint '" + path + "' not found");
  return load_checkpoint(path);
}

/// FNV-1a, used to give each user id its own registration stream.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

void check_user_id(const std::string& user) {
  if (user.empty()) throw UsageError("--user is required");
  for (char ch : user)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
      throw Error("user id '" + user + "' may only contain letters, digits, '_', '-' and '.'");
}

RegistryRecord lookup_user(const Registry& reg, const std::string& user) {
  auto r = reg.lookup(user);
  if (!r) throw Error("user '" + user + "' is not registered in '" + reg.path().string() + "'");
  return *r;
}

Registry load_registry(const Globals& g) {
  if (!fs::exists(g.registry)) throw Error("registry '" + g.registry + "' not found");
  return Registry::load(g.registry);
}

/// Held-out corpus images encoded to latents: the stand-in for sampled z.
std::vector<Tensor> held_out_latents(ToyEncoder& encoder, const TrainingConfig& c) {
  const auto split = load_corpus(c);
  std::vector<Tensor> out;
  for (const auto& img : split.held_out) out.push_back(encode_image(encoder, img));
  return out;
}

ProgressFn progress_printer(const Globals& g, const char* stage, int total) {
  if (g.quiet) return {};
  const int every = std::max(1, total / 20);
  return [=](int step, const LossBreakdown& b) {
    if (step % every != 0 && step != total) return;
    std::cerr << stage << " step " << step << "/" << total << " loss " << b.total;
    if (b.l_w != 0 || b.bit_acc != 0) std::cerr << " l_w " << b.l_w << " bit_acc " << b.bit_acc;
    std::cerr << '\n';
  };
}

std::string image_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d.png", prefix, i);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_gen_data(const Globals& g, Run& run, int count) {
  if (count < 0) throw UsageError("--count must be >= 0");
  run.options["count"] = count;
  const auto dir = out_dir(g);
  const auto images = procedural_corpus(count, run.config.seed ^ 0xc0ffee);
  for (int i = 0; i < count; ++i) write_png(dir / image_name("img", i), images[static_cast<std::size_t>(i)]);
  run.outputs["images"] = count;
  note(g, "wrote " + std::to_string(count) + " images to " + dir.string());
}

void cmd_pretrain(const Globals& g, Run& run) {
  const auto& c = run.config;
  const auto dir = out_dir(g);
  const auto data = load_corpus(c);
  PretrainReport report;
  auto model = pretrain_autoencoder(c, data, &report, progress_printer(g, "pretrain", c.pretrain_steps));
  save_checkpoint(dir / "pretrained.twb", to_checkpoint(model));
  {
    std::ofstream log(dir / "pretrain_log.csv");
    log.precision(9);
    log << "step,loss\n";
    for (std::size_t i = 0; i < report.losses.size(); ++i) log << i + 1 << ',' << report.losses[i] << '\n';
  }
  json rep{{"train_images", data.train.size()},
           {"held_out_images", data.held_out.size()},
           {"held_out_loss", report.held_out_loss},
           {"held_out_psnr", report.held_out_psnr}};
  write_json(dir / "pretrain_report.json", rep);
  run.outputs = {{"checkpoint", (dir / "pretrained.twb").string()}, {"report", rep}};
  note(g, "held-out PSNR " + std::to_string(report.held_out_psnr) + " dB");
}

void cmd_train(const Globals& g, Run& run, const std::string& pretrained, const std::string& ablation) {
  auto& c = run.config;
  if (!ablation.empty()) {
    auto& f = c.ablation;
    if (ablation == "dwb_only") f.dwb_only = true;
    else if (ablation == "no_noise") f.no_noise = true;
    else if (ablation == "no_aug") f.no_aug = true;
    else if (ablation == "no_lpips_proxy") f.no_lpips_proxy = true;
    else if (ablation == "frozen_extractor") f.frozen_extractor = true;
    else if (ablation == "wib_inner_only") f.wib_inner_only = true;
    else throw UsageError("unknown ablation '" + ablation + "'");
    c.validate();
  }
  run.options["pretrained"] = pretrained;
  run.options["ablation"] = ablation;
  const auto dir = out_dir(g);
  auto pre = pretrained_from_checkpoint(load_existing(pretrained, "pre-trained"));
  const auto split = load_corpus(c);
  const auto latents = encode_split(pre.encoder, split);
  WibReport report;
  auto model = train_wib(c, pre, latents, &report, progress_printer(g, "train", c.wib_steps));
  save_checkpoint(dir / "generic.twb", to_checkpoint(model));
  write_training_log(dir / "training_log.csv", report.log);
  const auto eval = evaluate_wib(model, latents.held_out, c.eval_pairs, c.seed ^ kEvaluation);
  json rep{{"bit_accuracy", eval.bit_accuracy},
           {"psnr_to_original", eval.psnr_db},
           {"pairs", eval.pairs},
           {"frozen_checksum", report.frozen_after}};
  write_json(dir / "train_report.json", rep);
  run.outputs = {{"checkpoint", (dir / "generic.twb").string()}, {"report", rep}};
  note(g, "held-out bit accuracy " + std::to_string(eval.bit_accuracy) + ", PSNR " +
              std::to_string(eval.psnr_db) + " dB");
}

void cmd_register(const Globals& g, Run& run, const std::string& user, const std::string& note_text) {
  check_user_id(user);
  int d_w = run.config.d_w;
  if (!g.checkpoint.empty()) d_w = load_existing(g.checkpoint, "generic").meta.at("d_w").get<int>();
  run.options["user"] = user;
  run.options["d_w"] = d_w;
  const auto dir = out_dir(g);
  auto reg = Registry::open(g.registry);
  Rng rng(run.config.seed ^ fnv1a(user));
  const auto rec = reg.register_user(user, d_w, rng, note_text);
  write_json(dir / "register.json", to_json(rec));
  run.outputs = to_json(rec);
  std::cout << to_json(rec).dump() << '\n';
}

void cmd_fingerprint(const Globals& g, Run& run, const std::string& user) {
  check_user_id(user);
  run.options["user"] = user;
  const auto reg = load_registry(g);
  const auto rec = lookup_user(reg, user);
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  if (rec.message.length() != model.message_bits())
    throw Error("user '" + user + "' holds a " + std::to_string(rec.message.length()) +
                "-bit watermark, model expects " + std::to_string(model.message_bits()));
  const auto dir = out_dir(g);
  auto baked = bake_model(model, rec.message);
  const auto path = dir / ("baked_" + user + ".twb");
  const auto bytes = serialize(to_checkpoint(baked, user));
  write_bytes(path, bytes);
  run.outputs = {{"checkpoint", path.string()}, {"sha256", sha256_hex(bytes)}};
  std::cout << path.string() << '\n';
}

void cmd_generate(const Globals& g, Run& run, int n, bool deterministic, const std::string& generic) {
  if (n < 0) throw UsageError("--n must be >= 0");
  run.options = {{"n", n}, {"deterministic", deterministic}, {"generic", generic}};
  const auto ckpt = load_existing(g.checkpoint, "baked");
  auto baked = baked_from_checkpoint(ckpt);
  const auto latents = held_out_latents(baked.encoder, run.config);
  if (latents.empty()) throw Error("no latents available for generation");
  std::optional<ToyDecoder> original;
  if (!generic.empty()) original = generic_from_checkpoint(load_existing(generic, "generic")).pretrained_decoder();

  const auto dir = out_dir(g);
  Rng root(run.config.seed);
  Rng pick = root.fork(1), noise = root.fork(2);
  json files = json::array();
  double psnr_sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto& z = latents[pick.below(latents.size())];
    const Tensor image = decode_baked(baked.decoder, z, deterministic ? nullptr : &noise);
    const auto name = image_name("gen", i);
    write_png(dir / name, image);
    files.push_back(name);
    if (original) psnr_sum += psnr(quantize(image), quantize(decode_plain(*original, z)));
  }
  run.outputs["images"] = files;
  if (ckpt.meta.contains("user_id")) run.outputs["user_id"] = ckpt.meta["user_id"];
  if (original && n > 0) run.outputs["mean_psnr_to_original"] = psnr_sum / n;
  write_json(dir / "generate.json", run.outputs);
}

WatermarkMessage claimed_message(const Globals& g, const std::string& user, const std::string& hex, int d_w) {
  if (!user.empty() && !hex.empty()) throw UsageError("give either --user or --message, not both");
  if (!hex.empty()) return WatermarkMessage::from_hex(hex, d_w);
  if (user.empty()) throw UsageError("--user or --message is required");
  return lookup_user(load_registry(g), user).message;
}

void cmd_detect(const Globals& g, Run& run, const std::string& image_path, const std::string& user,
                const std::string& hex, double fpr) {
  run.options = {{"image", image_path}, {"user", user}, {"message", hex}, {"fpr", fpr}};
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  const auto m = claimed_message(g, user, hex, model.message_bits());
  if (!fs::exists(image_path)) throw Error("image '" + require(image_path, "--image") + "' not found");
  const Tensor image = read_image(image_path);
  const int tau = detection_threshold(m.length(), fpr, 1);
  const auto verdict = detect(model.extractor, image, m, tau);
  const auto dir = out_dir(g);
  write_json(dir / "verdict.json", to_json(verdict));
  run.outputs = to_json(verdict);
  std::cout << to_json(verdict).dump() << '\n';
}

void cmd_identify(const Globals& g, Run& run, const std::string& image_path, double fpr, long pad) {
  run.options = {{"image", image_path}, {"fpr", fpr}, {"pad", pad}};
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  auto reg = load_registry(g);
  // Padding with decoys happens in memory; the registry file is left alone.
  Registry candidates;
  for (const auto& r : reg.records()) candidates.add(r);
  Rng decoys(run.config.seed ^ 0xdec0ull);
  for (long i = static_cast<long>(candidates.size()); i < pad; ++i)
    candidates.register_user("decoy-" + std::to_string(i), model.message_bits(), decoys, "", "1970-01-01T00:00:00Z");
  if (!fs::exists(image_path)) throw Error("image '" + require(image_path, "--image") + "' not found");
  const Tensor image = read_image(image_path);
  const int tau = detection_threshold(model.message_bits(), fpr, static_cast<long>(candidates.size()));
  const auto verdict = identify(model.extractor, image, candidates, tau);
  const auto dir = out_dir(g);
  write_json(dir / "verdict.json", to_json(verdict));
  run.outputs = to_json(verdict);
  std::cout << to_json(verdict).dump() << '\n';
}

/// Marked images either from one user's baked decoder or, without --baked,
/// from the generic decoder with a fresh random message per image.
std::vector<MarkedImage> marked_set(const Globals& g, Run& run, WatermarkModel& model, const std::string& baked_path,
                                    int n) {
  const auto latents = held_out_latents(model.encoder, run.config);
  Rng root(run.config.seed);
  Rng pick = root.fork(1), noise = root.fork(2), messages = root.fork(3);
  std::vector<MarkedImage> set;
  if (!baked_path.empty()) {
    const auto ckpt = load_existing(baked_path, "baked");
    auto baked = baked_from_checkpoint(ckpt);
    const auto user = ckpt.meta.value("user_id", "");
    if (user.empty()) throw Error("baked checkpoint '" + baked_path + "' carries no user id");
    const auto m = lookup_user(load_registry(g), user).message;
    for (int i = 0; i < n; ++i)
      set.push_back({quantize(decode_baked(baked.decoder, latents[pick.below(latents.size())], &noise)), m});
  } else {
    for (int i = 0; i < n; ++i) {
      auto m = sample_message(model.message_bits(), messages);
      set.push_back(
          {quantize(decode_watermarked(model.decoder, latents[pick.below(latents.size())], m, &noise)), m});
    }
  }
  return set;
}

void cmd_sweep(const Globals& g, Run& run, const std::string& baked_path, int n,
               const std::vector<std::string>& transforms) {
  if (n < 1) throw UsageError("--n must be >= 1");
  run.options = {{"baked", baked_path}, {"n", n}, {"transforms", transforms}};
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  std::vector<TransformSpec> specs;
  if (transforms.empty()) specs = standard_transforms(run.config.seed);
  for (const auto& t : transforms) {
    try {
      specs.push_back(parse_transform(t, run.config.seed));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  const auto set = marked_set(g, run, model, baked_path, n);
  const auto rows = robustness_sweep(model.extractor, set, specs);
  const auto dir = out_dir(g);
  write_sweep_csv(dir / "sweep.csv", rows);
  for (const auto& r : rows) run.outputs[r.name] = r.bit_accuracy;
  for (const auto& r : rows) std::cout << r.name << ',' << r.bit_accuracy << '\n';
}

struct AttackArgs {
  std::string kind, baked, target_user, image;
  int steps = -1, n = 32, bottleneck = 2;
  double lr = -1;
};

void cmd_attack(const Globals& g, Run& run, const AttackArgs& a) {
  run.options = {{"kind", a.kind}, {"baked", a.baked}, {"target_user", a.target_user}, {"image", a.image},
                 {"steps", a.steps}, {"n", a.n}, {"bottleneck", a.bottleneck}, {"lr", a.lr}};
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  const auto baked_ckpt = load_existing(a.baked, "baked");
  auto baked = baked_from_checkpoint(baked_ckpt);
  const auto user = baked_ckpt.meta.value("user_id", "");
  if (user.empty()) throw Error("baked checkpoint '" + a.baked + "' carries no user id");
  const auto reg = load_registry(g);
  const auto message = lookup_user(reg, user).message;
  const auto split = load_corpus(run.config);
  std::vector<Tensor> latents;
  for (const auto& img : split.held_out) latents.push_back(encode_image(model.encoder, img));
  const auto dir = out_dir(g);
  Rng noise(run.config.seed ^ 0xa77acull);

  if (a.kind == "purify") {
    PurificationOptions opt;
    opt.seed = run.config.seed;
    if (a.steps >= 0) opt.steps = a.steps;
    if (a.lr > 0) opt.lr = a.lr;
    std::vector<Tensor> attack_latents;
    for (const auto& img : split.train) attack_latents.push_back(encode_image(model.encoder, img));
    ToyDecoder original = model.pretrained_decoder();
    const auto traj = purification_attack(baked.decoder, original, model.extractor, message, attack_latents,
                                          latents, opt);
    write_trajectory_csv(dir / "purification.csv", traj);
    run.outputs = {{"trajectory", (dir / "purification.csv").string()},
                   {"final_psnr", traj.back().psnr},
                   {"final_bit_acc", traj.back().bit_acc}};
  } else if (a.kind == "adversarial") {
    AdversarialOptions opt;
    if (a.steps >= 0) opt.steps = a.steps;
    if (a.lr > 0) opt.lr = a.lr;
    const Tensor image = a.image.empty() ? quantize(decode_baked(baked.decoder, latents.front(), &noise))
                                         : read_image(a.image);
    WatermarkMessage target;
    if (!a.target_user.empty()) {
      target = lookup_user(reg, a.target_user).message;
    } else {
      Rng rng(run.config.seed ^ 0x7a69e7ull);
      target = sample_message(message.length(), rng);
    }
    const auto r = adversarial_message_attack(model.extractor, image, message, target, opt);
    write_png(dir / "attacked.png", r.image);
    run.outputs = {{"steps_run", r.steps_run},
                   {"acc_original", r.acc_original},
                   {"acc_target", r.acc_target},
                   {"psnr", r.psnr}};
  } else if (a.kind == "autoencoder") {
    if (a.n < 1) throw UsageError("--n must be >= 1");
    AutoencoderTraining opt;
    opt.seed = run.config.seed;
    if (a.steps >= 0) opt.steps = a.steps;
    if (a.lr > 0) opt.lr = a.lr;
    if (std::find(kBottleneckWidths.begin(), kBottleneckWidths.end(), a.bottleneck) == kBottleneckWidths.end())
      throw UsageError("--bottleneck must be one of 16, 8, 4, 2");
    auto ae = train_compressive_autoencoder(a.bottleneck, split.train, opt);
    double acc = 0, db = 0;
    for (int i = 0; i < a.n; ++i) {
      const Tensor marked = quantize(decode_baked(baked.decoder, latents[static_cast<std::size_t>(i) % latents.size()], &noise));
      const Tensor rec = ae.reconstruct(marked);
      acc += bit_accuracy(extract_message(model.extractor, rec), message);
      db += psnr(rec, marked);
    }
    run.outputs = {{"bottleneck", a.bottleneck}, {"bit_accuracy", acc / a.n}, {"psnr_to_watermarked", db / a.n},
                   {"images", a.n}};
  } else {
    throw UsageError("--kind must be purify, adversarial or autoencoder");
  }
  write_json(dir / "attack.json", run.outputs);
  std::cout << run.outputs.dump() << '\n';
}

void cmd_collude(const Globals& g, Run& run, const std::string& user_a, const std::string& user_b, int n) {
  check_user_id(user_a);
  check_user_id(user_b);
  if (n < 1) throw UsageError("--n must be >= 1");
  run.options = {{"user_a", user_a}, {"user_b", user_b}, {"n", n}};
  auto model = generic_from_checkpoint(load_existing(g.checkpoint, "generic"));
  const auto reg = load_registry(g);
  const auto m0 = lookup_user(reg, user_a).message, m1 = lookup_user(reg, user_b).message;
  auto a = bake_model(model, m0), b = bake_model(model, m1);
  auto colluded = collude_models(a, b);
  const auto latents = held_out_latents(model.encoder, run.config);
  const auto report = collusion_bit_stats(model.extractor, colluded, m0, m1, latents, n, run.config.seed);
  const auto dir = out_dir(g);
  save_checkpoint(dir / "colluded.twb", to_checkpoint(colluded));
  write_json(dir / "collusion.json", to_json(report));
  run.outputs = {{"checkpoint", (dir / "colluded.twb").string()},
                 {"agreeing_frequency", report.agreeing_frequency()},
                 {"differing_mean_delta", report.differing_mean_delta()}};
  std::cout << run.outputs.dump() << '\n';
}

void cmd_inspect(const Globals& g, Run& run) {
  const auto header = checkpoint_header(load_existing(g.checkpoint, "input"));
  run.outputs = header;
  std::cout << header.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teawib: fingerprint a toy image decoder with per-user watermarks", "teawib"};
  app.set_version_flag("--version", std::string(TEAWIB_VERSION));
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Globals g;
  app.add_option("--config", g.config_path, "JSON training config (or an earlier run's manifest)");
  app.add_option("--seed", g.seed, "Run seed; the TEAWIB_SEED environment variable overrides it");
  app.add_option("--registry", g.registry, "User registry (JSON lines)")->capture_default_str();
  app.add_option("--checkpoint", g.checkpoint, "Model checkpoint the command reads");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--data", g.data, "PNG/PPM corpus directory (default: procedural corpus in memory)");
  app.add_flag("-q,--quiet", g.quiet, "No progress output on stderr");

  int count = -1;
  auto* gen = app.add_subcommand("gen-data", "Write the procedural 32x32 PNG corpus");
  gen->add_option("--count", count, "Number of images (default: config corpus_size)");

  auto* pre = app.add_subcommand("pretrain", "Train the toy autoencoder");

  std::string pretrained, ablation;
  auto* train = app.add_subcommand("train", "Train WIB heads and extractor on a frozen decoder");
  train->add_option("--pretrained", pretrained, "Pre-trained checkpoint (default: --checkpoint)");
  train->add_option("--ablation", ablation, "One of dwb_only, no_noise, no_aug, no_lpips_proxy, "
                                            "frozen_extractor, wib_inner_only");

  std::string user, note_text;
  auto* reg = app.add_subcommand("register", "Assign a fresh watermark to a user");
  reg->add_option("--user", user, "User id")->required();
  reg->add_option("--note", note_text, "Free-form note stored with the record");

  auto* fp = app.add_subcommand("fingerprint", "Bake a user's watermark into a distributable decoder");
  fp->add_option("--user", user, "User id")->required();

  int n = 1;
  bool deterministic = false;
  std::string generic;
  auto* generate = app.add_subcommand("generate", "Generate watermarked PNGs from a baked decoder");
  generate->add_option("--n", n, "Number of images")->capture_default_str();
  generate->add_flag("--deterministic", deterministic, "Disable the decoder noise term");
  generate->add_option("--generic", generic, "Generic checkpoint; reports PSNR against the pre-trained decoder");

  std::string image, message;
  double fpr = 1e-6;
  auto* detect_cmd = app.add_subcommand("detect", "Test an image for one claimed watermark");
  detect_cmd->add_option("--image", image, "Image to test")->required();
  detect_cmd->add_option("--user", user, "Claimed user (from the registry)");
  detect_cmd->add_option("--message", message, "Claimed message as hex");
  detect_cmd->add_option("--fpr", fpr, "Target false-positive rate")->capture_default_str();

  long pad = 0;
  auto* identify_cmd = app.add_subcommand("identify", "Attribute an image to the best-matching registered user");
  identify_cmd->add_option("--image", image, "Image to attribute")->required();
  identify_cmd->add_option("--fpr", fpr, "Target global false-positive rate")->capture_default_str();
  identify_cmd->add_option("--pad", pad, "Pad the candidate set with random decoys up to this size");

  std::string baked_path;
  std::vector<std::string> transforms;
  int sweep_n = 200;
  auto* sweep = app.add_subcommand("sweep", "Bit accuracy under the standard image transforms");
  sweep->add_option("--baked", baked_path, "Baked checkpoint (default: random messages via the generic model)");
  sweep->add_option("--n", sweep_n, "Images per row")->capture_default_str();
  sweep->add_option("--transform", transforms, "kind:magnitude, repeatable (default: the standard eight)");

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "Run a removal or substitution attack on a baked decoder");
  attack->add_option("--kind", attack_args.kind, "purify, adversarial or autoencoder")->required()
      ->check(CLI::IsMember({"purify", "adversarial", "autoencoder"}));
  attack->add_option("--baked", attack_args.baked, "Baked checkpoint under attack")->required();
  attack->add_option("--target-user", attack_args.target_user, "Adversarial target (default: random message)");
  attack->add_option("--image", attack_args.image, "Adversarial input image (default: one generated image)");
  attack->add_option("--steps", attack_args.steps, "Optimizer steps (default per attack)");
  attack->add_option("--lr", attack_args.lr, "Learning rate (default per attack)");
  attack->add_option("--n", attack_args.n, "Images evaluated by the autoencoder attack")->capture_default_str();
  attack->add_option("--bottleneck", attack_args.bottleneck, "Autoencoder bottleneck width")->capture_default_str();

  std::string user_a, user_b;
  int collude_n = 200;
  auto* collude = app.add_subcommand("collude", "Average two users' baked decoders and report per-bit behavior");
  collude->add_option("--user-a", user_a, "First user")->required();
  collude->add_option("--user-b", user_b, "Second user")->required();
  collude->add_option("--n", collude_n, "Images generated from the colluded decoder")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "Print a checkpoint header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
  std::optional<fs::path> manifest_dir;
  int code = kOk;
  try {
    run.config = resolve_config(g, run);
    manifest_dir = out_dir(g);
    if (gen->parsed()) cmd_gen_data(g, run, count < 0 ? run.config.corpus_size : count);
    else if (pre->parsed()) cmd_pretrain(g, run);
    else if (train->parsed()) cmd_train(g, run, pretrained.empty() ? g.checkpoint : pretrained, ablation);
    else if (reg->parsed()) cmd_register(g, run, user, note_text);
    else if (fp->parsed()) cmd_fingerprint(g, run, user);
    else if (generate->parsed()) cmd_generate(g, run, n, deterministic, generic);
    else if (detect_cmd->parsed()) cmd_detect(g, run, image, user, message, fpr);
    else if (identify_cmd->parsed()) cmd_identify(g, run, image, fpr, pad);
    else if (sweep->parsed()) cmd_sweep(g, run, baked_path, sweep_n, transforms);
    else if (attack->parsed()) cmd_attack(g, run, attack_args);
    else if (collude->parsed()) cmd_collude(g, run, user_a, user_b, collude_n);
    else if (inspect->parsed()) cmd_inspect(g, run);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    code = kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    run.outputs["diverged_at_step"] = e.step();
    code = kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kData;
  }
  if (manifest_dir) {
    run.outputs["exit_code"] = code;
    try {
      write_manifest(*manifest_dir, run);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      if (code == kOk) code = kData;
    }
  }
  return code;
}
