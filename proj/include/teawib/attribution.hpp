#pragma once

// Detection (one claimed message) and identification (best of a registry).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teawib/nets.hpp"
#include "teawib/stats.hpp"

namespace teawib {

struct DetectionVerdict {
  int matched_bits = 0;
  int threshold = 0;
  int k = 0;
  double fpr_at_tau = 1.0;  // P(M >= threshold) under H0
  bool detected = false;
};

struct IdentificationVerdict {
  std::string best_user_id;
  int best_score = 0;
  int threshold = 0;
  long candidates = 0;
  double global_fpr = 1.0;  // 1 - (1 - P(M >= threshold))^candidates
  bool identified = false;
};

inline DetectionVerdict detect_message(const WatermarkMessage& extracted, const WatermarkMessage& claimed, int tau) {
  const int k = claimed.length();
  if (tau < 0 || tau > k + 1) throw Error("detect: threshold " + std::to_string(tau) + " outside [0, k+1]");
  DetectionVerdict v;
  v.k = k;
  v.threshold = tau;
  v.matched_bits = matching_bits(extracted, claimed);
  v.fpr_at_tau = detection_fpr(tau, k);
  v.detected = v.matched_bits >= tau;
  return v;
}

template <typename T>
DetectionVerdict detect(BasicWatermarkExtractor<T>& extractor, const BasicTensor<T>& image,
                        const WatermarkMessage& m, int tau) {
  return detect_message(extract_message(extractor, image), m, tau);
}

/// Registry messages packed for fast scoring (d_w <= 64).
class CandidateSet {
 public:
  explicit CandidateSet(const Registry& registry) {
    if (registry.empty()) throw Error("identify: registry is empty");
    k_ = registry.records().front().message.length();
    if (k_ > 64) throw Error("identify: messages longer than 64 bits are not supported");
    for (const auto& r : registry.records()) {
      if (r.message.length() != k_) throw Error("identify: registry mixes message lengths");
      ids_.push_back(r.user_id);
      packed_.push_back(pack(r.message));
    }
  }

  static std::uint64_t pack(const WatermarkMessage& m) {
    std::uint64_t v = 0;
    for (int i = 0; i < m.length(); ++i) v |= static_cast<std::uint64_t>(m.bits[static_cast<std::size_t>(i)] & 1) << i;
    return v;
  }

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return ids_.size(); }

  /// Highest-scoring candidate; the earliest registered wins ties.
  IdentificationVerdict identify(const WatermarkMessage& extracted, int tau) const {
    if (extracted.length() != k_)
      throw ShapeError("identify: extracted " + std::to_string(extracted.length()) + " bits, registry holds " +
                       std::to_string(k_));
    const std::uint64_t e = pack(extracted);
    int best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < packed_.size(); ++i) {
      const int score = k_ - std::popcount(e ^ packed_[i]);
      if (score > best) {
        best = score;
        arg = i;
      }
    }
    IdentificationVerdict v;
    v.best_user_id = ids_[arg];
    v.best_score = best;
    v.threshold = tau;
    v.candidates = static_cast<long>(packed_.size());
    v.global_fpr = global_fpr_from(detection_fpr(tau, k_), v.candidates);
    v.identified = best >= tau;
    return v;
  }

 private:
  int k_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::uint64_t> packed_;
};

template <typename T>
IdentificationVerdict identify(BasicWatermarkExtractor<T>& extractor, const BasicTensor<T>& image,
                               const Registry& registry, int tau) {
  return CandidateSet(registry).identify(extract_message(extractor, image), tau);
}

struct RocPoint {
  int tau = 0;
  double tpr_empirical = 0;
  double fpr_closed_form = 0;  // P(M >= tau)
};

/// TPR from the matching counts of genuine images and closed-form FPR for tau = 0..k.
inline std::vector<RocPoint> roc_from_scores(const std::vector<int>& scores, int k) {
  if (scores.empty()) throw Error("roc_sweep: empty image set");
  std::vector<RocPoint> out;
  for (int tau = 0; tau <= k; ++tau) {
    long hits = 0;
    for (int s : scores) hits += s >= tau;
    out.push_back({tau, static_cast<double>(hits) / static_cast<double>(scores.size()), detection_fpr(tau, k)});
  }
  return out;
}

template <typename T>
std::vector<RocPoint> roc_sweep(BasicWatermarkExtractor<T>& extractor,
                                const std::vector<std::pair<BasicTensor<T>, WatermarkMessage>>& set, int k) {
  std::vector<int> scores;
  for (const auto& [image, m] : set) {
    if (m.length() != k) throw ShapeError("roc_sweep: message length differs from k");
    scores.push_back(matching_bits(extract_message(extractor, image), m));
  }
  return roc_from_scores(scores, k);
}

inline nlohmann::json to_json(const DetectionVerdict& v) {
  return {{"matched_bits", v.matched_bits}, {"threshold", v.threshold}, {"k", v.k},
          {"fpr_at_tau", v.fpr_at_tau},     {"detected", v.detected}};
}

inline nlohmann::json to_json(const IdentificationVerdict& v) {
  return {{"best_user_id", v.best_user_id}, {"best_score", v.best_score}, {"threshold", v.threshold},
          {"candidates", v.candidates},     {"global_fpr", v.global_fpr}, {"identified", v.identified}};
}

inline void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(12);
  out << "tau,tpr,fpr\n";
  for (const auto& p : roc) out << p.tau << ',' << p.tpr_empirical << ',' << p.fpr_closed_form << '\n';
}

}  // namespace teawib
