#pragma once

// User <-> watermark bindings kept by the model owner.
//
// On disk: one JSON object per line,
//   {"user_id":..,"d_w":..,"bits":"<hex>","created_at":"<ISO-8601 UTC>","note":..}
// where "bits" reads the bit array as a big-endian binary number (first bit is
// the most significant), zero-padded on the left to ceil(d_w/4) hex digits.

#include <cctype>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "teawib/rng.hpp"
#include "teawib/tensor.hpp"

namespace teawib {

inline constexpr int kMinMessageBits = 8;
inline constexpr int kMaxCollisionRetries = 64;

struct WatermarkMessage {
  std::vector<std::uint8_t> bits;

  int length() const noexcept { return static_cast<int>(bits.size()); }

  std::string to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    const int n = length();
    const int width = (n + 3) / 4;
    std::string out(static_cast<std::size_t>(width), '0');
    // Bit i has weight 2^(n-1-i); digit j (from the right) holds weights 4j..4j+3.
    for (int i = 0; i < n; ++i) {
      if (!bits[static_cast<std::size_t>(i)]) continue;
      const int weight = n - 1 - i;
      auto& ch = out[static_cast<std::size_t>(width - 1 - weight / 4)];
      int value = (ch >= 'a') ? ch - 'a' + 10 : ch - '0';
      value |= 1 << (weight % 4);
      ch = digits[value];
    }
    return out;
  }

  static WatermarkMessage from_hex(const std::string& hex, int d_w) {
    if (d_w < 1) throw Error("message length must be positive");
    const int width = (d_w + 3) / 4;
    if (static_cast<int>(hex.size()) != width)
      throw Error("hex string '" + hex + "' has " + std::to_string(hex.size()) +
                  " digits, expected " + std::to_string(width) + " for d_w=" + std::to_string(d_w));
    WatermarkMessage m;
    m.bits.assign(static_cast<std::size_t>(d_w), 0);
    for (int j = 0; j < width; ++j) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[static_cast<std::size_t>(j)])));
      int value;
      if (c >= '0' && c <= '9') value = c - '0';
      else if (c >= 'a' && c <= 'f') value = c - 'a' + 10;
      else throw Error("invalid hex digit in '" + hex + "'");
      for (int b = 0; b < 4; ++b) {
        if (!(value & (1 << b))) continue;
        const int weight = (width - 1 - j) * 4 + b;
        if (weight >= d_w) throw Error("hex '" + hex + "' has bits beyond d_w=" + std::to_string(d_w));
        m.bits[static_cast<std::size_t>(d_w - 1 - weight)] = 1;
      }
    }
    return m;
  }

  std::string to_string() const {
    std::string s;
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  /// Bits as a float vector of 0/1 targets.
  Tensor as_targets() const {
    Tensor t(Shape{length()});
    for (int i = 0; i < length(); ++i) t[static_cast<std::size_t>(i)] = bits[static_cast<std::size_t>(i)];
    return t;
  }

  friend bool operator==(const WatermarkMessage&, const WatermarkMessage&) = default;
};

inline int hamming_distance(const WatermarkMessage& a, const WatermarkMessage& b) {
  if (a.length() != b.length()) throw ShapeError("hamming_distance: length mismatch");
  int d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i];
  return d;
}

/// m ~ Ber(0.5)^{d_w} drawn from the given stream.
inline WatermarkMessage sample_message(int d_w, Rng& rng) {
  if (d_w < kMinMessageBits)
    throw Error("watermark length must be at least " + std::to_string(kMinMessageBits) +
                " bits, got " + std::to_string(d_w));
  WatermarkMessage m;
  m.bits.resize(static_cast<std::size_t>(d_w));
  for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng.bit());
  return m;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RegistryRecord {
  std::string user_id;
  WatermarkMessage message;
  std::string created_at;
  std::string note;

  friend bool operator==(const RegistryRecord&, const RegistryRecord&) = default;
};

inline nlohmann::json to_json(const RegistryRecord& r) {
  nlohmann::json j;
  j["user_id"] = r.user_id;
  j["d_w"] = r.message.length();
  j["bits"] = r.message.to_hex();
  j["created_at"] = r.created_at;
  j["note"] = r.note;
  return j;
}

/// Ordered user/watermark table. When constructed with a path, every
/// mutating call leaves the file in sync with memory before returning.
class Registry {
 public:
  Registry() = default;
  explicit Registry(std::filesystem::path path) : path_(std::move(path)) {}

  /// Load `path` when it exists, otherwise start an empty registry backed by it.
  static Registry open(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) return load(path);
    Registry reg(path);
    reg.save();
    return reg;
  }

  static Registry load(const std::filesystem::path& path) {
    Registry reg(path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open registry '" + path.string() + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        RegistryRecord r;
        r.user_id = j.at("user_id").get<std::string>();
        const int d_w = j.at("d_w").get<int>();
        r.message = WatermarkMessage::from_hex(j.at("bits").get<std::string>(), d_w);
        r.created_at = j.at("created_at").get<std::string>();
        r.note = j.value("note", "");
        reg.insert(std::move(r));
      } catch (const std::exception& e) {
        throw FormatErrorAtLine(path, line_no, e.what());
      }
    }
    return reg;
  }

  void save() const {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw Error("cannot write registry '" + path_.string() + "'");
    for (const auto& r : records_) out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error("failed writing registry '" + path_.string() + "'");
  }

  /// Assign a fresh watermark to a new user; resamples on collision.
  const RegistryRecord& register_user(const std::string& user_id, int d_w, Rng& rng,
                                      std::string note = {}, std::string created_at = {}) {
    if (user_id.empty()) throw Error("user_id must be non-empty");
    if (by_user_.count(user_id)) throw Error("user '" + user_id + "' is already registered");
    for (int attempt = 0; attempt < kMaxCollisionRetries; ++attempt) {
      auto m = sample_message(d_w, rng);
      if (by_bits_.count(key(m))) continue;
      RegistryRecord r{user_id, std::move(m), created_at.empty() ? utc_timestamp() : created_at,
                       std::move(note)};
      append_persisted(r);
      insert(std::move(r));
      return records_.back();
    }
    throw Error("could not draw an unused " + std::to_string(d_w) + "-bit watermark after " +
                std::to_string(kMaxCollisionRetries) + " attempts");
  }

  /// Register a user with a caller-chosen message (used for padding and import).
  const RegistryRecord& add(RegistryRecord r) {
    if (by_user_.count(r.user_id)) throw Error("user '" + r.user_id + "' is already registered");
    if (by_bits_.count(key(r.message))) throw Error("watermark already assigned to another user");
    append_persisted(r);
    insert(std::move(r));
    return records_.back();
  }

  std::optional<RegistryRecord> lookup(const std::string& user_id) const {
    auto it = by_user_.find(user_id);
    if (it == by_user_.end()) return std::nullopt;
    return records_[it->second];
  }

  const std::vector<RegistryRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::filesystem::path& path() const noexcept { return path_; }

  friend bool operator==(const Registry& a, const Registry& b) { return a.records_ == b.records_; }

 private:
  static Error FormatErrorAtLine(const std::filesystem::path& path, int line, const std::string& why) {
    return Error("registry '" + path.string() + "' line " + std::to_string(line) + ": " + why);
  }

  static std::string key(const WatermarkMessage& m) {
    return std::to_string(m.length()) + ":" + m.to_hex();
  }

  void insert(RegistryRecord r) {
    if (by_user_.count(r.user_id)) throw Error("duplicate user_id '" + r.user_id + "'");
    if (!by_bits_.insert(key(r.message)).second)
      throw Error("duplicate watermark for user '" + r.user_id + "'");
    by_user_.emplace(r.user_id, records_.size());
    records_.push_back(std::move(r));
  }

  void append_persisted(const RegistryRecord& r) const {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot write registry '" + path_.string() + "'");
    out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error("failed writing registry '" + path_.string() + "'");
  }

  std::filesystem::path path_;
  std::vector<RegistryRecord> records_;
  std::unordered_map<std::string, std::size_t> by_user_;
  std::unordered_set<std::string> by_bits_;
};

}  // namespace teawib
