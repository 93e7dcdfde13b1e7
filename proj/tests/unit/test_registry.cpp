#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "teawib/registry.hpp"

namespace teawib {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("teawib_registry_" + name);
  fs::remove(p);
  return p;
}

TEST(SampleMessage, FixedSeedIsReproducible) {
  Rng a(7), b(7);
  auto m = sample_message(16, a);
  EXPECT_EQ(m, sample_message(16, b));
  EXPECT_EQ(m.length(), 16);
  for (auto bit : m.bits) EXPECT_TRUE(bit == 0 || bit == 1);
}

TEST(SampleMessage, DistinctSeedsDiffer) {
  Rng a(7), b(8);
  EXPECT_GT(hamming_distance(sample_message(48, a), sample_message(48, b)), 0);
}

TEST(SampleMessage, TooShortRejected) {
  Rng rng(1);
  EXPECT_THROW(sample_message(7, rng), Error);
  EXPECT_NO_THROW(sample_message(8, rng));
}

TEST(SampleMessage, PerPositionMeansNearHalf) {
  Rng rng(3);
  const int n = 100000, d = 48;
  std::vector<long> ones(d, 0);
  for (int s = 0; s < n; ++s) {
    auto m = sample_message(d, rng);
    for (int i = 0; i < d; ++i) ones[static_cast<std::size_t>(i)] += m.bits[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < d; ++i) {
    const double mean = static_cast<double>(ones[static_cast<std::size_t>(i)]) / n;
    EXPECT_GE(mean, 0.49) << "position " << i;
    EXPECT_LE(mean, 0.51) << "position " << i;
  }
}

TEST(SampleMessage, ChiSquareDoesNotRejectUniformity) {
  // Critical values of chi^2 at p = 0.001.
  const std::pair<int, double> cases[] = {{16, 39.2524}, {48, 84.0371}};
  Rng rng(11);
  for (auto [d, critical] : cases) {
    const int n = 20000;
    std::vector<long> ones(static_cast<std::size_t>(d), 0);
    for (int s = 0; s < n; ++s) {
      auto m = sample_message(d, rng);
      for (int i = 0; i < d; ++i) ones[static_cast<std::size_t>(i)] += m.bits[static_cast<std::size_t>(i)];
    }
    double chi2 = 0;
    const double expected = n / 2.0;
    for (long c : ones) {
      chi2 += (c - expected) * (c - expected) / expected;
      chi2 += ((n - c) - expected) * ((n - c) - expected) / expected;
    }
    EXPECT_LT(chi2, critical) << "d_w=" << d;
  }
}

TEST(Hex, MostSignificantBitFirst) {
  WatermarkMessage m;
  m.bits = {1, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_EQ(m.to_hex(), "81");
  m.bits = {0, 0, 0, 0, 1, 0, 1, 0, 1, 1};  // 0b0000101011 = 0x02b
  EXPECT_EQ(m.to_hex(), "02b");
  EXPECT_EQ(WatermarkMessage::from_hex("02b", 10), m);
}

TEST(Hex, RoundTripsRandomMessages) {
  Rng rng(5);
  for (int d : {8, 9, 13, 16, 31, 48, 64}) {
    auto m = sample_message(d, rng);
    EXPECT_EQ(WatermarkMessage::from_hex(m.to_hex(), d), m) << d;
    EXPECT_EQ(static_cast<int>(m.to_hex().size()), (d + 3) / 4);
  }
}

TEST(Hex, RejectsBadInput) {
  EXPECT_THROW(WatermarkMessage::from_hex("zz", 8), Error);
  EXPECT_THROW(WatermarkMessage::from_hex("123", 8), Error);
  EXPECT_THROW(WatermarkMessage::from_hex("4", 2), Error);  // bit beyond d_w
}

TEST(Registry, RegisterAndLookup) {
  Registry reg;
  Rng rng(1);
  reg.register_user("john", 16, rng);
  EXPECT_EQ(reg.size(), 1u);
  auto r = reg.lookup("john");
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->user_id, "john");
  EXPECT_EQ(r->message.length(), 16);
  EXPECT_FALSE(reg.lookup("jane").has_value());
}

TEST(Registry, DuplicateUserRejected) {
  Registry reg;
  Rng rng(1);
  reg.register_user("john", 16, rng);
  EXPECT_THROW(reg.register_user("john", 16, rng), Error);
  EXPECT_EQ(reg.size(), 1u);
}

TEST(Registry, DuplicateMessageRejectedOnAdd) {
  Registry reg;
  Rng rng(2);
  const auto& a = reg.register_user("a", 16, rng);
  RegistryRecord clash{"b", a.message, "2024-01-01T00:00:00Z", ""};
  EXPECT_THROW(reg.add(clash), Error);
}

TEST(Registry, CollisionsAreResampled) {
  // 8-bit messages: 256 possibilities, so 200 users force many resamples.
  Registry reg;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) reg.register_user("u" + std::to_string(i), 8, rng);
  std::set<std::string> seen;
  for (const auto& r : reg.records()) EXPECT_TRUE(seen.insert(r.message.to_hex()).second);
}

TEST(Registry, ExhaustedSpaceErrors) {
  Registry reg;
  Rng rng(4);
  for (int v = 0; v < 256; ++v) {
    WatermarkMessage m;
    for (int b = 7; b >= 0; --b) m.bits.push_back(static_cast<std::uint8_t>((v >> b) & 1));
    reg.add({"u" + std::to_string(v), m, "2024-01-01T00:00:00Z", ""});
  }
  EXPECT_THROW(reg.register_user("late", 8, rng), Error);
}

TEST(Registry, ThousandRegistrationsAreDistinct) {
  Registry reg;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) reg.register_user("user" + std::to_string(i), 48, rng);
  std::set<std::vector<std::uint8_t>> seen;
  for (const auto& r : reg.records()) seen.insert(r.message.bits);
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Registry, EmptyRoundTrip) {
  auto path = scratch("empty.jsonl");
  Registry::open(path);
  EXPECT_TRUE(Registry::load(path).empty());
  fs::remove(path);
}

TEST(Registry, DiskMatchesMemoryAfterEveryCall) {
  auto path = scratch("sync.jsonl");
  auto reg = Registry::open(path);
  Rng rng(6);
  for (const char* id : {"alice", "bob", "carol"}) {
    reg.register_user(id, 48, rng, std::string("note for ") + id);
    EXPECT_EQ(Registry::load(path), reg);
  }
  auto back = Registry::load(path);
  EXPECT_EQ(back.records(), reg.records());
  EXPECT_EQ(back.lookup("bob"), reg.lookup("bob"));
  fs::remove(path);
}

TEST(Registry, SaveRewritesFile) {
  auto path = scratch("rewrite.jsonl");
  Registry reg(path);
  Rng rng(7);
  reg.register_user("x", 16, rng);
  reg.save();
  EXPECT_EQ(Registry::load(path), reg);
  fs::remove(path);
}

TEST(Registry, TruncatedFileNamesLine) {
  auto path = scratch("trunc.jsonl");
  {
    auto reg = Registry::open(path);
    Rng rng(8);
    for (int i = 0; i < 3; ++i) reg.register_user("u" + std::to_string(i), 16, rng);
  }
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  text.resize(text.size() - 15);
  {
    std::ofstream out(path, std::ios::trunc);
    out << text;
  }
  try {
    Registry::load(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  fs::remove(path);
}

TEST(Registry, LineFormat) {
  WatermarkMessage m;
  m.bits = {1, 1, 1, 1, 0, 0, 0, 0, 1, 0, 1, 0};
  auto j = to_json(RegistryRecord{"john", m, "2024-05-01T12:00:00Z", "n"});
  EXPECT_EQ(j.at("bits"), "f0a");
  EXPECT_EQ(j.at("d_w"), 12);
  EXPECT_EQ(j.at("user_id"), "john");
  EXPECT_EQ(j.at("created_at"), "2024-05-01T12:00:00Z");
}

TEST(Registry, UnwritablePathErrors) {
  Registry reg("/nonexistent_dir_teawib/registry.jsonl");
  Rng rng(9);
  EXPECT_THROW(reg.register_user("a", 16, rng), Error);
  EXPECT_TRUE(reg.empty());
}

}  // namespace
}  // namespace teawib
