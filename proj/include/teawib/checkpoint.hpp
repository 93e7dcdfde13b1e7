#pragma once

// Checkpoint container:
//   "TWB1" | u32 little-endian header length | UTF-8 JSON header | f32 LE payload
// The header is {"version":1,"baked":bool,"meta":{...},"tensors":[{name,shape,offset}]}
// with offsets counted in bytes from the start of the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "teawib/tensor.hpp"

namespace teawib {

class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'W', 'B', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  bool baked = false;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw FormatError("checkpoint has no tensor named '" + name + "'");
  }

  void put(const std::string& name, Tensor value) {
    for (auto& [n, t] : tensors)
      if (n == name) {
        t = std::move(value);
        return;
      }
    tensors.emplace_back(name, std::move(value));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, t] : tensors) out.push_back(n);
    return out;
  }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline nlohmann::json checkpoint_header(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["baked"] = ckpt.baked;
  header["meta"] = ckpt.meta;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  header["tensors"] = std::move(list);
  return header;
}

inline std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  const std::string header = checkpoint_header(ckpt).dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& [name, t] : ckpt.tensors)
    for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("not a TWB1 checkpoint (bad magic)");
  const std::uint32_t header_len = detail::get_u32(bytes.data() + 4);
  if (bytes.size() < 8ull + header_len) throw FormatError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("version", 0) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.baked = header.value("baked", false);
  ckpt.meta = header.value("meta", nlohmann::json::object());
  const std::size_t payload = 8ull + header_len;
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = numel(shape);
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (payload + offset + count * sizeof(float) > bytes.size())
      throw FormatError("tensor '" + entry.at("name").get<std::string>() + "' runs past end of file");
    std::vector<float> data(count);
    const std::uint8_t* p = bytes.data() + payload + offset;
    for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)));
  }
  return ckpt;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_bytes(path, serialize(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize(read_bytes(path));
}

/// Lowercase hex SHA-256 digest.
inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

}  // namespace teawib
