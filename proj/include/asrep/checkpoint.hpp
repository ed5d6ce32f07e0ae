#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrep/encoder.hpp"

namespace asrep {

// Checkpoint layout: magic "ASREP", then seven little-endian uint32 fields
// (format version, |V|, d, n, L, h, d_ff), then every parameter array as
// little-endian float32 in the ModelParams flat order documented in
// encoder.hpp. Round-trips are bit-exact for float parameters.

inline constexpr char kCheckpointMagic[5] = {'A', 'S', 'R', 'E', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const std::string& path) {
  std::string buf;
  buf.reserve(32 + params.flat.size() * 4);
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.vocab_size));
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.d));
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.n));
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.layers));
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.heads));
  detail::put_u32(buf, static_cast<uint32_t>(params.dims.d_ff));
  for (const T value : params.flat) {
    detail::put_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(value)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const size_t header = sizeof(kCheckpointMagic) + 7 * 4;
  if (buf.size() < header) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  if (std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  size_t at = sizeof(kCheckpointMagic);
  auto next_u32 = [&]() {
    const uint32_t v = detail::get_u32(bytes + at);
    at += 4;
    return v;
  };
  const uint32_t version = next_u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  }
  ModelDims dims;
  dims.vocab_size = static_cast<int>(next_u32());
  dims.d = static_cast<int>(next_u32());
  dims.n = static_cast<int>(next_u32());
  dims.layers = static_cast<int>(next_u32());
  dims.heads = static_cast<int>(next_u32());
  dims.d_ff = static_cast<int>(next_u32());
  ModelParams<T> params = ModelParams<T>::make(dims);
  const size_t expected = header + params.flat.size() * 4;
  if (buf.size() != expected) {
    throw std::runtime_error("load_checkpoint: " + path + " holds " + std::to_string(buf.size()) +
                             " bytes, expected " + std::to_string(expected));
  }
  for (size_t i = 0; i < params.flat.size(); ++i) {
    params.flat[i] = static_cast<T>(std::bit_cast<float>(detail::get_u32(bytes + at)));
    at += 4;
  }
  return params;
}

}  // namespace asrep
