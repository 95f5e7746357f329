#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "rddgp/core/error.hpp"
#include "rddgp/core/io.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/params.hpp"
#include "rddgp/nn/unet.hpp"

namespace rddgp::nn {

using io::ByteReader;
using io::ByteWriter;

inline constexpr std::array<char, 4> kWeightsMagic{'R', 'D', 'G', 'W'};
inline constexpr std::uint16_t kWeightsVersion = 1;

struct WeightsFile {
  DenoiserConfig config;
  diffusion::DiffusionSchedule schedule;
  ParamVector params;
};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) h = (h ^ b) * 0x100000001b3ULL;
  return h;
}

// Layout (little endian):
//   "RDGW" u16 version
//   config: u32 n_levels, u32 x n_levels channels, u32 blocks, u32 groups, u32 embed_dim, u8 attention
//   schedule: u32 T, f64 x (T + 1) alpha
//   manifest: u32 count, then per block: string name, u64 offset, u32 rank, u64 x rank dims
//   payload: u64 count, f64 x count
//   trailer: u64 FNV-1a of every preceding byte
inline std::vector<std::uint8_t> encode_weights(const WeightsFile& w) {
  if (!w.params.manifest_covers_payload()) throw FormatError("weights: manifest does not cover payload");
  ByteWriter out;
  out.put_bytes(kWeightsMagic);
  out.put_u16(kWeightsVersion);
  const auto& c = w.config;
  out.put_u32(static_cast<std::uint32_t>(c.n_levels));
  for (auto ch : c.channels_per_level) out.put_u32(static_cast<std::uint32_t>(ch));
  out.put_u32(static_cast<std::uint32_t>(c.blocks_per_level));
  out.put_u32(static_cast<std::uint32_t>(c.group_count));
  out.put_u32(static_cast<std::uint32_t>(c.embed_dim));
  out.put_u8(c.attention ? 1 : 0);
  out.put_u32(static_cast<std::uint32_t>(w.schedule.T()));
  for (double a : w.schedule.alpha) out.put_f64(a);
  out.put_u32(static_cast<std::uint32_t>(w.params.manifest().size()));
  for (const auto& b : w.params.manifest()) {
    out.put_string(b.name);
    out.put_u64(b.offset);
    out.put_u32(static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) out.put_u64(d);
  }
  out.put_u64(w.params.size());
  for (double v : w.params.values()) out.put_f64(v);
  std::vector<std::uint8_t> bytes = out.bytes();
  ByteWriter trailer;
  trailer.put_u64(fnv1a64(bytes));
  bytes.insert(bytes.end(), trailer.bytes().begin(), trailer.bytes().end());
  return bytes;
}

inline WeightsFile decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14) throw FormatError("weights: file too short");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.last(8));
  if (tail.get_u64() != fnv1a64(body)) throw FormatError("weights: checksum mismatch");

  ByteReader in(body);
  if (in.get_chars(4) != std::string(kWeightsMagic.begin(), kWeightsMagic.end()))
    throw FormatError("weights: bad magic");
  if (in.get_u16() != kWeightsVersion) throw FormatError("weights: unsupported version");
  WeightsFile w;
  auto& c = w.config;
  c.n_levels = in.get_u32();
  if (c.n_levels > 16) throw FormatError("weights: implausible level count");
  c.channels_per_level.clear();
  for (std::size_t i = 0; i < c.n_levels; ++i) c.channels_per_level.push_back(in.get_u32());
  c.blocks_per_level = in.get_u32();
  c.group_count = in.get_u32();
  c.embed_dim = in.get_u32();
  c.attention = in.get_u8() != 0;
  const std::uint32_t T = in.get_u32();
  if (static_cast<std::size_t>(T) + 1 > in.remaining() / 8) throw FormatError("weights: truncated schedule");
  w.schedule.alpha.resize(static_cast<std::size_t>(T) + 1);
  for (double& a : w.schedule.alpha) a = in.get_f64();

  const std::uint32_t n_blocks = in.get_u32();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    std::string name = in.get_string();
    const std::uint64_t offset = in.get_u64();
    const std::uint32_t rank = in.get_u32();
    std::vector<std::size_t> shape(rank);
    if (rank > 8) throw FormatError("weights: implausible tensor rank");
    std::size_t count = 1;
    for (auto& d : shape) {
      d = in.get_u64();
      count *= d;
    }
    if (count > in.remaining() / 8) throw FormatError("weights: block larger than payload");
    if (w.params.add_block(std::move(name), std::move(shape)) != offset)
      throw FormatError("weights: manifest offsets are not contiguous");
  }
  if (in.get_u64() != w.params.size()) throw FormatError("weights: payload size does not match manifest");
  if (in.remaining() != 8 * w.params.size()) throw FormatError("weights: payload length mismatch");
  for (double& v : w.params.values()) v = in.get_f64();
  if (!w.params.all_finite()) throw FormatError("weights: non-finite parameter");

  c.validate();
  if (!w.params.same_layout(UNet(c).layout())) throw FormatError("weights: manifest does not match config");
  return w;
}

inline void save_weights(const std::filesystem::path& path, const WeightsFile& w) {
  io::write_bytes(path, encode_weights(w));
}

inline WeightsFile load_weights(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  return decode_weights(bytes);
}

}  // namespace rddgp::nn
