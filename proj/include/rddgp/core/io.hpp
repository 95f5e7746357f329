#pragma once

// RDGP array files and 8-bit PNG export.
//
// RDGP layout (all integers little-endian):
//   "RDGP"            4 bytes magic
//   version   u16     currently 1
//   dtype     u16     1 = f64
//   rank      u32
//   dims      u32 x rank, slowest-varying first
//   payload   f64 x prod(dims), row-major, IEEE-754 little-endian

#include <png.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"

namespace rddgp::io {

inline constexpr std::array<char, 4> kArrayMagic{'R', 'D', 'G', 'P'};
inline constexpr std::uint16_t kArrayVersion = 1;
inline constexpr std::uint16_t kDtypeF64 = 1;

struct RawArray {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

/// Little-endian byte sink used by both file formats.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void put_bytes(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_string(const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  double get_f64() { return std::bit_cast<double>(get_le(8)); }
  std::string get_chars(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_chars(get_u32()); }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("unexpected end of file");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> encode_array(std::span<const std::uint32_t> dims,
                                              std::span<const double> values) {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size()) throw DimensionError("encode_array: dims do not match payload");
  ByteWriter w;
  w.put_bytes(kArrayMagic);
  w.put_u16(kArrayVersion);
  w.put_u16(kDtypeF64);
  w.put_u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put_u32(d);
  for (double v : values) w.put_f64(v);
  return w.bytes();
}

inline RawArray decode_array(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_chars(4) != std::string(kArrayMagic.data(), 4)) throw FormatError("not an RDGP file");
  if (const auto version = r.get_u16(); version != kArrayVersion)
    throw FormatError("unsupported RDGP version " + std::to_string(version));
  if (r.get_u16() != kDtypeF64) throw FormatError("unsupported RDGP dtype");
  RawArray out;
  const auto rank = r.get_u32();
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    out.dims.push_back(r.get_u32());
    count *= out.dims.back();
  }
  if (r.remaining() != count * 8) throw FormatError("RDGP payload size mismatch");
  out.values.resize(count);
  for (auto& v : out.values) v = r.get_f64();
  return out;
}

template <class Tag>
void write_field(const std::filesystem::path& path, const Field2D<Tag>& f) {
  const std::array<std::uint32_t, 2> dims{static_cast<std::uint32_t>(f.rows()),
                                          static_cast<std::uint32_t>(f.cols())};
  write_bytes(path, encode_array(dims, f.values()));
}

template <class Field>
Field read_field(const std::filesystem::path& path) {
  auto raw = decode_array(read_bytes(path));
  if (raw.dims.size() != 2) throw FormatError("expected a rank-2 RDGP array: " + path.string());
  return Field(raw.dims[0], raw.dims[1], std::move(raw.values));
}

inline Image read_image(const std::filesystem::path& path) { return read_field<Image>(path); }
inline Sinogram read_sinogram(const std::filesystem::path& path) {
  return read_field<Sinogram>(path);
}

/// 8-bit grayscale PNG; values are clamped to [lo, hi] and scaled to 0..255.
template <class Tag>
void write_png(const std::filesystem::path& path, const Field2D<Tag>& f, double lo = 0.0,
               double hi = 1.0) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_byte> row(f.cols());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(f.cols()), static_cast<png_uint_32>(f.rows()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t c = 0; c < f.cols(); ++c) {
      const double u = std::clamp((f(r, c) - lo) * scale, 0.0, 1.0);
      row[c] = static_cast<png_byte>(std::lround(u * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace rddgp::io
