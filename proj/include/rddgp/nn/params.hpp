#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"

namespace rddgp::nn {

/// One named tensor inside a ParamVector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  bool operator==(const ParamBlock&) const = default;
};

/// Flat parameter storage plus the manifest that maps names to slices.
/// Gradients use the same type and layout.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a block to the layout and returns its offset.
  std::size_t add_block(std::string name, std::vector<std::size_t> shape) {
    ParamBlock b{std::move(name), values_.size(), std::move(shape)};
    values_.resize(values_.size() + b.size(), 0.0);
    manifest_.push_back(std::move(b));
    return manifest_.back().offset;
  }

  ParamVector zeros_like() const {
    ParamVector g = *this;
    std::fill(g.values_.begin(), g.values_.end(), 0.0);
    return g;
  }

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<ParamBlock>& manifest() const { return manifest_; }

  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : manifest_)
      if (b.name == name) return b;
    throw std::out_of_range("no parameter block named " + name);
  }
  std::span<double> slice(const std::string& name) {
    const auto& b = block(name);
    return {values_.data() + b.offset, b.size()};
  }
  std::span<const double> slice(const std::string& name) const {
    const auto& b = block(name);
    return {values_.data() + b.offset, b.size()};
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool same_layout(const ParamVector& other) const { return manifest_ == other.manifest_; }

  /// True when the manifest tiles [0, size()) exactly once, in order.
  bool manifest_covers_payload() const {
    std::size_t next = 0;
    for (const auto& b : manifest_) {
      if (b.offset != next) return false;
      next += b.size();
    }
    return next == values_.size();
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// FNV-1a style hash over 64-bit payload words; used to detect stale
  /// activation tapes.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values_) {
      std::uint64_t w;
      std::memcpy(&w, &v, sizeof w);
      h = (h ^ w) * 0x100000001b3ULL;
    }
    return h ^ values_.size();
  }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<ParamBlock> manifest_;
  std::vector<double> values_;
};

}  // namespace rddgp::nn
