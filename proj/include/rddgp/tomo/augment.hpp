#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "rddgp/core/field.hpp"
#include "rddgp/core/rng.hpp"

namespace rddgp::tomo {

/// One draw of the training-time augmentation: rotation + isotropic scale +
/// shift about the image centre, then additive Gaussian noise.
struct AugmentParams {
  double rotation = 0.0;  // radians
  double scale = 1.0;
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

struct AugmentRanges {
  double max_rotation = 15.0 * std::numbers::pi / 180.0;
  double max_scale_deviation = 0.08;
  double max_shift = 2.0;
  double max_noise_std = 0.02;
};

inline AugmentParams draw_augment(std::uint64_t seed, const AugmentRanges& ranges = {}) {
  RngStream rng(CounterRng(seed).split(0x617567));
  AugmentParams p;
  p.rotation = rng.next_uniform(-ranges.max_rotation, ranges.max_rotation);
  p.scale = 1.0 + rng.next_uniform(-ranges.max_scale_deviation, ranges.max_scale_deviation);
  p.shift_x = rng.next_uniform(-ranges.max_shift, ranges.max_shift);
  p.shift_y = rng.next_uniform(-ranges.max_shift, ranges.max_shift);
  p.noise_std = rng.next_uniform(0.0, ranges.max_noise_std);
  p.noise_seed = rng.next_bits();
  return p;
}

/// Inverse-maps each output pixel into the input and samples bilinearly
/// (zero outside), adds noise, clips to [0, 1].
inline Image apply_augment(const Image& x, const AugmentParams& p) {
  const auto H = x.rows(), W = x.cols();
  const double cy = 0.5 * static_cast<double>(H - 1), cx = 0.5 * static_cast<double>(W - 1);
  const double c = std::cos(p.rotation), s = std::sin(p.rotation);
  auto at = [&](std::int64_t r, std::int64_t col) {
    if (r < 0 || col < 0 || r >= static_cast<std::int64_t>(H) || col >= static_cast<std::int64_t>(W))
      return 0.0;
    return x(static_cast<std::size_t>(r), static_cast<std::size_t>(col));
  };
  Image out(H, W);
  const CounterRng noise(p.noise_seed);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t col = 0; col < W; ++col) {
      const double u = static_cast<double>(col) - cx - p.shift_x;
      const double v = static_cast<double>(r) - cy - p.shift_y;
      const double src_c = cx + (c * u + s * v) / p.scale;
      const double src_r = cy + (-s * u + c * v) / p.scale;
      const double fr = std::floor(src_r), fc = std::floor(src_c);
      const double ar = src_r - fr, ac = src_c - fc;
      const auto r0 = static_cast<std::int64_t>(fr), c0 = static_cast<std::int64_t>(fc);
      double v00 = at(r0, c0) * (1.0 - ar) * (1.0 - ac);
      if (ac > 0.0) v00 += at(r0, c0 + 1) * (1.0 - ar) * ac;
      if (ar > 0.0) v00 += at(r0 + 1, c0) * ar * (1.0 - ac);
      if (ar > 0.0 && ac > 0.0) v00 += at(r0 + 1, c0 + 1) * ar * ac;
      double value = v00;
      if (p.noise_std > 0.0) value += p.noise_std * noise.normal(r * W + col);
      out(r, col) = std::clamp(value, 0.0, 1.0);
    }
  return out;
}

inline Image augment(const Image& x, std::uint64_t seed, const AugmentRanges& ranges = {}) {
  return apply_augment(x, draw_augment(seed, ranges));
}

}  // namespace rddgp::tomo
