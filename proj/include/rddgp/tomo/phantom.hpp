#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rddgp/core/field.hpp"
#include "rddgp/core/rng.hpp"
#include "rddgp/tomo/geometry.hpp"

namespace rddgp::tomo {

enum class PhantomKind { shepp_logan, random_ellipses };

inline PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "shepp_logan") return PhantomKind::shepp_logan;
  if (s == "random_ellipses") return PhantomKind::random_ellipses;
  throw std::invalid_argument("unknown phantom kind: " + s);
}

inline std::string to_string(PhantomKind k) {
  return k == PhantomKind::shepp_logan ? "shepp_logan" : "random_ellipses";
}

struct PhantomSpec {
  PhantomKind kind = PhantomKind::shepp_logan;
  std::uint64_t seed = 0;
  std::size_t n_ellipses = 6;
};

/// Ellipse in normalised coordinates ([-1, 1] across the grid, y up).
struct Ellipse {
  double intensity;
  double semi_x;
  double semi_y;
  double center_x;
  double center_y;
  double angle;  // radians, counter-clockwise

  bool contains(double x, double y) const {
    const double dx = x - center_x, dy = y - center_y;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / semi_x;
    const double v = (-dx * s + dy * c) / semi_y;
    return u * u + v * v <= 1.0;
  }
};

/// Sums the ellipses at pixel centres and clips to [0, 1].
inline Image rasterize(const ImageGrid& grid, const std::vector<Ellipse>& ellipses) {
  Image img = grid.zeros();
  const double hx = 0.5 * static_cast<double>(grid.width) * grid.pixel_size;
  const double hy = 0.5 * static_cast<double>(grid.height) * grid.pixel_size;
  for (std::size_t r = 0; r < grid.height; ++r)
    for (std::size_t c = 0; c < grid.width; ++c) {
      const double x = grid.x_center(c) / hx, y = grid.y_center(r) / hy;
      double v = 0.0;
      for (const auto& e : ellipses)
        if (e.contains(x, y)) v += e.intensity;
      img(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

/// Ten-ellipse Shepp-Logan head with the high-contrast (Toft) intensities,
/// whose values already span [0, 1].
inline Image shepp_logan(const ImageGrid& grid) {
  constexpr double deg = std::numbers::pi / 180.0;
  const std::vector<Ellipse> ellipses{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0 * deg},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0 * deg},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  return rasterize(grid, ellipses);
}

/// Random ellipses: centres uniform in a disk of radius 0.6, semi-axes in
/// [0.08, 0.45], intensities in [0.1, 0.6].
inline std::vector<Ellipse> random_ellipses(const PhantomSpec& spec) {
  RngStream rng(CounterRng(spec.seed).split(0x656c6c));
  std::vector<Ellipse> out;
  out.reserve(spec.n_ellipses);
  for (std::size_t i = 0; i < spec.n_ellipses; ++i) {
    const double radius = 0.6 * std::sqrt(rng.next_uniform());
    const double theta = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    Ellipse e{};
    e.center_x = radius * std::cos(theta);
    e.center_y = radius * std::sin(theta);
    e.semi_x = rng.next_uniform(0.08, 0.45);
    e.semi_y = rng.next_uniform(0.08, 0.45);
    e.angle = rng.next_uniform(0.0, std::numbers::pi);
    e.intensity = rng.next_uniform(0.1, 0.6);
    out.push_back(e);
  }
  return out;
}

inline Image random_ellipse_phantom(const ImageGrid& grid, const PhantomSpec& spec) {
  if (spec.kind != PhantomKind::random_ellipses)
    throw std::invalid_argument("random_ellipse_phantom: spec.kind must be random_ellipses");
  return rasterize(grid, random_ellipses(spec));
}

inline Image make_phantom(const ImageGrid& grid, const PhantomSpec& spec) {
  return spec.kind == PhantomKind::shepp_logan ? shepp_logan(grid)
                                               : random_ellipse_phantom(grid, spec);
}

}  // namespace rddgp::tomo
