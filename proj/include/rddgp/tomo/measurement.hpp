#pragma once

#include <cstdint>

#include "rddgp/core/field.hpp"
#include "rddgp/core/rng.hpp"
#include "rddgp/tomo/projector.hpp"

namespace rddgp::tomo {

struct Measurement {
  Sinogram data;
  double clean_max_abs = 0.0;  // ||K x||_inf
  double delta = 0.0;
};

/// y = K x + delta * ||K x||_inf * e, e ~ N(0, I) drawn from CounterRng(seed),
/// entry i using counter i.
inline Measurement simulate_measurements(const Projector& P, const Image& x_gt, double delta,
                                         std::uint64_t seed) {
  if (!(delta >= 0.0)) throw std::invalid_argument("simulate_measurements: delta must be >= 0");
  Measurement m;
  m.data = P.forward(x_gt);
  m.clean_max_abs = max_abs(m.data);
  m.delta = delta;
  if (delta > 0.0) {
    const CounterRng rng(seed);
    const double scale = delta * m.clean_max_abs;
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] += scale * rng.normal(i);
  }
  return m;
}

}  // namespace rddgp::tomo
