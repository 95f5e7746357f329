#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"

namespace rddgp::diffusion {

inline constexpr double kAlphaFloor = 1e-5;

/// Cumulative coefficients alpha_0..alpha_T.
struct DiffusionSchedule {
  std::vector<double> alpha;

  int T() const { return static_cast<int>(alpha.size()) - 1; }
  double operator[](int t) const {
    if (t < 0 || t > T()) throw std::out_of_range("schedule: step " + std::to_string(t) + " outside [0, T]");
    return alpha[static_cast<std::size_t>(t)];
  }
  bool operator==(const DiffusionSchedule&) const = default;
};

/// alpha_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) pi/2), s = 0.008,
/// clipped to [1e-5, 1].
inline DiffusionSchedule cosine_noise_schedule(int T, double s = 0.008) {
  if (T < 1) throw std::invalid_argument("cosine_noise_schedule: T must be >= 1");
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  DiffusionSchedule sched;
  sched.alpha.resize(static_cast<std::size_t>(T) + 1);
  const double f0 = f(0);
  for (int t = 0; t <= T; ++t) sched.alpha[static_cast<std::size_t>(t)] = std::clamp(f(t) / f0, kAlphaFloor, 1.0);
  sched.alpha[0] = 1.0;
  return sched;
}

/// Strictly increasing sub-sequence tau_1 < ... < tau_S of {1..T}, tau_S = T.
struct StepPlan {
  std::vector<int> steps;

  std::size_t size() const { return steps.size(); }
  int last() const { return steps.back(); }

  /// tau_i = round(i T / S).
  static StepPlan uniform(int S, int T) {
    if (S < 1 || S > T) throw ConfigError("StepPlan: need 1 <= S <= T");
    StepPlan p;
    for (int i = 1; i <= S; ++i)
      p.steps.push_back(static_cast<int>(std::lround(static_cast<double>(i) * T / S)));
    p.validate(T);
    return p;
  }

  void validate(int T) const {
    if (steps.empty()) throw ConfigError("StepPlan: empty");
    if (steps.front() < 1) throw ConfigError("StepPlan: steps must be >= 1");
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (steps[i] <= steps[i - 1]) throw ConfigError("StepPlan: steps must be strictly increasing");
    if (steps.back() != T) throw ConfigError("StepPlan: last step must equal T");
  }

  /// The plan prefixed with step 0, i.e. the full chain of states visited.
  std::vector<int> with_origin() const {
    std::vector<int> v{0};
    v.insert(v.end(), steps.begin(), steps.end());
    return v;
  }
};

}  // namespace rddgp::diffusion
