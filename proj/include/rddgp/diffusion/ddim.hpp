#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/denoiser.hpp"

namespace rddgp::diffusion {

/// [0, 1] -> [-1, 1].
inline Image normalize(const Image& x) {
  Image out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i] - 1.0;
  return out;
}

/// Clip to [-1, 1], then map back to [0, 1].
inline Image denormalize(const Image& xbar) {
  Image out(xbar.rows(), xbar.cols());
  for (std::size_t i = 0; i < xbar.size(); ++i) out[i] = 0.5 * (std::clamp(xbar[i], -1.0, 1.0) + 1.0);
  return out;
}

/// Pulls a cotangent on denormalize(xbar) back to xbar. The clip passes the
/// gradient through inside [-1, 1] and blocks it outside.
inline Image denormalize_vjp(const Image& xbar, const Image& cotangent) {
  xbar.expect_shape(cotangent, "denormalize_vjp");
  Image out(xbar.rows(), xbar.cols());
  for (std::size_t i = 0; i < xbar.size(); ++i)
    out[i] = (xbar[i] >= -1.0 && xbar[i] <= 1.0) ? 0.5 * cotangent[i] : 0.0;
  return out;
}

inline Image q_sample(const Image& x0, int t, const Image& eps, const DiffusionSchedule& sched) {
  x0.expect_shape(eps, "q_sample");
  const double a = sched[t];
  const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
  Image out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = sa * x0[i] + sb * eps[i];
  return out;
}

/// One deterministic move from step `from` to step `to` with a fixed noise
/// estimate: x' = a x + b eps_hat, where
///   a = sqrt(alpha_to / alpha_from),
///   b = sqrt(1 - alpha_to) - sqrt(alpha_to (1 - alpha_from) / alpha_from).
/// Sampling and inversion both use it; only the direction differs.
struct DdimMove {
  int from = 0, to = 0;
  double a = 1.0, b = 0.0;

  static DdimMove make(const DiffusionSchedule& sched, int from, int to) {
    const double af = sched[from], at = sched[to];
    if (af < kAlphaFloor || at < kAlphaFloor)
      throw NumericError("ddim: alpha below clip floor at step " + std::to_string(af < kAlphaFloor ? from : to));
    DdimMove m{from, to, std::sqrt(at / af), 0.0};
    m.b = std::sqrt(1.0 - at) - std::sqrt(at * (1.0 - af) / af);
    return m;
  }

  Image apply(const Image& x, const Image& eps) const {
    Image out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * eps[i];
    return out;
  }
};

/// Result of G(z). `trajectory` holds x_{tau_S} = z down to x_0; `links`
/// holds the denoiser linearization at each visited state when requested.
struct SampleResult {
  Image x0;
  std::vector<Image> trajectory;
  std::vector<DdimMove> moves;
  std::vector<nn::Linearization> links;
};

inline SampleResult ddim_sample(const nn::Denoiser& f, const Image& z, const DiffusionSchedule& sched,
                                const StepPlan& plan, bool keep_linearization = false) {
  plan.validate(sched.T());
  if (!all_finite(z)) throw NumericError("ddim_sample: non-finite latent");
  const auto chain = plan.with_origin();
  SampleResult r;
  Image x = z;
  r.trajectory.push_back(x);
  for (std::size_t i = chain.size() - 1; i > 0; --i) {
    const DdimMove move = DdimMove::make(sched, chain[i], chain[i - 1]);
    Image eps;
    if (keep_linearization) {
      r.links.push_back(f.linearize(x, chain[i]));
      eps = r.links.back().output;
    } else {
      eps = f.predict(x, chain[i]);
    }
    x = move.apply(x, eps);
    r.moves.push_back(move);
    r.trajectory.push_back(x);
  }
  r.x0 = std::move(x);
  return r;
}

/// (dG/dz)^T cotangent from a sample run with stored linearizations.
/// Each move x' = a x + b f(x) has VJP  g -> a g + J_f^T (b g).
inline Image ddim_backward(const SampleResult& run, const Image& cotangent) {
  if (run.links.size() != run.moves.size())
    throw std::logic_error("ddim_backward: sample was run without linearizations");
  run.x0.expect_shape(cotangent, "ddim_backward");
  Image g = cotangent;
  for (std::size_t k = run.moves.size(); k-- > 0;) {
    const DdimMove& m = run.moves[k];
    Image bg = g;
    bg *= m.b;
    Image next = run.links[k].vjp(bg);
    for (std::size_t i = 0; i < g.size(); ++i) next[i] += m.a * g[i];
    g = std::move(next);
  }
  return g;
}

inline Image ddim_sample_vjp(const nn::Denoiser& f, const Image& z, const DiffusionSchedule& sched,
                             const StepPlan& plan, const Image& cotangent) {
  return ddim_backward(ddim_sample(f, z, sched, plan, true), cotangent);
}

/// Deterministic inversion with the lagged noise estimate: the move into
/// step t uses eps_hat evaluated at the previous state and step.
inline Image ddim_invert(const nn::Denoiser& f, const Image& x0, const DiffusionSchedule& sched,
                         const StepPlan& plan) {
  plan.validate(sched.T());
  if (!all_finite(x0)) throw NumericError("ddim_invert: non-finite input");
  const auto chain = plan.with_origin();
  Image x = x0;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const DdimMove move = DdimMove::make(sched, chain[i - 1], chain[i]);
    x = move.apply(x, f.predict(x, chain[i - 1]));
  }
  return x;
}

}  // namespace rddgp::diffusion
