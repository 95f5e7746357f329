#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/diffusion/ddim.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/denoiser.hpp"
#include "rddgp/tomo/projector.hpp"

namespace rddgp::recon {

template <class Tag>
struct ValueGrad {
  double value = 0.0;
  Field2D<Tag> grad;
};

/// sum z_i^2 and 2 z.
inline ValueGrad<ImageTag> tikhonov(const Image& z) {
  ValueGrad<ImageTag> r{squared_norm(z), z};
  r.grad *= 2.0;
  return r;
}

/// sum over pixels of sqrt(Dh^2 + Dv^2 + beta^2) - beta with forward
/// differences and zero difference past the last row/column.
inline ValueGrad<ImageTag> tv_smooth(const Image& x, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("tv_smooth: beta must be > 0");
  const std::size_t H = x.rows(), W = x.cols();
  ValueGrad<ImageTag> r{0.0, Image(H, W)};
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double dh = j + 1 < W ? x(i, j + 1) - x(i, j) : 0.0;
      const double dv = i + 1 < H ? x(i + 1, j) - x(i, j) : 0.0;
      const double s = std::sqrt(dh * dh + dv * dv + beta * beta);
      r.value += s - beta;
      r.grad(i, j) -= (dh + dv) / s;
      if (j + 1 < W) r.grad(i, j + 1) += dh / s;
      if (i + 1 < H) r.grad(i + 1, j) += dv / s;
    }
  return r;
}

/// nu_k = nu_min + (nu_max - nu_min)(1 + cos(pi k / maxit)) / 2.
inline double cosine_lr(std::size_t k, std::size_t maxit, double nu_min, double nu_max) {
  if (maxit == 0 || k > maxit) throw std::invalid_argument("cosine_lr: need 0 <= k <= maxit, maxit >= 1");
  if (k == 0) return nu_max;
  if (k == maxit) return nu_min;
  const double c = std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(maxit));
  return nu_min + 0.5 * (nu_max - nu_min) * (1.0 + c);
}

struct AdamState {
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Image m, v;
  int k = 0;

  static AdamState fresh(const Image& like) { return {Image(like.rows(), like.cols()), Image(like.rows(), like.cols()), 0}; }
};

/// Bias-corrected Adam step with step size nu. Updates `state` in place.
inline Image adam_step(AdamState& state, const Image& z, const Image& grad, double nu) {
  z.expect_shape(grad, "adam_step");
  if (state.m.empty()) state = AdamState::fresh(z);
  z.expect_shape(state.m, "adam_step state");
  ++state.k;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, state.k);
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, state.k);
  Image out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * grad[i];
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * grad[i] * grad[i];
    out[i] = z[i] - nu * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + AdamState::kEps);
  }
  return out;
}

struct ObjectiveConfig {
  double lambda1 = 1e-4;
  double lambda2 = 1e-3;
  double tv_beta = 1e-3;
  double nu_max = 1e-2;
  double nu_min = 1e-5;
  std::size_t maxit = 300;
  std::size_t steps = 8;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("objective: lambdas must be >= 0");
    if (!(tv_beta > 0.0)) throw ConfigError("objective: tv_beta must be > 0");
    if (!(nu_min > 0.0) || nu_max < nu_min) throw ConfigError("objective: need nu_max >= nu_min > 0");
    if (maxit < 1) throw ConfigError("objective: maxit must be >= 1");
    if (steps < 1) throw ConfigError("objective: steps must be >= 1");
  }
};

/// The three terms of F kept apart for the trace.
struct ObjectiveTerms {
  double fidelity = 0.0;
  double tikhonov = 0.0;
  double tv = 0.0;
  double total() const { return fidelity + tikhonov + tv; }
};

/// Everything F depends on besides z.
struct Problem {
  const tomo::Projector& projector;
  const Sinogram& y;
  const nn::Denoiser& denoiser;
  const diffusion::DiffusionSchedule& schedule;
  diffusion::StepPlan plan;
  ObjectiveConfig config;
};

inline Problem make_problem(const tomo::Projector& P, const Sinogram& y, const nn::Denoiser& f,
                            const diffusion::DiffusionSchedule& sched, const ObjectiveConfig& cfg) {
  cfg.validate();
  if (y.size() != P.rows()) throw DimensionError("objective: sinogram does not match projector");
  return {P, y, f, sched, diffusion::StepPlan::uniform(static_cast<int>(cfg.steps), sched.T()), cfg};
}

struct Evaluation {
  ObjectiveTerms terms;
  Image xbar;  // G(z), normalized domain
  Image x;     // denormalize(G(z))
  Image grad;  // dF/dz, empty unless requested
};

/// F(z) = 1/2 ||K x - y||^2 + lambda1 ||z||^2 + lambda2 TV(x), x = denormalize(G(z)).
inline Evaluation evaluate(const Problem& pb, const Image& z, bool want_grad) {
  const auto& cfg = pb.config;
  auto run = diffusion::ddim_sample(pb.denoiser, z, pb.schedule, pb.plan, want_grad);
  Evaluation e;
  e.xbar = run.x0;
  e.x = diffusion::denormalize(e.xbar);
  Sinogram r = pb.projector.forward(e.x);
  r -= pb.y;
  e.terms.fidelity = 0.5 * squared_norm(r);
  const auto tik = tikhonov(z);
  e.terms.tikhonov = cfg.lambda1 * tik.value;
  ValueGrad<ImageTag> tv{0.0, Image()};
  if (cfg.lambda2 > 0.0) {
    tv = tv_smooth(e.x, cfg.tv_beta);
    e.terms.tv = cfg.lambda2 * tv.value;
  }
  if (!std::isfinite(e.terms.total()))
    throw NumericError("objective: non-finite value (fidelity " + std::to_string(e.terms.fidelity) + ", tikhonov " +
                       std::to_string(e.terms.tikhonov) + ", tv " + std::to_string(e.terms.tv) + ")");
  if (!want_grad) return e;

  Image gx = pb.projector.adjoint(r);
  if (cfg.lambda2 > 0.0)
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += cfg.lambda2 * tv.grad[i];
  e.grad = diffusion::ddim_backward(run, diffusion::denormalize_vjp(e.xbar, gx));
  for (std::size_t i = 0; i < z.size(); ++i) e.grad[i] += cfg.lambda1 * tik.grad[i];
  if (!all_finite(e.grad)) throw NumericError("objective: non-finite gradient");
  return e;
}

inline double objective(const Problem& pb, const Image& z) { return evaluate(pb, z, false).terms.total(); }

inline Image objective_grad(const Problem& pb, const Image& z) { return evaluate(pb, z, true).grad; }

}  // namespace rddgp::recon
