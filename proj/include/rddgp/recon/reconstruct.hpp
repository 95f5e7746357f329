#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/rng.hpp"
#include "rddgp/diffusion/ddim.hpp"
#include "rddgp/recon/objective.hpp"
#include "rddgp/tomo/fbp.hpp"
#include "rddgp/tomo/geometry.hpp"

namespace rddgp::recon {

enum class InitMode { fbp, random };
enum class LrMode { cosine, constant };

inline InitMode parse_init_mode(const std::string& s) {
  if (s == "fbp") return InitMode::fbp;
  if (s == "random") return InitMode::random;
  throw ConfigError("unknown init_mode '" + s + "' (expected fbp or random)");
}
inline LrMode parse_lr_mode(const std::string& s) {
  if (s == "cosine") return LrMode::cosine;
  if (s == "constant") return LrMode::constant;
  throw ConfigError("unknown lr_mode '" + s + "' (expected cosine or constant)");
}
inline std::string to_string(InitMode m) { return m == InitMode::fbp ? "fbp" : "random"; }
inline std::string to_string(LrMode m) { return m == LrMode::cosine ? "cosine" : "constant"; }

/// z = invert(normalize(fbp(y))).
inline Image init_latent_fbp(const Sinogram& y, const tomo::ScanGeometry& geometry, const tomo::ImageGrid& grid,
                             const nn::Denoiser& f, const diffusion::DiffusionSchedule& sched,
                             const diffusion::StepPlan& plan) {
  return diffusion::ddim_invert(f, diffusion::normalize(tomo::fbp(geometry, grid, y)), sched, plan);
}

inline Image init_latent_random(const tomo::ImageGrid& grid, std::uint64_t seed) {
  const CounterRng rng(CounterRng(seed).split(0x7a));
  Image z(grid.height, grid.width);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal(i);
  return z;
}

struct TraceRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  ObjectiveTerms terms;
};

struct ReconstructionResult {
  Image x_star;
  Image z_star;
  Image z_init;
  std::vector<TraceRow> trace;
  ObjectiveTerms final_terms;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string diagnostic;
};

/// Latent optimization loop: for k = 1..maxit evaluate F and its gradient at
/// z, pick nu_k (cosine schedule or nu_max), take an Adam step. The trace row
/// for iteration k holds F at the iterate the step was taken from.
inline ReconstructionResult reconstruct(const Sinogram& y, const tomo::Projector& P,
                                        const tomo::ScanGeometry& geometry, const tomo::ImageGrid& grid,
                                        const nn::Denoiser& f, const diffusion::DiffusionSchedule& sched,
                                        const ObjectiveConfig& cfg, InitMode init_mode, LrMode lr_mode,
                                        std::uint64_t init_seed = 0) {
  const auto started = std::chrono::steady_clock::now();
  const Problem pb = make_problem(P, y, f, sched, cfg);
  ReconstructionResult res;
  res.z_init = init_mode == InitMode::fbp ? init_latent_fbp(y, geometry, grid, f, sched, pb.plan)
                                          : init_latent_random(grid, init_seed);
  Image z = res.z_init;
  AdamState adam = AdamState::fresh(z);
  try {
    for (std::size_t k = 1; k <= cfg.maxit; ++k) {
      const Evaluation e = evaluate(pb, z, true);
      res.x_star = e.x;
      const double nu = lr_mode == LrMode::cosine ? cosine_lr(k, cfg.maxit, cfg.nu_min, cfg.nu_max) : cfg.nu_max;
      res.trace.push_back({k, nu, e.terms});
      z = adam_step(adam, z, e.grad, nu);
    }
    const Evaluation last = evaluate(pb, z, false);
    res.final_terms = last.terms;
    res.x_star = last.x;
  } catch (const NumericError& err) {
    res.ok = false;
    res.diagnostic = "iteration " + std::to_string(res.trace.size() + 1) + ": " + err.what();
  }
  res.z_star = std::move(z);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

}  // namespace rddgp::recon
