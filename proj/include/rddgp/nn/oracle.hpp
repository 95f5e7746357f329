#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/denoiser.hpp"

namespace rddgp::nn {

/// p_data = N(mean, variance I) in the normalized image domain.
struct GaussianPrior {
  Image mean;
  double variance = 1.0;

  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance)) throw std::invalid_argument("GaussianPrior: variance must be > 0");
    if (mean.empty()) throw DimensionError("GaussianPrior: empty mean");
  }
};

/// Pixelwise mean and pooled per-pixel variance of a set of images.
inline GaussianPrior fit_gaussian_prior(const std::vector<Image>& samples, double min_variance = 1e-6) {
  if (samples.size() < 2) throw std::invalid_argument("fit_gaussian_prior: need at least two samples");
  GaussianPrior p{Image(samples[0].rows(), samples[0].cols()), 0.0};
  for (const auto& s : samples) {
    s.expect_shape(p.mean, "fit_gaussian_prior");
    p.mean += s;
  }
  p.mean *= 1.0 / static_cast<double>(samples.size());
  double ss = 0.0;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.size(); ++i) ss += (s[i] - p.mean[i]) * (s[i] - p.mean[i]);
  p.variance = std::max(min_variance, ss / static_cast<double>((samples.size() - 1) * p.mean.size()));
  return p;
}

/// d eps_hat / d x_t, a scalar multiple of the identity.
inline double gaussian_oracle_gain(const GaussianPrior& prior, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) throw NumericError("gaussian oracle: alpha must lie in (0, 1]");
  return std::sqrt(1.0 - alpha) / (alpha * prior.variance + 1.0 - alpha);
}

/// MMSE noise prediction under the Gaussian prior:
///   eps_hat = sqrt(1 - a) (x_t - sqrt(a) mu) / (a s^2 + 1 - a).
/// This is the reduced form of (x_t - sqrt(a) E[x0 | x_t]) / sqrt(1 - a); it stays
/// finite at a = 1 (value 0), which inversion needs at t = 0.
inline Image gaussian_oracle_denoiser(const GaussianPrior& prior, const diffusion::DiffusionSchedule& sched,
                                      const Image& x_t, int t) {
  prior.validate();
  x_t.expect_shape(prior.mean, "gaussian_oracle_denoiser");
  const double a = sched[t];
  const double gain = gaussian_oracle_gain(prior, a);
  const double sa = std::sqrt(a);
  Image out(x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gain * (x_t[i] - sa * prior.mean[i]);
  return out;
}

class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(GaussianPrior prior, diffusion::DiffusionSchedule sched)
      : prior_(std::move(prior)), sched_(std::move(sched)) {
    prior_.validate();
  }

  Image predict(const Image& x_t, int t) const override { return gaussian_oracle_denoiser(prior_, sched_, x_t, t); }

  Linearization linearize(const Image& x_t, int t) const override {
    const double gain = gaussian_oracle_gain(prior_, sched_[t]);
    return {predict(x_t, t), [gain](const Image& u) {
              Image g = u;
              g *= gain;
              return g;
            }};
  }

  const GaussianPrior& prior() const { return prior_; }
  const diffusion::DiffusionSchedule& schedule() const { return sched_; }

 private:
  GaussianPrior prior_;
  diffusion::DiffusionSchedule sched_;
};

}  // namespace rddgp::nn
