#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/core/rng.hpp"
#include "rddgp/diffusion/ddim.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/unet.hpp"

namespace rddgp::diffusion {

/// Clean images (normalized domain) with their sampled steps and noise.
struct TrainBatch {
  std::vector<Image> x0;
  std::vector<int> t;
  std::vector<Image> eps;
  std::uint64_t seed = 0;

  std::size_t size() const { return x0.size(); }
};

/// t ~ U{1..T} and eps ~ N(0, I), all drawn from `seed`.
inline TrainBatch make_batch(std::vector<Image> x0, int T, std::uint64_t seed) {
  TrainBatch b;
  b.seed = seed;
  RngStream steps(CounterRng(seed).split(0x74));
  for (std::size_t k = 0; k < x0.size(); ++k) {
    b.t.push_back(static_cast<int>(steps.next_int(1, T)));
    const CounterRng noise = CounterRng(seed).split(0x6e6f697365 + k);
    Image e(x0[k].rows(), x0[k].cols());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = noise.normal(i);
    b.eps.push_back(std::move(e));
  }
  b.x0 = std::move(x0);
  return b;
}

struct DsmResult {
  double loss = 0.0;
  nn::ParamVector grad;
};

/// Mean over the batch of ||f(x_t, t) - eps||^2 and its parameter gradient.
inline DsmResult dsm_loss_and_grad(const nn::UNet& net, const nn::ParamVector& params, const TrainBatch& batch,
                                   const DiffusionSchedule& sched) {
  if (batch.size() == 0) throw std::invalid_argument("dsm_loss_and_grad: empty batch");
  DsmResult r{0.0, params.zeros_like()};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  nn::ActivationTape tape;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Image xt = q_sample(batch.x0[k], batch.t[k], batch.eps[k], sched);
    const Image pred = net.forward(params, xt, batch.t[k], &tape);
    Image cot(pred.rows(), pred.cols());
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - batch.eps[k][i];
      sq += d * d;
      cot[i] = 2.0 * d * inv_b;
    }
    r.loss += sq * inv_b;
    net.backward(params, tape, cot, &r.grad);
  }
  return r;
}

/// Expected per-sample DSM loss of the exact MMSE predictor when the data are
/// N(mu, s2 I) with n pixels and t ~ U{1..T}: n mean_t a s2 / (a s2 + 1 - a).
inline double gaussian_dsm_minimum(const DiffusionSchedule& sched, double variance, std::size_t n_pixels) {
  double acc = 0.0;
  for (int t = 1; t <= sched.T(); ++t) {
    const double a = sched[t];
    acc += a * variance / (a * variance + 1.0 - a);
  }
  return static_cast<double>(n_pixels) * acc / sched.T();
}

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled weight decay Adam over a flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t n, AdamWConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(nn::ParamVector& p, const nn::ParamVector& g) {
    ++k_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, k_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, k_);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
      p[i] -= cfg_.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
    }
  }

  int steps() const { return k_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_, v_;
  int k_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  AdamWConfig optimizer{};
  std::uint64_t seed = 0;
};

struct TrainResult {
  nn::ParamVector params;
  std::vector<double> epoch_loss;
};

/// Returns image k of the dataset for epoch e. Lets callers draw fresh
/// augmentations per epoch without materializing them.
using DatasetSource = std::function<Image(std::size_t epoch, std::size_t index)>;

inline TrainResult train(const nn::UNet& net, nn::ParamVector params, const DatasetSource& source,
                         std::size_t dataset_size, const DiffusionSchedule& sched, const TrainConfig& cfg,
                         const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (dataset_size == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  TrainResult r;
  AdamW opt(params.size(), cfg.optimizer);
  const CounterRng root(cfg.seed);
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle(root.split(2 * epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.next_int(0, static_cast<std::int64_t>(i) - 1))]);

    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < dataset_size; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(dataset_size, start + cfg.batch_size);
      std::vector<Image> x0;
      for (std::size_t j = start; j < stop; ++j) x0.push_back(source(epoch, order[j]));
      const TrainBatch batch = make_batch(std::move(x0), sched.T(), root.split(2 * epoch + 1).bits(batch_index));
      DsmResult d = dsm_loss_and_grad(net, params, batch, sched);
      if (!std::isfinite(d.loss) || !d.grad.all_finite())
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      total += d.loss * static_cast<double>(stop - start);
      opt.step(params, d.grad);
    }
    r.epoch_loss.push_back(total / static_cast<double>(dataset_size));
    if (on_epoch) on_epoch(epoch, r.epoch_loss.back());
  }
  r.params = std::move(params);
  return r;
}

inline TrainResult train(const nn::UNet& net, nn::ParamVector params, const std::vector<Image>& dataset,
                         const DiffusionSchedule& sched, const TrainConfig& cfg) {
  return train(
      net, std::move(params), [&](std::size_t, std::size_t i) { return dataset[i]; }, dataset.size(), sched, cfg);
}

}  // namespace rddgp::diffusion
