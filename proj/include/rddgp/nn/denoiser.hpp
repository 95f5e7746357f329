#pragma once

#include <functional>
#include <memory>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/unet.hpp"

namespace rddgp::nn {

/// eps_hat at one point together with its input VJP.
struct Linearization {
  Image output;
  std::function<Image(const Image&)> vjp;
};

/// Noise predictor f(x_t, t) as seen by the sampler.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Image predict(const Image& x_t, int t) const = 0;
  virtual Linearization linearize(const Image& x_t, int t) const = 0;
};

/// eps_hat = 0 everywhere.
class ZeroDenoiser final : public Denoiser {
 public:
  Image predict(const Image& x_t, int) const override { return Image(x_t.rows(), x_t.cols()); }
  Linearization linearize(const Image& x_t, int t) const override {
    return {predict(x_t, t), [](const Image& u) { return Image(u.rows(), u.cols()); }};
  }
};

/// Wraps a UNet and a fixed parameter vector.
class NetworkDenoiser final : public Denoiser {
 public:
  NetworkDenoiser(std::shared_ptr<const UNet> net, std::shared_ptr<const ParamVector> params)
      : net_(std::move(net)), params_(std::move(params)) {
    net_->check_params(*params_);
  }

  Image predict(const Image& x_t, int t) const override { return net_->forward(*params_, x_t, t, nullptr); }

  Linearization linearize(const Image& x_t, int t) const override {
    auto tape = std::make_shared<ActivationTape>();
    Image out = net_->forward(*params_, x_t, t, tape.get());
    auto net = net_;
    auto params = params_;
    return {std::move(out), [net, params, tape](const Image& u) {
              return net->backward(*params, *tape, u, nullptr);
            }};
  }

  const UNet& net() const { return *net_; }
  const ParamVector& params() const { return *params_; }

 private:
  std::shared_ptr<const UNet> net_;
  std::shared_ptr<const ParamVector> params_;
};

}  // namespace rddgp::nn
