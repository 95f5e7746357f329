#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/core/rng.hpp"
#include "rddgp/nn/layers.hpp"
#include "rddgp/nn/params.hpp"

namespace rddgp::nn {

struct DenoiserConfig {
  std::size_t n_levels = 2;
  std::vector<std::size_t> channels_per_level{16, 32};
  std::size_t blocks_per_level = 2;
  std::size_t group_count = 4;
  std::size_t embed_dim = 8;
  /// Reserved for self-attention at the deepest level; not implemented.
  bool attention = false;

  void validate() const {
    if (n_levels < 1) throw ConfigError("denoiser: n_levels must be >= 1");
    if (channels_per_level.size() != n_levels)
      throw ConfigError("denoiser: channels_per_level must list one width per level");
    if (blocks_per_level < 1) throw ConfigError("denoiser: blocks_per_level must be >= 1");
    if (group_count < 1) throw ConfigError("denoiser: group_count must be >= 1");
    for (auto c : channels_per_level)
      if (c == 0 || c % group_count != 0)
        throw ConfigError("denoiser: every channel width must be divisible by group_count");
    if (embed_dim < 2 || embed_dim % 2 != 0) throw ConfigError("denoiser: embed_dim must be even and >= 2");
    if (attention) throw ConfigError("denoiser: attention layers are not supported");
  }
  bool operator==(const DenoiserConfig&) const = default;
};

/// Sinusoidal embedding of step t broadcast over an h x w plane:
/// channel 2i = sin(t / 10000^(2i/E)), channel 2i+1 = cos(same).
inline Tensor time_embedding(int t, std::size_t embed_dim, std::size_t h, std::size_t w) {
  if (t < 0) throw std::invalid_argument("time_embedding: t must be >= 0");
  Tensor e(embed_dim, h, w);
  for (std::size_t i = 0; i < embed_dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(embed_dim));
    const double a = static_cast<double>(t) * freq;
    const double s = std::sin(a), c = std::cos(a);
    std::fill_n(e.channel(2 * i), e.plane(), s);
    std::fill_n(e.channel(2 * i + 1), e.plane(), c);
  }
  return e;
}

struct ResBlock {
  GroupNorm n1;
  Conv2d c1;
  GroupNorm n2;
  Conv2d c2;
  bool has_skip = false;
  Conv2d skip;

  struct Tape {
    Tensor x;
    GroupNorm::Saved s1;
    Tensor a1, h1;
    GroupNorm::Saved s2;
    Tensor a2, h2;
  };

  static ResBlock create(ParamVector& p, const std::string& name, std::size_t in, std::size_t out,
                         std::size_t groups) {
    ResBlock b;
    b.n1 = GroupNorm::create(p, name + ".norm1", in, groups);
    b.c1 = Conv2d::create(p, name + ".conv1", in, out);
    b.n2 = GroupNorm::create(p, name + ".norm2", out, groups);
    b.c2 = Conv2d::create(p, name + ".conv2", out, out);
    if (in != out) {
      b.has_skip = true;
      b.skip = Conv2d::create(p, name + ".skip", in, out, 1);
    }
    return b;
  }

  Tensor forward(const ParamVector& p, const Tensor& x, Tape& t) const {
    t.x = x;
    t.a1 = n1.forward(p, x, t.s1);
    t.h1 = gelu_forward(t.a1);
    const Tensor mid = c1.forward(p, t.h1);
    t.a2 = n2.forward(p, mid, t.s2);
    t.h2 = gelu_forward(t.a2);
    Tensor y = c2.forward(p, t.h2);
    add_inplace(y, has_skip ? skip.forward(p, x) : x);
    return y;
  }

  Tensor backward(const ParamVector& p, const Tape& t, const Tensor& dy, ParamVector* grad) const {
    Tensor d = c2.backward(p, t.h2, dy, grad);
    d = gelu_backward(t.a2, d);
    d = n2.backward(p, t.s2, d, grad);
    d = c1.backward(p, t.h1, d, grad);
    d = gelu_backward(t.a1, d);
    Tensor dx = n1.backward(p, t.s1, d, grad);
    add_inplace(dx, has_skip ? skip.backward(p, t.x, dy, grad) : dy);
    return dx;
  }
};

/// Everything the backward pass of one UNet evaluation needs.
struct ActivationTape {
  std::uint64_t params_fingerprint = 0;
  std::size_t height = 0, width = 0;
  int t = 0;
  Tensor input;
  std::vector<std::vector<ResBlock::Tape>> enc;
  std::vector<Tensor> skips;
  std::vector<Tensor> up_in;
  std::vector<std::vector<ResBlock::Tape>> dec;
  GroupNorm::Saved out_norm;
  Tensor out_a, out_h;
};

/// Encoder/decoder noise predictor: the input image is concatenated with the
/// time embedding, each level runs residual blocks (GroupNorm, GELU, 3x3 conv),
/// levels are joined by stride-2 convolutions on the way down and by
/// nearest-neighbour upsampling + 3x3 conv on the way up, with skip
/// concatenation. The output head is GroupNorm, GELU, 3x3 conv to one channel.
class UNet {
 public:
  explicit UNet(DenoiserConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& ch = config_.channels_per_level;
    const std::size_t L = config_.n_levels, G = config_.group_count;
    ParamVector& p = layout_;
    in_conv_ = Conv2d::create(p, "in_conv", 1 + config_.embed_dim, ch[0]);
    enc_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t b = 0; b < config_.blocks_per_level; ++b)
        enc_[l].push_back(ResBlock::create(p, "enc" + std::to_string(l) + ".block" + std::to_string(b),
                                           ch[l], ch[l], G));
      if (l + 1 < L)
        down_.push_back(Conv2d::create(p, "down" + std::to_string(l), ch[l], ch[l + 1], 3, 2));
    }
    for (std::size_t k = 0; k + 1 < L; ++k) {
      const std::size_t l = L - 2 - k;
      up_.push_back(Conv2d::create(p, "up" + std::to_string(l), ch[l + 1], ch[l]));
      std::vector<ResBlock> blocks;
      for (std::size_t b = 0; b < config_.blocks_per_level; ++b)
        blocks.push_back(ResBlock::create(p, "dec" + std::to_string(l) + ".block" + std::to_string(b),
                                          b == 0 ? 2 * ch[l] : ch[l], ch[l], G));
      dec_.push_back(std::move(blocks));
    }
    out_norm_ = GroupNorm::create(p, "out_norm", ch[0], G);
    out_conv_ = Conv2d::create(p, "out_conv", ch[0], 1);
  }

  const DenoiserConfig& config() const { return config_; }
  const ParamVector& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.size(); }

  /// Fan-in scaled uniform weights, zero biases, unit norm gains, and a
  /// zero output convolution so the untrained network predicts zero noise.
  ParamVector init_params(std::uint64_t seed) const {
    ParamVector p = layout_.zeros_like();
    RngStream rng(CounterRng(seed).split(0x696e6974));
    for (const auto& b : p.manifest()) {
      auto s = p.values().subspan(b.offset, b.size());
      const bool weight = b.name.ends_with(".weight");
      const bool gamma = b.name.ends_with(".gamma");
      if (gamma) std::fill(s.begin(), s.end(), 1.0);
      if (!weight || b.name.starts_with("out_conv")) continue;
      const std::size_t fan_in = b.shape[1] * b.shape[2] * b.shape[3];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : s) v = rng.next_uniform(-bound, bound);
    }
    return p;
  }

  void check_params(const ParamVector& p) const {
    if (!p.same_layout(layout_)) throw DimensionError("parameter layout does not match denoiser config");
  }

  void check_input(const Image& x) const {
    const std::size_t factor = std::size_t{1} << (config_.n_levels - 1);
    if (x.rows() % factor != 0 || x.cols() % factor != 0)
      throw DimensionError("denoiser: image dims must be divisible by " + std::to_string(factor));
    if (!all_finite(x)) throw NumericError("denoiser: non-finite input");
  }

  Image forward(const ParamVector& p, const Image& x, int t, ActivationTape* tape) const {
    check_params(p);
    check_input(x);
    ActivationTape local;
    ActivationTape& tp = tape ? *tape : local;
    const std::size_t L = config_.n_levels;
    tp.params_fingerprint = p.fingerprint();
    tp.height = x.rows();
    tp.width = x.cols();
    tp.t = t;
    Tensor img(1, x.rows(), x.cols());
    std::copy(x.values().begin(), x.values().end(), img.v.begin());
    tp.input = concat_channels(img, time_embedding(t, config_.embed_dim, x.rows(), x.cols()));

    Tensor h = in_conv_.forward(p, tp.input);
    tp.enc.assign(L, {});
    tp.skips.clear();
    for (std::size_t l = 0; l < L; ++l) {
      tp.enc[l].resize(enc_[l].size());
      for (std::size_t b = 0; b < enc_[l].size(); ++b) h = enc_[l][b].forward(p, h, tp.enc[l][b]);
      if (l + 1 < L) {
        tp.skips.push_back(h);
        h = down_[l].forward(p, h);
      }
    }
    tp.up_in.clear();
    tp.dec.assign(dec_.size(), {});
    for (std::size_t k = 0; k < dec_.size(); ++k) {
      const std::size_t l = L - 2 - k;
      tp.up_in.push_back(upsample2x(h));
      h = concat_channels(up_[k].forward(p, tp.up_in.back()), tp.skips[l]);
      tp.dec[k].resize(dec_[k].size());
      for (std::size_t b = 0; b < dec_[k].size(); ++b) h = dec_[k][b].forward(p, h, tp.dec[k][b]);
    }
    tp.out_a = out_norm_.forward(p, h, tp.out_norm);
    tp.out_h = gelu_forward(tp.out_a);
    const Tensor y = out_conv_.forward(p, tp.out_h);
    return Image(x.rows(), x.cols(), y.v);
  }

  /// Backpropagates `cotangent` (dL/d output). Returns dL/d image and
  /// accumulates dL/d params into `grad` when non-null.
  Image backward(const ParamVector& p, const ActivationTape& tp, const Image& cotangent,
                 ParamVector* grad) const {
    check_params(p);
    if (tp.params_fingerprint != p.fingerprint() || tp.input.v.empty())
      throw std::logic_error("stale activation tape: parameters changed since the forward pass");
    if (cotangent.rows() != tp.height || cotangent.cols() != tp.width)
      throw DimensionError("denoiser backward: cotangent shape mismatch");
    if (grad && !grad->same_layout(layout_)) throw DimensionError("gradient layout mismatch");
    const std::size_t L = config_.n_levels;
    const auto& ch = config_.channels_per_level;

    Tensor dy(1, tp.height, tp.width);
    std::copy(cotangent.values().begin(), cotangent.values().end(), dy.v.begin());
    Tensor d = out_conv_.backward(p, tp.out_h, dy, grad);
    d = gelu_backward(tp.out_a, d);
    d = out_norm_.backward(p, tp.out_norm, d, grad);

    std::vector<Tensor> dskips(tp.skips.size());
    for (std::size_t kk = dec_.size(); kk-- > 0;) {
      const std::size_t l = L - 2 - kk;
      for (std::size_t b = dec_[kk].size(); b-- > 0;) d = dec_[kk][b].backward(p, tp.dec[kk][b], d, grad);
      auto [dup, dskip] = split_channels(d, ch[l]);
      dskips[l] = std::move(dskip);
      d = upsample2x_backward(up_[kk].backward(p, tp.up_in[kk], dup, grad));
    }
    for (std::size_t l = L; l-- > 0;) {
      if (l + 1 < L) {
        d = down_[l].backward(p, tp.skips[l], d, grad);
        add_inplace(d, dskips[l]);
      }
      for (std::size_t b = enc_[l].size(); b-- > 0;) d = enc_[l][b].backward(p, tp.enc[l][b], d, grad);
    }
    const Tensor din = in_conv_.backward(p, tp.input, d, grad);
    return Image(tp.height, tp.width,
                 std::vector<double>(din.v.begin(), din.v.begin() + static_cast<std::ptrdiff_t>(din.plane())));
  }

 private:
  DenoiserConfig config_;
  ParamVector layout_;
  Conv2d in_conv_;
  std::vector<std::vector<ResBlock>> enc_;
  std::vector<Conv2d> down_;
  std::vector<Conv2d> up_;
  std::vector<std::vector<ResBlock>> dec_;
  GroupNorm out_norm_;
  Conv2d out_conv_;
};

inline ParamVector init_params(const DenoiserConfig& config, std::uint64_t seed) {
  return UNet(config).init_params(seed);
}

struct ForwardResult {
  Image eps;
  ActivationTape tape;
};

inline ForwardResult denoise_forward(const UNet& net, const ParamVector& params, const Image& x_t, int t) {
  ForwardResult r;
  r.eps = net.forward(params, x_t, t, &r.tape);
  return r;
}

/// J^T cotangent with J = d eps_hat / d x_t.
inline Image denoise_vjp_input(const UNet& net, const ParamVector& params, const ActivationTape& tape,
                               const Image& cotangent) {
  return net.backward(params, tape, cotangent, nullptr);
}

/// d <cotangent, eps_hat> / d params.
inline ParamVector denoise_grad_params(const UNet& net, const ParamVector& params,
                                       const ActivationTape& tape, const Image& cotangent) {
  ParamVector g = params.zeros_like();
  net.backward(params, tape, cotangent, &g);
  return g;
}

}  // namespace rddgp::nn
