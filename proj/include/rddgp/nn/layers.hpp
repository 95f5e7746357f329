#pragma once

// Primitive layers of the denoiser. Each layer reads its weights from a flat
// ParamVector at fixed offsets and exposes forward / backward free of any
// autograd machinery; the caller decides what to keep for the backward pass.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/nn/params.hpp"

namespace rddgp::nn {

/// Channels x height x width, row-major within a channel.
struct Tensor {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c(channels), h(height), w(width), v(channels * height * width, fill) {}

  std::size_t plane() const { return h * w; }
  double* channel(std::size_t k) { return v.data() + k * plane(); }
  const double* channel(std::size_t k) const { return v.data() + k * plane(); }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

/// k x k convolution with zero padding; weights [out][in][k][k], bias [out].
struct Conv2d {
  std::size_t in = 0, out = 0, k = 3, stride = 1, pad = 1;
  std::size_t w_off = 0, b_off = 0;

  static Conv2d create(ParamVector& p, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t k = 3, std::size_t stride = 1) {
    Conv2d c;
    c.in = in;
    c.out = out;
    c.k = k;
    c.stride = stride;
    c.pad = k / 2;
    c.w_off = p.add_block(name + ".weight", {out, in, k, k});
    c.b_off = p.add_block(name + ".bias", {out});
    return c;
  }

  std::size_t fan_in() const { return in * k * k; }
  std::size_t out_size(std::size_t n) const { return (n + 2 * pad - k) / stride + 1; }

  RowMatrix im2col(const Tensor& x) const {
    const std::size_t ho = out_size(x.h), wo = out_size(x.w);
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(in * k * k),
                                     static_cast<Eigen::Index>(ho * wo));
    for (std::size_t ci = 0; ci < in; ++ci) {
      const double* src = x.channel(ci);
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* row = cols.data() + ((ci * k + ky) * k + kx) * ho * wo;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(x.h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(x.w)) continue;
              row[oy * wo + ox] = src[static_cast<std::size_t>(iy) * x.w + static_cast<std::size_t>(ix)];
            }
          }
        }
    }
    return cols;
  }

  void col2im(const RowMatrix& cols, Tensor& dx) const {
    const std::size_t ho = out_size(dx.h), wo = out_size(dx.w);
    for (std::size_t ci = 0; ci < in; ++ci) {
      double* dst = dx.channel(ci);
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double* row = cols.data() + ((ci * k + ky) * k + kx) * ho * wo;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(dx.h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(dx.w)) continue;
              dst[static_cast<std::size_t>(iy) * dx.w + static_cast<std::size_t>(ix)] += row[oy * wo + ox];
            }
          }
        }
    }
  }

  Tensor forward(const ParamVector& p, const Tensor& x) const {
    if (x.c != in) throw DimensionError("Conv2d: channel mismatch");
    const std::size_t ho = out_size(x.h), wo = out_size(x.w);
    const RowMatrix cols = im2col(x);
    ConstRowMap W(p.data() + w_off, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * k * k));
    Tensor y(out, ho, wo);
    RowMap Y(y.v.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(ho * wo));
    Y.noalias() = W * cols;
    for (std::size_t o = 0; o < out; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += p[b_off + o];
    return y;
  }

  /// Returns dL/dx; accumulates weight and bias gradients into `grad` when given.
  Tensor backward(const ParamVector& p, const Tensor& x, const Tensor& dy, ParamVector* grad) const {
    const auto rows = static_cast<Eigen::Index>(in * k * k);
    const auto n = static_cast<Eigen::Index>(dy.plane());
    ConstRowMap W(p.data() + w_off, static_cast<Eigen::Index>(out), rows);
    ConstRowMap DY(dy.v.data(), static_cast<Eigen::Index>(out), n);
    if (grad) {
      const RowMatrix cols = im2col(x);
      RowMap GW(grad->data() + w_off, static_cast<Eigen::Index>(out), rows);
      GW.noalias() += DY * cols.transpose();
      for (std::size_t o = 0; o < out; ++o) (*grad)[b_off + o] += DY.row(static_cast<Eigen::Index>(o)).sum();
    }
    RowMatrix dcols(rows, n);
    dcols.noalias() = W.transpose() * DY;
    Tensor dx(x.c, x.h, x.w);
    col2im(dcols, dx);
    return dx;
  }
};

/// Group normalisation with per-channel affine parameters.
struct GroupNorm {
  static constexpr double kEps = 1e-5;
  std::size_t channels = 0, groups = 1;
  std::size_t gamma_off = 0, beta_off = 0;

  static GroupNorm create(ParamVector& p, const std::string& name, std::size_t channels,
                          std::size_t groups) {
    if (channels % groups != 0)
      throw std::invalid_argument("GroupNorm: channels must be divisible by groups");
    GroupNorm g;
    g.channels = channels;
    g.groups = groups;
    g.gamma_off = p.add_block(name + ".gamma", {channels});
    g.beta_off = p.add_block(name + ".beta", {channels});
    return g;
  }

  struct Saved {
    Tensor xhat;
    std::vector<double> rstd;
  };

  Tensor forward(const ParamVector& p, const Tensor& x, Saved& saved) const {
    if (x.c != channels) throw DimensionError("GroupNorm: channel mismatch");
    const std::size_t per = channels / groups, hw = x.plane(), n = per * hw;
    saved.xhat = Tensor(x.c, x.h, x.w);
    saved.rstd.assign(groups, 0.0);
    Tensor y(x.c, x.h, x.w);
    for (std::size_t g = 0; g < groups; ++g) {
      const double* src = x.channel(g * per);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += src[i];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(n);
      const double rstd = 1.0 / std::sqrt(var + kEps);
      saved.rstd[g] = rstd;
      for (std::size_t cc = 0; cc < per; ++cc) {
        const std::size_t ch = g * per + cc;
        const double gamma = p[gamma_off + ch], beta = p[beta_off + ch];
        const double* xs = x.channel(ch);
        double* xh = saved.xhat.channel(ch);
        double* ys = y.channel(ch);
        for (std::size_t i = 0; i < hw; ++i) {
          xh[i] = (xs[i] - mean) * rstd;
          ys[i] = gamma * xh[i] + beta;
        }
      }
    }
    return y;
  }

  Tensor backward(const ParamVector& p, const Saved& saved, const Tensor& dy, ParamVector* grad) const {
    const std::size_t per = channels / groups, hw = dy.plane(), n = per * hw;
    Tensor dx(dy.c, dy.h, dy.w);
    for (std::size_t g = 0; g < groups; ++g) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t cc = 0; cc < per; ++cc) {
        const std::size_t ch = g * per + cc;
        const double gamma = p[gamma_off + ch];
        const double* d = dy.channel(ch);
        const double* xh = saved.xhat.channel(ch);
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          const double dxh = d[i] * gamma;
          sum_d += dxh;
          sum_dx += dxh * xh[i];
          dgamma += d[i] * xh[i];
          dbeta += d[i];
        }
        if (grad) {
          (*grad)[gamma_off + ch] += dgamma;
          (*grad)[beta_off + ch] += dbeta;
        }
      }
      const double rstd = saved.rstd[g];
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t cc = 0; cc < per; ++cc) {
        const std::size_t ch = g * per + cc;
        const double gamma = p[gamma_off + ch];
        const double* d = dy.channel(ch);
        const double* xh = saved.xhat.channel(ch);
        double* out = dx.channel(ch);
        for (std::size_t i = 0; i < hw; ++i)
          out[i] = rstd * (d[i] * gamma - inv_n * (sum_d + xh[i] * sum_dx));
      }
    }
    return dx;
  }
};

/// Exact GELU, x * Phi(x).
inline double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }
inline double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

inline Tensor gelu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.v) v = gelu(v);
  return y;
}

inline Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= gelu_derivative(x.v[i]);
  return dx;
}

inline Tensor upsample2x(const Tensor& x) {
  Tensor y(x.c, 2 * x.h, 2 * x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    const double* s = x.channel(ch);
    double* d = y.channel(ch);
    for (std::size_t r = 0; r < y.h; ++r)
      for (std::size_t c = 0; c < y.w; ++c) d[r * y.w + c] = s[(r / 2) * x.w + c / 2];
  }
  return y;
}

inline Tensor upsample2x_backward(const Tensor& dy) {
  Tensor dx(dy.c, dy.h / 2, dy.w / 2);
  for (std::size_t ch = 0; ch < dy.c; ++ch) {
    const double* s = dy.channel(ch);
    double* d = dx.channel(ch);
    for (std::size_t r = 0; r < dy.h; ++r)
      for (std::size_t c = 0; c < dy.w; ++c) d[(r / 2) * dx.w + c / 2] += s[r * dy.w + c];
  }
  return dx;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w) throw DimensionError("concat: spatial mismatch");
  Tensor y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return y;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& y, std::size_t first) {
  Tensor a(first, y.h, y.w), b(y.c - first, y.h, y.w);
  std::copy(y.v.begin(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), a.v.begin());
  std::copy(y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), y.v.end(), b.v.begin());
  return {std::move(a), std::move(b)};
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace rddgp::nn
