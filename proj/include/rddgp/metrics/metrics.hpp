#pragma once

#include <cmath>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"

namespace rddgp::metrics {

inline constexpr double kPsnrCap = 300.0;

struct MetricReport {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

inline double mse(const Image& a, const Image& b) {
  a.expect_shape(b, "mse");
  if (a.empty()) throw DimensionError("mse: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(range^2 / mse), capped at kPsnrCap for identical images.
inline double psnr_from_mse(double m, double data_range = 1.0) {
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be > 0");
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / m));
}

inline double psnr(const Image& a, const Image& b, double data_range = 1.0) {
  return psnr_from_mse(mse(a, b), data_range);
}

/// Mean SSIM over all valid positions of an 11x11 Gaussian window
/// (sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1). No padding.
inline double ssim(const Image& a, const Image& b) {
  a.expect_shape(b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (a.rows() < kWin || a.cols() < kWin)
    throw DimensionError("ssim: images must be at least 11x11");

  std::vector<double> g(kWin);
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;

  const std::size_t out_r = a.rows() - kWin + 1, out_c = a.cols() - kWin + 1;
  double total = 0.0;
  for (std::size_t r = 0; r < out_r; ++r)
    for (std::size_t c = 0; c < out_c; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = g[i] * g[j];
          const double va = a(r + i, c + j), vb = b(r + i, c + j);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      const double num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
      const double den = (ma * ma + mb * mb + C1) * (var_a + var_b + C2);
      total += num / den;
    }
  return total / static_cast<double>(out_r * out_c);
}

inline MetricReport evaluate(const Image& reconstruction, const Image& reference) {
  MetricReport m;
  m.mse = mse(reconstruction, reference);
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(reconstruction, reference);
  return m;
}

}  // namespace rddgp::metrics
