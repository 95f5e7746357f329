#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <vector>

#include "rddgp/core/field.hpp"
#include "rddgp/tomo/geometry.hpp"

namespace rddgp::tomo {

enum class FbpWindow { none, hann };

namespace detail {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
struct PlanDestroy {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, PlanDestroy>;

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Padded length used by the ramp filter: twice the next power of two.
inline std::size_t fbp_padded_length(std::size_t n_detectors) {
  return 2 * detail::next_pow2(std::max<std::size_t>(n_detectors, 2));
}

/// Filters every projection with the discrete Ram-Lak kernel
/// (h[0] = 1/(4 tau^2), h[odd n] = -1/(pi n tau)^2, h[even n] = 0), applied as a
/// zero-padded circular convolution in the frequency domain.
///
/// FFTW planning is not thread-safe; call from one thread at a time.
inline Sinogram ramp_filter(const ScanGeometry& geometry, const Sinogram& y,
                            FbpWindow window = FbpWindow::none) {
  geometry.expect(y, "ramp_filter");
  const std::size_t nd = geometry.n_detectors;
  const std::size_t L = fbp_padded_length(nd);
  const std::size_t nf = L / 2 + 1;
  const double tau = geometry.detector_spacing;

  std::unique_ptr<double, detail::FftwFree> real(
      static_cast<double*>(fftw_malloc(sizeof(double) * L)));
  std::unique_ptr<fftw_complex, detail::FftwFree> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nf)));
  detail::FftwPlan r2c(fftw_plan_dft_r2c_1d(static_cast<int>(L), real.get(), spec.get(), FFTW_ESTIMATE));
  detail::FftwPlan c2r(fftw_plan_dft_c2r_1d(static_cast<int>(L), spec.get(), real.get(), FFTW_ESTIMATE));

  // Frequency response of the spatial kernel, wrapped to length L.
  for (std::size_t i = 0; i < L; ++i) {
    const long n = static_cast<long>(i) - (i > L / 2 ? static_cast<long>(L) : 0L);
    double h = 0.0;
    if (n == 0)
      h = 1.0 / (4.0 * tau * tau);
    else if (n % 2 != 0)
      h = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(n * n) * tau * tau);
    real.get()[i] = h;
  }
  fftw_execute(r2c.get());
  std::vector<double> response(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    double w = 1.0;
    if (window == FbpWindow::hann)
      w = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(L));
    // Real-valued because the kernel is even.
    response[k] = spec.get()[k][0] * w;
  }

  Sinogram out = geometry.zeros();
  const double scale = tau / static_cast<double>(L);
  for (std::size_t a = 0; a < geometry.n_angles(); ++a) {
    for (std::size_t i = 0; i < L; ++i) real.get()[i] = i < nd ? y(a, i) : 0.0;
    fftw_execute(r2c.get());
    for (std::size_t k = 0; k < nf; ++k) {
      spec.get()[k][0] *= response[k];
      spec.get()[k][1] *= response[k];
    }
    fftw_execute(c2r.get());
    for (std::size_t d = 0; d < nd; ++d) out(a, d) = real.get()[d] * scale;
  }
  return out;
}

/// Pixel-driven backprojection with linear detector interpolation, weighted by
/// pi / n_angles. Detector positions outside the array contribute zero.
inline Image pixel_backproject(const ScanGeometry& geometry, const ImageGrid& grid,
                               const Sinogram& q) {
  geometry.expect(q, "pixel_backproject");
  Image x = grid.zeros();
  const double centre = 0.5 * static_cast<double>(geometry.n_detectors - 1);
  const auto last = static_cast<double>(geometry.n_detectors - 1);
  for (std::size_t a = 0; a < geometry.n_angles(); ++a) {
    const double c = std::cos(geometry.angles[a]);
    const double s = std::sin(geometry.angles[a]);
    for (std::size_t r = 0; r < grid.height; ++r) {
      const double py = grid.y_center(r);
      for (std::size_t col = 0; col < grid.width; ++col) {
        const double u = (grid.x_center(col) * c + py * s) / geometry.detector_spacing + centre;
        if (u < 0.0 || u > last) continue;
        const auto i0 = static_cast<std::size_t>(std::floor(u));
        const double f = u - static_cast<double>(i0);
        double v = q(a, i0) * (1.0 - f);
        if (f > 0.0) v += q(a, i0 + 1) * f;
        x(r, col) += v;
      }
    }
  }
  x *= std::numbers::pi / static_cast<double>(geometry.n_angles());
  return x;
}

/// FBP before the final clip; linear in y.
inline Image fbp_unclipped(const ScanGeometry& geometry, const ImageGrid& grid, const Sinogram& y,
                           FbpWindow window = FbpWindow::none) {
  return pixel_backproject(geometry, grid, ramp_filter(geometry, y, window));
}

/// Filtered backprojection, clipped to [0, 1].
inline Image fbp(const ScanGeometry& geometry, const ImageGrid& grid, const Sinogram& y,
                 FbpWindow window = FbpWindow::none) {
  return clamped(fbp_unclipped(geometry, grid, y, window), 0.0, 1.0);
}

}  // namespace rddgp::tomo
