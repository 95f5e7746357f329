#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"
#include "rddgp/tomo/geometry.hpp"

namespace rddgp::tomo {

struct ProjectorEntry {
  std::uint32_t col;
  double weight;
};

/// Explicit sparse system matrix K (rows = rays, cols = pixels) in CSR form.
/// Immutable once built; safe to share between threads.
class Projector {
 public:
  Projector(ScanGeometry geometry, ImageGrid grid, std::vector<std::size_t> row_ptr,
            std::vector<ProjectorEntry> entries)
      : geometry_(std::move(geometry)),
        grid_(grid),
        row_ptr_(std::move(row_ptr)),
        entries_(std::move(entries)) {}

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return grid_.pixels(); }
  std::size_t nonzeros() const { return entries_.size(); }
  const ScanGeometry& geometry() const { return geometry_; }
  const ImageGrid& grid() const { return grid_; }

  std::span<const ProjectorEntry> row(std::size_t r) const {
    return {entries_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  /// y = K x.
  Sinogram forward(const Image& x) const {
    grid_.expect(x, "forward_project");
    Sinogram y = geometry_.zeros();
    for (std::size_t r = 0; r < rows(); ++r) {
      double acc = 0.0;
      for (const auto& e : row(r)) acc += e.weight * x[e.col];
      y[r] = acc;
    }
    return y;
  }

  /// x = K^T y.
  Image adjoint(const Sinogram& y) const {
    geometry_.expect(y, "back_project");
    Image x = grid_.zeros();
    for (std::size_t r = 0; r < rows(); ++r) {
      const double v = y[r];
      if (v == 0.0) continue;
      for (const auto& e : row(r)) x[e.col] += e.weight * v;
    }
    return x;
  }

 private:
  ScanGeometry geometry_;
  ImageGrid grid_;
  std::vector<std::size_t> row_ptr_;
  std::vector<ProjectorEntry> entries_;
};

namespace detail {

/// Exact intersection lengths of one line with every pixel it crosses
/// (Siddon traversal). A ray running exactly along a pixel boundary shares its
/// length equally between the two neighbouring pixels.
inline void trace_ray(const ImageGrid& grid, double angle, double offset,
                      std::vector<ProjectorEntry>& out) {
  constexpr double kParallel = 1e-12;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double bx = offset * c, by = offset * s;
  const double dx = -s, dy = c;
  const double ps = grid.pixel_size;
  const double x0 = grid.x_min(), x1 = -x0;
  const double y0 = grid.y_min(), y1 = -y0;
  const auto W = grid.width, H = grid.height;

  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  const bool vertical = std::abs(dx) < kParallel;
  const bool horizontal = std::abs(dy) < kParallel;
  if (vertical) {
    if (bx < x0 || bx > x1) return;
  } else {
    const double ta = (x0 - bx) / dx, tb = (x1 - bx) / dx;
    t_lo = std::max(t_lo, std::min(ta, tb));
    t_hi = std::min(t_hi, std::max(ta, tb));
  }
  if (horizontal) {
    if (by < y0 || by > y1) return;
  } else {
    const double ta = (y0 - by) / dy, tb = (y1 - by) / dy;
    t_lo = std::max(t_lo, std::min(ta, tb));
    t_hi = std::min(t_hi, std::max(ta, tb));
  }
  if (!(t_hi > t_lo)) return;

  std::vector<double> ts{t_lo, t_hi};
  if (!vertical)
    for (std::size_t i = 1; i < W; ++i) {
      const double t = (x0 + static_cast<double>(i) * ps - bx) / dx;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  if (!horizontal)
    for (std::size_t j = 1; j < H; ++j) {
      const double t = (y0 + static_cast<double>(j) * ps - by) / dy;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  std::sort(ts.begin(), ts.end());

  // Which pixel indices along one axis own coordinate u, with the boundary case split.
  auto owners = [ps](double u, double lo, std::size_t n, bool along_boundary_possible,
                     std::size_t idx[2], double frac[2]) -> int {
    const double f = (u - lo) / ps;
    if (along_boundary_possible) {
      const double k = std::round(f);
      if (std::abs(f - k) < 1e-9) {
        int count = 0;
        const auto ki = static_cast<std::int64_t>(k);
        for (std::int64_t cand : {ki - 1, ki})
          if (cand >= 0 && cand < static_cast<std::int64_t>(n)) {
            idx[count] = static_cast<std::size_t>(cand);
            frac[count] = 0.5;
            ++count;
          }
        return count;
      }
    }
    const auto i = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(f)), 0,
                                            static_cast<std::int64_t>(n) - 1);
    idx[0] = static_cast<std::size_t>(i);
    frac[0] = 1.0;
    return 1;
  };

  const std::size_t first = out.size();
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double len = ts[k + 1] - ts[k];
    if (len <= 1e-12 * ps) continue;
    const double tm = 0.5 * (ts[k] + ts[k + 1]);
    std::size_t cols[2], ys[2];
    double fc[2], fy[2];
    const int nc = owners(bx + tm * dx, x0, W, vertical, cols, fc);
    const int ny = owners(by + tm * dy, y0, H, horizontal, ys, fy);
    for (int a = 0; a < nc; ++a)
      for (int b = 0; b < ny; ++b) {
        const std::size_t row = H - 1 - ys[b];
        out.push_back({static_cast<std::uint32_t>(row * W + cols[a]), len * fc[a] * fy[b]});
      }
  }
  auto begin = out.begin() + static_cast<std::ptrdiff_t>(first);
  std::sort(begin, out.end(), [](const auto& a, const auto& b) { return a.col < b.col; });
  // Merge repeated columns.
  auto write = begin;
  for (auto it = begin; it != out.end(); ++it) {
    if (write != begin && std::prev(write)->col == it->col)
      std::prev(write)->weight += it->weight;
    else
      *write++ = *it;
  }
  out.erase(write, out.end());
}

}  // namespace detail

/// Assembles K by tracing one ray per detector-cell centre. `threads` > 1
/// splits the angles between workers; the result is identical either way.
inline Projector build_projector(const ScanGeometry& geometry, const ImageGrid& grid,
                                 unsigned threads = 0) {
  grid.validate();
  if (geometry.n_angles() == 0 || geometry.n_detectors == 0)
    throw std::invalid_argument("build_projector: empty geometry");
  const std::size_t n_angles = geometry.n_angles();
  const unsigned workers = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(n_angles)));

  struct Chunk {
    std::vector<std::size_t> row_sizes;
    std::vector<ProjectorEntry> entries;
  };
  std::vector<Chunk> chunks(workers);
  auto run = [&](unsigned w) {
    Chunk& chunk = chunks[w];
    for (std::size_t a = w; a < n_angles; a += workers)
      for (std::size_t d = 0; d < geometry.n_detectors; ++d) {
        const std::size_t before = chunk.entries.size();
        detail::trace_ray(grid, geometry.angles[a], geometry.detector_offset(d), chunk.entries);
        chunk.row_sizes.push_back(chunk.entries.size() - before);
      }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }

  std::vector<std::size_t> row_ptr{0};
  std::vector<ProjectorEntry> entries;
  std::vector<std::size_t> cursor(workers, 0), offset(workers, 0);
  for (std::size_t a = 0; a < n_angles; ++a) {
    const unsigned w = static_cast<unsigned>(a % workers);
    for (std::size_t d = 0; d < geometry.n_detectors; ++d) {
      const std::size_t n = chunks[w].row_sizes[cursor[w]++];
      auto first = chunks[w].entries.begin() + static_cast<std::ptrdiff_t>(offset[w]);
      entries.insert(entries.end(), first, first + static_cast<std::ptrdiff_t>(n));
      offset[w] += n;
      row_ptr.push_back(entries.size());
    }
  }
  return Projector(geometry, grid, std::move(row_ptr), std::move(entries));
}

inline Sinogram forward_project(const Projector& P, const Image& x) { return P.forward(x); }
inline Image back_project(const Projector& P, const Sinogram& y) { return P.adjoint(y); }

}  // namespace rddgp::tomo
