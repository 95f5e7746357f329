#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/core/field.hpp"

namespace rddgp::tomo {

/// Square pixels of side `pixel_size`, grid centred on the origin.
/// Row 0 is the top of the image (largest y).
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  double pixel_size = 1.0;

  ImageGrid() = default;
  ImageGrid(std::size_t h, std::size_t w, double ps = 1.0) : height(h), width(w), pixel_size(ps) {
    validate();
  }

  void validate() const {
    if (height < 2 || width < 2) throw std::invalid_argument("ImageGrid: need at least 2x2 pixels");
    if (!(pixel_size > 0.0)) throw std::invalid_argument("ImageGrid: pixel_size must be > 0");
  }

  std::size_t pixels() const { return height * width; }
  double x_min() const { return -0.5 * static_cast<double>(width) * pixel_size; }
  double y_min() const { return -0.5 * static_cast<double>(height) * pixel_size; }
  double x_center(std::size_t col) const {
    return (static_cast<double>(col) - 0.5 * static_cast<double>(width - 1)) * pixel_size;
  }
  double y_center(std::size_t row) const {
    return (0.5 * static_cast<double>(height - 1) - static_cast<double>(row)) * pixel_size;
  }
  double diagonal() const {
    return std::hypot(static_cast<double>(height), static_cast<double>(width)) * pixel_size;
  }
  Image zeros() const { return Image(height, width); }
  void expect(const Image& x, const char* what) const {
    if (x.rows() != height || x.cols() != width)
      throw DimensionError(std::string(what) + ": image " + x.shape_string() + " does not match grid");
  }
};

/// Detector cells needed to cover the grid diagonal.
inline std::size_t default_detector_count(const ImageGrid& grid) {
  return static_cast<std::size_t>(
      std::ceil(std::sqrt(2.0) * static_cast<double>(std::max(grid.height, grid.width)) - 1e-9));
}

/// Parallel-beam geometry with angles i * pi / n_angles, i = 0 .. n_angles - 1.
/// Ray (a, d) is the line {p : p . (cos a, sin a) = s_d}, with detector offsets
/// s_d centred on zero.
struct ScanGeometry {
  std::vector<double> angles;
  std::size_t n_detectors = 0;
  double detector_spacing = 1.0;

  ScanGeometry() = default;
  ScanGeometry(std::size_t n_angles, std::size_t detectors, double spacing = 1.0)
      : n_detectors(detectors), detector_spacing(spacing) {
    if (n_angles < 1) throw std::invalid_argument("ScanGeometry: need at least one angle");
    if (detectors < 1) throw std::invalid_argument("ScanGeometry: need at least one detector");
    if (!(spacing > 0.0)) throw std::invalid_argument("ScanGeometry: detector spacing must be > 0");
    angles.resize(n_angles);
    for (std::size_t i = 0; i < n_angles; ++i)
      angles[i] = static_cast<double>(i) * std::numbers::pi / static_cast<double>(n_angles);
  }

  /// Default detector count and unit spacing in pixel units.
  static ScanGeometry for_grid(const ImageGrid& grid, std::size_t n_angles) {
    return ScanGeometry(n_angles, default_detector_count(grid), grid.pixel_size);
  }

  std::size_t n_angles() const { return angles.size(); }
  std::size_t rays() const { return angles.size() * n_detectors; }
  double detector_offset(std::size_t d) const {
    return (static_cast<double>(d) - 0.5 * static_cast<double>(n_detectors - 1)) * detector_spacing;
  }
  Sinogram zeros() const { return Sinogram(n_angles(), n_detectors); }
  void expect(const Sinogram& y, const char* what) const {
    if (y.rows() != n_angles() || y.cols() != n_detectors)
      throw DimensionError(std::string(what) + ": sinogram " + y.shape_string() +
                           " does not match geometry");
  }
};

}  // namespace rddgp::tomo
