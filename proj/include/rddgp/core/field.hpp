#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"

namespace rddgp {

/// Dense row-major 2-D array of doubles. The tag keeps images and sinograms
/// from being mixed up at compile time.
template <class Tag>
class Field2D {
 public:
  Field2D() = default;
  Field2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Field2D(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      throw DimensionError("Field2D: payload size does not match dims");
  }

  static Field2D zeros_like(const Field2D& other) { return Field2D(other.rows_, other.cols_); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<double>& storage() const { return values_; }

  bool same_shape(const Field2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  void expect_shape(const Field2D& other, const char* what) const {
    if (!same_shape(other))
      throw DimensionError(std::string(what) + ": shape " + shape_string() + " vs " +
                           other.shape_string());
  }
  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "," + std::to_string(cols_) + ")";
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  Field2D& operator+=(const Field2D& o) {
    expect_shape(o, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Field2D& operator-=(const Field2D& o) {
    expect_shape(o, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Field2D& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend Field2D operator+(Field2D a, const Field2D& b) { return a += b; }
  friend Field2D operator-(Field2D a, const Field2D& b) { return a -= b; }
  friend Field2D operator*(Field2D a, double s) { return a *= s; }
  friend Field2D operator*(double s, Field2D a) { return a *= s; }

  bool operator==(const Field2D&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct ImageTag {};
struct SinogramTag {};

/// Pixel grid, rows = height, cols = width.
using Image = Field2D<ImageTag>;
/// Projection data, rows = angles, cols = detector cells.
using Sinogram = Field2D<SinogramTag>;

template <class Tag>
double dot(const Field2D<Tag>& a, const Field2D<Tag>& b) {
  a.expect_shape(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class Tag>
double squared_norm(const Field2D<Tag>& a) {
  return dot(a, a);
}

template <class Tag>
double norm2(const Field2D<Tag>& a) {
  return std::sqrt(squared_norm(a));
}

template <class Tag>
double max_abs(const Field2D<Tag>& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

template <class Tag>
double max_abs_diff(const Field2D<Tag>& a, const Field2D<Tag>& b) {
  a.expect_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class Tag>
bool all_finite(const Field2D<Tag>& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

template <class Tag>
Field2D<Tag> clamped(Field2D<Tag> a, double lo, double hi) {
  for (double& v : a.values()) v = std::clamp(v, lo, hi);
  return a;
}

}  // namespace rddgp
