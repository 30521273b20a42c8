// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rpt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major float64 array. Anything of rank >= 2 is viewed as a
/// matrix of rows() x cols() where cols() is the last axis.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    validate();
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> d(numel(shape), value);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  template <class Rng>
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> d(numel(shape));
    for (auto& v : d) v = dist(rng);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) {
    requires_grad_ = v;
    if (!v) grad_.reset();
  }

  const std::optional<std::vector<double>>& grad() const { return grad_; }
  bool has_grad() const { return grad_.has_value(); }
  void clear_grad() { grad_.reset(); }
  void scale_grad(double f) {
    if (grad_)
      for (auto& v : *grad_) v *= f;
  }

  /// Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(const std::vector<double>& g) {
    if (g.size() != data_.size()) {
      throw ShapeError("gradient length " + std::to_string(g.size()) +
                       " does not match tensor of shape " + shape_str(shape_));
    }
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    auto& dst = *grad_;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor shape " + shape_str(shape_) + " has a zero dimension");
    }
    if (numel(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + shape_str(shape_) + " needs " +
                       std::to_string(numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  Shape shape_{};
  std::vector<double> data_{};
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_{};
};

}  // namespace rpt
