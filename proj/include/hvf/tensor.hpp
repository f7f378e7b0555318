#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

/// Rejected input: shape mismatch, out-of-range index, empty batch.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a loss, gradient, or ratio stops being finite.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles. Every op in the library works on
/// 2-D tensors (rows x cols); scalars are 1 x 1.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, data(rows * cols, fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const double> values);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<const double> row_span(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }
  std::span<double> row_span(std::size_t r) { return {data.data() + r * cols(), cols()}; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  double item() const;

  std::string shape_str() const;
};

}  // namespace hvf
