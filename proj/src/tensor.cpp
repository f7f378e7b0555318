#include "hvf/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace hvf {

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw ShapeError("tensor: shape " + shape_str() + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Tensor(0, 0);
  Tensor t(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols()) throw ShapeError("tensor: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), t.data.begin() + r * t.cols());
  }
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("tensor: item() on " + shape_str());
  return data[0];
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace hvf
