#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hvf/tensor.hpp"

namespace hvf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // first moment
  Tensor v;  // second moment
};

/// Named learnable arrays for one network, with their Adam state.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index_of(const std::string& name) const;
  Param& at(std::size_t i) { return params_[i]; }
  const Param& at(std::size_t i) const { return params_[i]; }
  Param& operator[](const std::string& name) { return params_[index_of(name)]; }
  const Param& operator[](const std::string& name) const { return params_[index_of(name)]; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  void zero_grad();
  /// Flattened gradient of every parameter, in insertion order.
  std::vector<double> flat_grad() const;
  double grad_norm() const;
  /// Rescales gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update from the gradients held in the store.
/// Throws NonFiniteError (store untouched) if any gradient is non-finite.
void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {});

}  // namespace hvf
