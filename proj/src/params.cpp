#include "hvf/params.hpp"

#include <cmath>

namespace hvf {

Param& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ShapeError("param store: duplicate parameter " + name);
  Param p;
  p.name = name;
  p.grad = Tensor(init.shape, std::vector<double>(init.size(), 0.0));
  p.m = p.grad;
  p.v = p.grad;
  p.value = std::move(init);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("param store: unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::vector<double> ParamStore::flat_grad() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) out.insert(out.end(), p.grad.data.begin(), p.grad.data.end());
  return out;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params_) {
      for (double& g : p.grad.data) g *= scale;
    }
  }
  return norm;
}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg) {
  for (const auto& p : store.params()) {
    if (!p.grad.all_finite()) {
      throw NonFiniteError("adam: non-finite gradient in parameter '" + p.name + "' at step " +
                           std::to_string(store.step()));
    }
  }
  const std::uint64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : store.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
      p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.m.data[i] / bc1;
      const double v_hat = p.v.data[i] / bc2;
      p.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.set_step(t);
}

}  // namespace hvf
