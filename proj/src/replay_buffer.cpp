#include "hvf/replay_buffer.hpp"

#include <stdexcept>

namespace hvf {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  slots_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
  std::lock_guard lock(mu_);
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(t));
    return;
  }
  slots_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return slots_.size();
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  std::lock_guard lock(mu_);
  if (slots_.empty()) throw std::invalid_argument("replay buffer: sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, slots_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  const auto idx = sample_indices(n, rng);
  std::lock_guard lock(mu_);
  std::vector<Transition> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(slots_[i]);
  return out;
}

Transition ReplayBuffer::at(std::size_t i) const {
  std::lock_guard lock(mu_);
  if (i >= slots_.size()) throw std::out_of_range("replay buffer: index out of range");
  const std::size_t physical = slots_.size() < capacity_ ? i : (head_ + i) % capacity_;
  return slots_[physical];
}

}  // namespace hvf
