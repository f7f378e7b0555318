#pragma once

#include <cstddef>
#include <mutex>
#include <random>
#include <vector>

#include "hvf/envs.hpp"

namespace hvf {

/// FIFO ring of transitions. Appends may come from several threads;
/// sampling is uniform with replacement over the current contents.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000);

  void push(Transition t);
  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  /// Slot i in insertion order (0 = oldest still held).
  Transition at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> slots_;
  mutable std::mutex mu_;
};

}  // namespace hvf
