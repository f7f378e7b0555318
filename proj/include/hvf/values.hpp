#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "hvf/nn.hpp"

namespace hvf {

/// V(s): MLP from observation to a scalar.
struct StateValueNet {
  MLPSpec spec;
  ParamStore params;

  StateValueNet() = default;
  StateValueNet(std::size_t obs_dim, std::vector<std::size_t> hidden, std::mt19937_64& rng);
};

/// v(s_t, h_{t+1}, h_{t+2}, ...): a backward LSTM over the trajectory's
/// hindsight vectors feeds its hidden state l_t, with s_t, to an MLP head.
struct HindsightValueNet {
  LSTMSpec lstm;
  MLPSpec head;  // input width obs_dim + lstm.hidden
  ParamStore params;

  HindsightValueNet() = default;
  HindsightValueNet(std::size_t obs_dim, std::size_t d_h, std::size_t lstm_hidden,
                    std::vector<std::size_t> hidden, std::mt19937_64& rng);
  std::size_t obs_dim() const { return head.in() - lstm.hidden; }
};

/// Observations (T x obs) and hindsight vectors (T x d_h) of one trajectory.
/// Row t of `h` is h_{t+1}: the embedding of the transition taken at step t.
struct TrajectoryInputs {
  Tensor obs;
  Tensor h;
};

/// v_t = V(s_t) for every row; T x 1.
Var svf_values(Tape& tape, StateValueNet& net, const Tensor& obs);

/// Single backward scan: l_T = 0, l_t = LSTM(h_{t+1}, l_{t+1}),
/// v_t = head(s_t, l_t); T x 1.
Var hvf_values(Tape& tape, HindsightValueNet& net, const Tensor& obs, const Tensor& h);

/// hvf_values for many trajectories, rows concatenated in input order.
/// Trajectories of equal length share one batched scan.
Var hvf_values_batch(Tape& tape, HindsightValueNet& net, std::span<const TrajectoryInputs> trajs);

/// Value-only evaluation helpers.
std::vector<double> svf_predict(const StateValueNet& net, const Tensor& obs);
std::vector<double> hvf_predict(const HindsightValueNet& net, const Tensor& obs, const Tensor& h);
std::vector<double> hvf_predict_batch(const HindsightValueNet& net,
                                      std::span<const TrajectoryInputs> trajs);

/// mean_t (v_t - R_t)^2. Returns are constants.
Var value_loss(Var estimates, std::span<const double> returns);

}  // namespace hvf
