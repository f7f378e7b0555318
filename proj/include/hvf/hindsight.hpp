#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "hvf/envs.hpp"
#include "hvf/nn.hpp"
#include "hvf/replay_buffer.hpp"

namespace hvf {

using HindsightVector = std::vector<double>;

struct EncoderConfig {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;  // one-hot width for discrete actions
  bool discrete = true;
  std::size_t d_h = 16;
  std::size_t hidden = 64;
  double log_std_min = -6.0;
  double log_std_max = 2.0;
};

/// One-hot for discrete actions, clipped values for continuous ones.
std::vector<double> action_features(const Action& a, bool discrete, std::size_t action_dim);

/// Row-stacked view of a set of transitions.
struct TransitionBatch {
  Tensor s;       // N x obs
  Tensor a;       // N x action features
  Tensor s_next;  // N x obs
  Tensor r;       // N x 1

  std::size_t size() const { return s.rows(); }
  /// concat(s, a): the conditioning input of P and C.
  Tensor state_action() const;
  /// concat(s, a, s', r): the input of F.
  Tensor encoder_input() const;
  /// concat(s', r): the prediction target of P.
  Tensor prediction_target() const;
};

TransitionBatch make_batch(std::span<const Transition> ts, const EncoderConfig& cfg);

/// Encoder F (theta_f), predictor P (theta_p) and variational net C (theta_c).
struct EncoderNets {
  EncoderConfig cfg;
  MLPSpec f_spec, p_spec, c_spec;
  ParamStore f, p, c;

  EncoderNets() = default;
  EncoderNets(const EncoderConfig& cfg, std::mt19937_64& rng);
};

/// Mean and clamped log-std of the diagonal Gaussian C(h | s, a).
struct GaussianHead {
  Var mean;
  Var log_std;
};
GaussianHead split_gaussian_head(Var out, double log_std_min, double log_std_max);

/// F over a batch with gradients into theta_f.
Var encode_batch(EncoderNets& nets, const TransitionBatch& batch, Tape& tape);
/// F over a batch as plain values.
Tensor encode_values(const EncoderNets& nets, const TransitionBatch& batch);
HindsightVector encode_hindsight(const EncoderNets& nets, const Transition& t);

/// Mean over the batch of ||P(h, s, a) - (s', r)||^2 with h = F(...).
/// Gradients reach theta_p and theta_f.
Var prediction_loss(EncoderNets& nets, const TransitionBatch& batch, Tape& tape);

/// (1/N) sum log C(h_i | s_i, a_i) with h blocked; gradients reach theta_c only.
Var variational_log_likelihood(EncoderNets& nets, const TransitionBatch& batch, Tape& tape);

/// (1/N) sum [log C(h_i|x_i) - log C(h_{k_i}|x_i)], k_i uniform on the batch
/// (self pairs allowed). theta_c is frozen; gradients reach theta_f.
Var vclub_estimate(EncoderNets& nets, const TransitionBatch& batch, std::mt19937_64& rng,
                   Tape& tape);

struct HindsightUpdateConfig {
  std::size_t batch_size = 256;
  double beta = 1.0;
  double lr_f = 1e-3;
  double lr_p = 1e-3;
  double lr_c = 1e-3;
  bool disable_lf = false;  // drop the vCLUB term from theta_f's objective
  bool disable_lp = false;  // drop the prediction term from theta_f's objective
};

struct HindsightStats {
  bool ran = false;
  double prediction_loss = 0.0;
  double vclub = 0.0;
  double log_likelihood = 0.0;
};

/// One pass of the hindsight learning loop: sample, fit C, estimate vCLUB,
/// fit P, then update F on L_P + beta * I_vCLUB. Returns ran=false without
/// touching any parameter when the buffer holds fewer than batch_size items.
HindsightStats hindsight_update(EncoderNets& nets, const ReplayBuffer& buffer,
                                const HindsightUpdateConfig& cfg, std::mt19937_64& rng);
/// Same loop on an explicit batch.
HindsightStats hindsight_update(EncoderNets& nets, std::span<const Transition> batch,
                                const HindsightUpdateConfig& cfg, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Standalone conditional-Gaussian fitting used by the diagnostics: the same
// CLUB construction for an arbitrary (x, y) sample.

struct ConditionalGaussian {
  MLPSpec spec;
  ParamStore params;
  double log_std_min = -6.0;
  double log_std_max = 2.0;

  ConditionalGaussian(std::size_t x_dim, std::size_t y_dim, std::size_t hidden,
                      std::mt19937_64& rng);
  std::size_t y_dim() const { return spec.out() / 2; }

  /// Per-row mean and log-std for inputs x (values only).
  std::pair<Tensor, Tensor> predict(const Tensor& x) const;
  /// Mean log-likelihood of y given x.
  double log_likelihood(const Tensor& x, const Tensor& y) const;
  /// Adam steps on minibatches of (x, y); returns the last minibatch likelihood.
  double fit(const Tensor& x, const Tensor& y, std::size_t steps, std::size_t minibatch,
             double lr, std::mt19937_64& rng);
};

/// vCLUB with the negative term averaged over all N^2 pairs.
double vclub_all_pairs(const ConditionalGaussian& c, const Tensor& x, const Tensor& y);
/// vCLUB with one uniformly drawn negative per row, as in the training loop.
double vclub_sampled(const ConditionalGaussian& c, const Tensor& x, const Tensor& y,
                     std::mt19937_64& rng);

/// Fits a fresh C(h | s, a) on `fit_set` and reports the all-pairs vCLUB of
/// h against (s, a) averaged over held-out batches.
struct IndependenceReport {
  double vclub_mean = 0.0;
  double vclub_std = 0.0;
  double heldout_log_likelihood = 0.0;
};
using HindsightFn = std::function<Tensor(const TransitionBatch&)>;
IndependenceReport independence_diagnostic(const HindsightFn& encoder, const EncoderConfig& cfg,
                                           std::span<const Transition> fit_set,
                                           std::span<const Transition> heldout,
                                           std::size_t heldout_batch, std::size_t fit_steps,
                                           std::mt19937_64& rng);

}  // namespace hvf
