#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "hvf/envs.hpp"
#include "hvf/hindsight.hpp"
#include "hvf/values.hpp"

namespace hvf {

// ----------------------------------------------------------------- returns

/// R_t = sum_{t' >= t} gamma^(t'-t) r_t', by backward recursion; no bootstrap.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// delta_t = r_t + gamma v_{t+1} - v_t (v_T = 0); A_t = sum_k (gamma lambda)^k delta_{t+k}.
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   double gamma, double lambda);

/// A_t = R_t - v_t.
std::vector<double> advantages_with_baseline(std::span<const double> returns,
                                             std::span<const double> values);

// ------------------------------------------------------------------ policy

/// Categorical policy over logits, or a diagonal Gaussian with a learned,
/// state-independent log-std ("pi/log_std").
struct PolicyNet {
  bool discrete = true;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  MLPSpec spec;
  ParamStore params;

  PolicyNet() = default;
  PolicyNet(std::size_t obs_dim, std::size_t action_dim, bool discrete,
            const std::vector<std::size_t>& hidden, std::mt19937_64& rng,
            double init_log_std = -0.5);
};

struct PolicyOutput {
  Var log_prob;  // B x 1
  Var entropy;   // B x 1
};

PolicyOutput policy_evaluate(Tape& tape, PolicyNet& policy, const Tensor& obs,
                             std::span<const Action> actions);

struct ActionSample {
  Action action;
  double log_prob = 0.0;
};

/// One action per observation row, drawn in row order from `rng`.
std::vector<ActionSample> sample_actions(const PolicyNet& policy, const Tensor& obs,
                                         std::mt19937_64& rng);

// -------------------------------------------------------------- trajectory

struct Trajectory {
  std::vector<Transition> steps;
  std::vector<double> behaviour_log_probs;
  double raw_reward = 0.0;  // undiscounted sum of unscaled rewards
  bool success = false;     // reached the goal (Grid Migrate)

  Tensor h;  // T x d_h, row t = h_{t+1}; empty for the state-value baseline
  std::vector<double> returns;
  std::vector<double> values;
  std::vector<double> advantages;

  std::size_t size() const { return steps.size(); }
  std::vector<double> rewards() const;
  Tensor observations() const;
  std::vector<Action> actions() const;
};

/// Runs every environment for one full episode with lockstep batched action
/// sampling. Reward scaling multiplies the learning reward stored in each
/// transition; raw_reward keeps the unscaled sum.
std::vector<Trajectory> collect_episodes(std::span<const std::unique_ptr<Environment>> envs,
                                         const PolicyNet& policy, std::mt19937_64& rng,
                                         double reward_scale = 1.0);

// ------------------------------------------------------------------ critic

enum class BaselineKind { StateValue, Hindsight };

/// The baseline used by the learner: either V(s) or v(s, h+).
struct Critic {
  BaselineKind kind = BaselineKind::StateValue;
  StateValueNet svf;
  HindsightValueNet hvf;

  ParamStore& params() { return kind == BaselineKind::Hindsight ? hvf.params : svf.params; }
  const ParamStore& params() const {
    return kind == BaselineKind::Hindsight ? hvf.params : svf.params;
  }

  /// Trainable values for all steps, trajectory-major. Trajectory::h must be
  /// filled for the hindsight baseline; it enters as a constant.
  Var values(Tape& tape, std::span<const Trajectory> trajs);
  std::vector<std::vector<double>> predict(std::span<const Trajectory> trajs) const;
};

/// Fills Trajectory::h with F applied to each trajectory's transitions.
void attach_hindsight(std::span<Trajectory> trajs, const EncoderNets& encoder);

/// Fills returns, values and advantages (GAE with the given lambda; lambda = 1
/// gives R_t - v_t exactly).
void compute_advantages(std::span<Trajectory> trajs, const Critic& critic, double gamma,
                        double lambda);

// ----------------------------------------------------------------- updates

struct A2CConfig {
  double gamma = 0.99;
  double lambda = 1.0;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double lr_policy = 7e-4;
  double lr_value = 1e-3;
  double max_grad_norm = 0.5;
};

struct PPOConfig : A2CConfig {
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 4;
  bool normalize_advantages = true;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double critic_mse = 0.0;  // before the update
  double entropy = 0.0;
  double policy_grad_norm = 0.0;
  std::size_t skipped_samples = 0;
};

/// One Adam step on the policy for -mean(log pi * A) - c_ent * entropy, and
/// one on the critic for its value loss. Advantages are constants.
UpdateStats a2c_update(PolicyNet& policy, Critic& critic, std::span<const Trajectory> batch,
                       const A2CConfig& cfg);

/// Clipped-surrogate epochs over trajectory minibatches.
UpdateStats ppo_update(PolicyNet& policy, Critic& critic, std::span<Trajectory> batch,
                       const PPOConfig& cfg, std::mt19937_64& rng);

/// Per-sample clipped surrogate min(rho A, clip(rho, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double eps);

// ------------------------------------------------------- variance probe

/// Gradient of mean_t(log pi(a_t|s_t) * A_t) over the batch w.r.t. the policy
/// parameters (flattened). Parameter values and Adam state are untouched.
std::vector<double> policy_gradient_vector(PolicyNet& policy, std::span<const Trajectory> batch);

/// Gradient of the mean clipped surrogate with the stored advantages as-is
/// (no normalization) and the behaviour log-probs as the old policy.
std::vector<double> ppo_gradient_vector(PolicyNet& policy, std::span<const Trajectory> batch,
                                        double clip_eps);

/// Trace of the empirical covariance of the policy gradient across K >= 2
/// independently collected batches (advantages already filled).
double gradient_variance_probe(PolicyNet& policy,
                               std::span<const std::vector<Trajectory>> batches);

}  // namespace hvf
