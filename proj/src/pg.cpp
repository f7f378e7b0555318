#include "hvf/pg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hvf {

// ----------------------------------------------------------------- returns

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw ShapeError("gae_advantages: " + std::to_string(rewards.size()) + " rewards but " +
                     std::to_string(values.size()) + " values");
  }
  // The telescoped sum equals R_t - v_t; computing it that way keeps it exact.
  if (lambda == 1.0) return advantages_with_baseline(discounted_returns(rewards, gamma), values);
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next_v = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_v - values[t];
    running = delta + gamma * lambda * running;
    out[t] = running;
  }
  return out;
}

std::vector<double> advantages_with_baseline(std::span<const double> returns,
                                             std::span<const double> values) {
  if (returns.size() != values.size()) throw ShapeError("advantages_with_baseline: length mismatch");
  std::vector<double> out(returns.size());
  for (std::size_t t = 0; t < returns.size(); ++t) out[t] = returns[t] - values[t];
  return out;
}

// ------------------------------------------------------------------ policy

PolicyNet::PolicyNet(std::size_t obs, std::size_t act, bool is_discrete,
                     const std::vector<std::size_t>& hidden, std::mt19937_64& rng,
                     double init_log_std)
    : discrete(is_discrete), obs_dim(obs), action_dim(act) {
  spec.widths = {obs};
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(act);
  init_mlp(params, "pi", spec, rng, 0.01);
  if (!discrete) params.add("pi/log_std", Tensor(1, act, init_log_std));
}

namespace {

Var broadcast_row(Var row, std::size_t rows) {
  const std::vector<std::size_t> zeros(rows, 0);
  return gather_rows(row, zeros);
}

Tensor action_matrix(std::span<const Action> actions, std::size_t dim) {
  Tensor out(actions.size(), dim);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i].values.size() != dim) throw ShapeError("policy: continuous action width");
    std::copy(actions[i].values.begin(), actions[i].values.end(), out.row_span(i).begin());
  }
  return out;
}

Tensor column(std::span<const double> v) {
  Tensor t(v.size(), 1);
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

std::vector<double> flatten(std::span<const Trajectory> trajs,
                            std::vector<double> Trajectory::*field) {
  std::vector<double> out;
  for (const auto& t : trajs) out.insert(out.end(), (t.*field).begin(), (t.*field).end());
  return out;
}

Tensor stacked_observations(std::span<const Trajectory> trajs) {
  std::size_t rows = 0;
  for (const auto& t : trajs) rows += t.size();
  if (rows == 0) throw ShapeError("batch: no steps");
  const std::size_t dim = trajs.front().steps.front().s.size();
  Tensor out(rows, dim);
  std::size_t r = 0;
  for (const auto& t : trajs) {
    for (const auto& step : t.steps) {
      std::copy(step.s.begin(), step.s.end(), out.row_span(r++).begin());
    }
  }
  return out;
}

std::vector<Action> stacked_actions(std::span<const Trajectory> trajs) {
  std::vector<Action> out;
  for (const auto& t : trajs) {
    for (const auto& step : t.steps) out.push_back(step.a);
  }
  return out;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + " is not finite");
}

}  // namespace

PolicyOutput policy_evaluate(Tape& tape, PolicyNet& policy, const Tensor& obs,
                             std::span<const Action> actions) {
  if (actions.size() != obs.rows()) throw ShapeError("policy_evaluate: one action per row");
  Var out = mlp_forward(policy.spec, policy.params, "pi", tape.constant(obs));
  if (policy.discrete) {
    std::vector<std::size_t> idx(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) idx[i] = actions[i].index;
    return {categorical_log_prob(out, idx), categorical_entropy(out)};
  }
  Var log_std = broadcast_row(tape.param(policy.params, "pi/log_std"), obs.rows());
  Var x = tape.constant(action_matrix(actions, policy.action_dim));
  return {gaussian_log_prob(out, log_std, x), gaussian_entropy(log_std)};
}

std::vector<ActionSample> sample_actions(const PolicyNet& policy, const Tensor& obs,
                                         std::mt19937_64& rng) {
  Tape tape;
  const Tensor out = mlp_forward_frozen(policy.spec, policy.params, "pi", tape.constant(obs)).value();
  std::vector<ActionSample> samples(obs.rows());
  if (policy.discrete) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t r = 0; r < obs.rows(); ++r) {
      auto logits = out.row_span(r);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      const double draw = u(rng) * z;
      double acc = 0.0;
      std::size_t pick = logits.size() - 1;
      for (std::size_t k = 0; k < logits.size(); ++k) {
        acc += std::exp(logits[k] - mx);
        if (draw < acc) {
          pick = k;
          break;
        }
      }
      samples[r].action.index = pick;
      samples[r].log_prob = logits[pick] - mx - std::log(z);
    }
    return samples;
  }
  const Tensor& log_std = policy.params["pi/log_std"].value;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t r = 0; r < obs.rows(); ++r) {
    Action a;
    a.values.resize(policy.action_dim);
    double lp = 0.0;
    for (std::size_t k = 0; k < policy.action_dim; ++k) {
      const double z = n01(rng);
      a.values[k] = out(r, k) + std::exp(log_std.data[k]) * z;
      lp += -0.5 * z * z - log_std.data[k] - 0.5 * std::log(2.0 * M_PI);
    }
    samples[r] = {std::move(a), lp};
  }
  return samples;
}

// -------------------------------------------------------------- trajectory

std::vector<double> Trajectory::rewards() const {
  std::vector<double> r(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) r[t] = steps[t].r;
  return r;
}

Tensor Trajectory::observations() const {
  return stacked_observations(std::span<const Trajectory>(this, 1));
}

std::vector<Action> Trajectory::actions() const {
  return stacked_actions(std::span<const Trajectory>(this, 1));
}

std::vector<Trajectory> collect_episodes(std::span<const std::unique_ptr<Environment>> envs,
                                         const PolicyNet& policy, std::mt19937_64& rng,
                                         double reward_scale) {
  std::vector<Trajectory> trajs(envs.size());
  std::vector<Observation> current(envs.size());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < envs.size(); ++i) {
    current[i] = envs[i]->reset();
    active.push_back(i);
  }
  while (!active.empty()) {
    Tensor obs(active.size(), policy.obs_dim);
    for (std::size_t k = 0; k < active.size(); ++k) {
      std::copy(current[active[k]].begin(), current[active[k]].end(), obs.row_span(k).begin());
    }
    auto samples = sample_actions(policy, obs, rng);
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      Transition t = envs[i]->step(samples[k].action);
      trajs[i].raw_reward += t.r;
      trajs[i].success = trajs[i].success || t.reached_goal;
      t.r *= reward_scale;
      current[i] = t.s_next;
      const bool done = t.done;
      trajs[i].steps.push_back(std::move(t));
      trajs[i].behaviour_log_probs.push_back(samples[k].log_prob);
      if (!done) still.push_back(i);
    }
    active = std::move(still);
  }
  return trajs;
}

// ------------------------------------------------------------------ critic

namespace {

std::vector<TrajectoryInputs> hvf_inputs(std::span<const Trajectory> trajs) {
  std::vector<TrajectoryInputs> in;
  in.reserve(trajs.size());
  for (const auto& t : trajs) {
    if (t.h.rows() != t.size()) {
      throw ShapeError("critic: trajectory has no hindsight vectors attached");
    }
    in.push_back({t.observations(), t.h});
  }
  return in;
}

}  // namespace

Var Critic::values(Tape& tape, std::span<const Trajectory> trajs) {
  if (kind == BaselineKind::StateValue) return svf_values(tape, svf, stacked_observations(trajs));
  const auto in = hvf_inputs(trajs);
  return hvf_values_batch(tape, hvf, in);
}

std::vector<std::vector<double>> Critic::predict(std::span<const Trajectory> trajs) const {
  std::vector<double> flat;
  if (kind == BaselineKind::StateValue) {
    flat = svf_predict(svf, stacked_observations(trajs));
  } else {
    const auto in = hvf_inputs(trajs);
    flat = hvf_predict_batch(hvf, in);
  }
  std::vector<std::vector<double>> out;
  std::size_t offset = 0;
  for (const auto& t : trajs) {
    out.emplace_back(flat.begin() + offset, flat.begin() + offset + t.size());
    offset += t.size();
  }
  return out;
}

void attach_hindsight(std::span<Trajectory> trajs, const EncoderNets& encoder) {
  for (auto& t : trajs) {
    t.h = encode_values(encoder, make_batch(t.steps, encoder.cfg));
  }
}

void compute_advantages(std::span<Trajectory> trajs, const Critic& critic, double gamma,
                        double lambda) {
  const auto values = critic.predict(trajs);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    Trajectory& t = trajs[i];
    const auto rewards = t.rewards();
    t.returns = discounted_returns(rewards, gamma);
    t.values = values[i];
    t.advantages = lambda == 1.0 ? advantages_with_baseline(t.returns, t.values)
                                 : gae_advantages(rewards, t.values, gamma, lambda);
  }
}

// ----------------------------------------------------------------- updates

namespace {

double critic_step(Critic& critic, std::span<const Trajectory> batch, const A2CConfig& cfg) {
  Tape tape;
  const auto returns = flatten(batch, &Trajectory::returns);
  Var loss = value_loss(critic.values(tape, batch), returns);
  const double mse = loss.value().item();
  check_finite(mse, "critic loss");
  critic.params().zero_grad();
  tape.backward(cfg.value_coef * loss);
  critic.params().clip_grad_norm(cfg.max_grad_norm);
  adam_step(critic.params(), cfg.lr_value);
  return mse;
}

}  // namespace

UpdateStats a2c_update(PolicyNet& policy, Critic& critic, std::span<const Trajectory> batch,
                       const A2CConfig& cfg) {
  if (batch.empty()) throw ShapeError("a2c_update: empty batch");
  UpdateStats stats;
  {
    Tape tape;
    const auto actions = stacked_actions(batch);
    PolicyOutput out = policy_evaluate(tape, policy, stacked_observations(batch), actions);
    const auto adv = flatten(batch, &Trajectory::advantages);
    if (adv.size() != actions.size()) throw ShapeError("a2c_update: advantages not computed");
    Var surrogate = mean(out.log_prob * tape.constant(column(adv)));
    Var ent = mean(out.entropy);
    Var loss = -surrogate - cfg.entropy_coef * ent;
    stats.policy_loss = loss.value().item();
    stats.entropy = ent.value().item();
    check_finite(stats.policy_loss, "policy loss");
    policy.params.zero_grad();
    tape.backward(loss);
    stats.policy_grad_norm = policy.params.clip_grad_norm(cfg.max_grad_norm);
    adam_step(policy.params, cfg.lr_policy);
  }
  stats.critic_mse = critic_step(critic, batch, cfg);
  return stats;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

namespace {

struct Surrogate {
  bool any = false;  // false when every sample was skipped
  Var objective;     // mean clipped surrogate
  Var entropy;       // per-sample entropies of the kept samples
  std::size_t skipped = 0;
};

// Clipped surrogate over the samples whose importance ratio is finite.
Surrogate clipped_objective(Tape& tape, PolicyNet& policy, std::span<const Trajectory> part,
                            std::vector<double> adv, std::vector<double> old, double eps) {
  const auto actions = stacked_actions(part);
  PolicyOutput out = policy_evaluate(tape, policy, stacked_observations(part), actions);
  Surrogate s;
  Var log_prob = out.log_prob;
  s.entropy = out.entropy;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < old.size(); ++i) {
    if (std::isfinite(std::exp(log_prob.value().data[i] - old[i]))) keep.push_back(i);
  }
  s.skipped = old.size() - keep.size();
  if (keep.empty()) return s;
  if (keep.size() != old.size()) {
    log_prob = gather_rows(log_prob, keep);
    s.entropy = gather_rows(s.entropy, keep);
    std::vector<double> a2, o2;
    for (auto i : keep) {
      a2.push_back(adv[i]);
      o2.push_back(old[i]);
    }
    adv = std::move(a2);
    old = std::move(o2);
  }
  Var a = tape.constant(column(adv));
  Var ratio = exp(log_prob - tape.constant(column(old)));
  s.objective = mean(minimum(ratio * a, clamp(ratio, 1.0 - eps, 1.0 + eps) * a));
  s.any = true;
  return s;
}

}  // namespace

UpdateStats ppo_update(PolicyNet& policy, Critic& critic, std::span<Trajectory> batch,
                       const PPOConfig& cfg, std::mt19937_64& rng) {
  if (batch.empty()) throw ShapeError("ppo_update: empty batch");
  for (const auto& t : batch) {
    if (t.behaviour_log_probs.size() != t.size()) {
      throw ShapeError("ppo_update: behaviour log-probs missing");
    }
  }
  // Advantages used by the surrogate, optionally normalized over the batch.
  std::vector<std::vector<double>> adv(batch.size());
  {
    std::vector<double> all = flatten(batch, &Trajectory::advantages);
    double m = 0.0, sd = 1.0;
    if (cfg.normalize_advantages && all.size() > 1) {
      m = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
      double var = 0.0;
      for (double a : all) var += (a - m) * (a - m);
      sd = std::sqrt(var / static_cast<double>(all.size())) + 1e-8;
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      adv[i] = batch[i].advantages;
      for (double& a : adv[i]) a = (a - m) / sd;
    }
  }

  UpdateStats stats;
  {
    Tape tape;
    const auto returns = flatten(batch, &Trajectory::returns);
    stats.critic_mse = value_loss(critic.values(tape, batch), returns).value().item();
  }

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n_mb =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.minibatches, 1)), 1, batch.size());
  double loss_sum = 0.0, ent_sum = 0.0;
  std::size_t loss_count = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t mb = 0; mb < n_mb; ++mb) {
      std::vector<Trajectory> part;
      std::vector<double> part_adv, part_old;
      for (std::size_t k = mb; k < order.size(); k += n_mb) {
        const Trajectory& t = batch[order[k]];
        part.push_back(t);
        part_adv.insert(part_adv.end(), adv[order[k]].begin(), adv[order[k]].end());
        part_old.insert(part_old.end(), t.behaviour_log_probs.begin(), t.behaviour_log_probs.end());
      }

      Tape tape;
      Surrogate sur = clipped_objective(tape, policy, part, part_adv, part_old, cfg.clip_eps);
      stats.skipped_samples += sur.skipped;
      if (!sur.any) continue;
      Var ent = mean(sur.entropy);
      Var loss = -sur.objective - cfg.entropy_coef * ent;
      check_finite(loss.value().item(), "ppo policy loss");
      loss_sum += loss.value().item();
      ent_sum += ent.value().item();
      ++loss_count;
      policy.params.zero_grad();
      tape.backward(loss);
      stats.policy_grad_norm = policy.params.clip_grad_norm(cfg.max_grad_norm);
      adam_step(policy.params, cfg.lr_policy);

      critic_step(critic, part, cfg);
    }
  }
  if (loss_count > 0) {
    stats.policy_loss = loss_sum / static_cast<double>(loss_count);
    stats.entropy = ent_sum / static_cast<double>(loss_count);
  }
  return stats;
}

// ------------------------------------------------------- variance probe

std::vector<double> policy_gradient_vector(PolicyNet& policy, std::span<const Trajectory> batch) {
  if (batch.empty()) throw ShapeError("policy_gradient_vector: empty batch");
  Tape tape;
  const auto actions = stacked_actions(batch);
  PolicyOutput out = policy_evaluate(tape, policy, stacked_observations(batch), actions);
  const auto adv = flatten(batch, &Trajectory::advantages);
  if (adv.size() != actions.size()) throw ShapeError("policy_gradient_vector: advantages missing");
  Var objective = mean(out.log_prob * tape.constant(column(adv)));
  policy.params.zero_grad();
  tape.backward(objective);
  auto g = policy.params.flat_grad();
  policy.params.zero_grad();
  return g;
}

std::vector<double> ppo_gradient_vector(PolicyNet& policy, std::span<const Trajectory> batch,
                                        double clip_eps) {
  if (batch.empty()) throw ShapeError("ppo_gradient_vector: empty batch");
  const auto adv = flatten(batch, &Trajectory::advantages);
  const auto old = flatten(batch, &Trajectory::behaviour_log_probs);
  if (adv.size() != old.size()) throw ShapeError("ppo_gradient_vector: advantages missing");
  Tape tape;
  Surrogate sur = clipped_objective(tape, policy, batch, adv, old, clip_eps);
  policy.params.zero_grad();
  if (sur.any) tape.backward(sur.objective);
  auto g = policy.params.flat_grad();
  policy.params.zero_grad();
  return g;
}

double gradient_variance_probe(PolicyNet& policy,
                               std::span<const std::vector<Trajectory>> batches) {
  if (batches.size() < 2) throw ShapeError("gradient_variance_probe: need K >= 2 batches");
  std::vector<std::vector<double>> grads;
  for (const auto& b : batches) grads.push_back(policy_gradient_vector(policy, b));
  const std::size_t dim = grads.front().size();
  const double k = static_cast<double>(grads.size());
  double trace = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double m = 0.0;
    for (const auto& g : grads) m += g[d];
    m /= k;
    double var = 0.0;
    for (const auto& g : grads) var += (g[d] - m) * (g[d] - m);
    trace += var / (k - 1.0);
  }
  return trace;
}

}  // namespace hvf
