#include "hvf/hindsight.hpp"

#include <algorithm>
#include <cmath>

namespace hvf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Tensor hcat(std::initializer_list<const Tensor*> parts) {
  const std::size_t rows = (*parts.begin())->rows();
  std::size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) throw ShapeError("hcat: row mismatch");
    cols += p->cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
      auto src = p->row_span(r);
      std::copy(src.begin(), src.end(), out.data.begin() + r * cols + offset);
      offset += p->cols();
    }
  }
  return out;
}

/// log N(y; mean, exp(log_std)) summed over columns, for one row pairing.
double gaussian_row_log_density(std::span<const double> mean, std::span<const double> log_std,
                                std::span<const double> y) {
  double lp = -0.5 * kLog2Pi * static_cast<double>(y.size());
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double z = (y[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * z * z - log_std[d];
  }
  return lp;
}

void require_nonempty(std::size_t n, const char* op) {
  if (n == 0) throw ShapeError(std::string(op) + ": empty batch");
}

}  // namespace

std::vector<double> action_features(const Action& a, bool discrete, std::size_t action_dim) {
  std::vector<double> out(action_dim, 0.0);
  if (discrete) {
    if (a.index >= action_dim) throw ShapeError("action_features: index out of range");
    out[a.index] = 1.0;
    return out;
  }
  if (a.values.size() != action_dim) throw ShapeError("action_features: wrong action width");
  for (std::size_t k = 0; k < action_dim; ++k) out[k] = std::clamp(a.values[k], -1.0, 1.0);
  return out;
}

Tensor TransitionBatch::state_action() const { return hcat({&s, &a}); }
Tensor TransitionBatch::encoder_input() const { return hcat({&s, &a, &s_next, &r}); }
Tensor TransitionBatch::prediction_target() const { return hcat({&s_next, &r}); }

TransitionBatch make_batch(std::span<const Transition> ts, const EncoderConfig& cfg) {
  TransitionBatch b;
  const std::size_t n = ts.size();
  b.s = Tensor(n, cfg.obs_dim);
  b.a = Tensor(n, cfg.action_dim);
  b.s_next = Tensor(n, cfg.obs_dim);
  b.r = Tensor(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = ts[i];
    if (t.s.size() != cfg.obs_dim || t.s_next.size() != cfg.obs_dim) {
      throw ShapeError("make_batch: observation width " + std::to_string(t.s.size()) +
                       " expected " + std::to_string(cfg.obs_dim));
    }
    std::copy(t.s.begin(), t.s.end(), b.s.row_span(i).begin());
    std::copy(t.s_next.begin(), t.s_next.end(), b.s_next.row_span(i).begin());
    const auto af = action_features(t.a, cfg.discrete, cfg.action_dim);
    std::copy(af.begin(), af.end(), b.a.row_span(i).begin());
    b.r.data[i] = t.r;
  }
  return b;
}

EncoderNets::EncoderNets(const EncoderConfig& config, std::mt19937_64& rng) : cfg(config) {
  const std::size_t obs = cfg.obs_dim, act = cfg.action_dim, H = cfg.hidden;
  f_spec = MLPSpec{{obs + act + obs + 1, H, H, cfg.d_h}};
  p_spec = MLPSpec{{cfg.d_h + obs + act, H, H, obs + 1}};
  c_spec = MLPSpec{{obs + act, H, H, 2 * cfg.d_h}};
  // Near-constant h at the start, so early critics see no action leak.
  init_mlp(f, "F", f_spec, rng, 0.01);
  init_mlp(p, "P", p_spec, rng);
  init_mlp(c, "C", c_spec, rng, 0.1);
}

GaussianHead split_gaussian_head(Var out, double log_std_min, double log_std_max) {
  const std::size_t d = out.cols() / 2;
  return {slice_cols(out, 0, d), clamp(slice_cols(out, d, 2 * d), log_std_min, log_std_max)};
}

Var encode_batch(EncoderNets& nets, const TransitionBatch& batch, Tape& tape) {
  return mlp_forward(nets.f_spec, nets.f, "F", tape.constant(batch.encoder_input()));
}

Tensor encode_values(const EncoderNets& nets, const TransitionBatch& batch) {
  Tape tape;
  return mlp_forward_frozen(nets.f_spec, nets.f, "F", tape.constant(batch.encoder_input()))
      .value();
}

HindsightVector encode_hindsight(const EncoderNets& nets, const Transition& t) {
  const TransitionBatch b = make_batch(std::span<const Transition>(&t, 1), nets.cfg);
  return encode_values(nets, b).data;
}

namespace {

Var prediction_loss_from(EncoderNets& nets, const TransitionBatch& batch, Var h) {
  Tape& tape = h.tape();
  Var x = concat_cols({h, tape.constant(batch.state_action())});
  Var pred = mlp_forward(nets.p_spec, nets.p, "P", x);
  Var err = pred - tape.constant(batch.prediction_target());
  return mean(row_sum(square(err)));
}

GaussianHead c_head(EncoderNets& nets, const TransitionBatch& batch, Tape& tape, bool frozen) {
  Var x = tape.constant(batch.state_action());
  Var out = frozen ? mlp_forward_frozen(nets.c_spec, nets.c, "C", x)
                   : mlp_forward(nets.c_spec, nets.c, "C", x);
  return split_gaussian_head(out, nets.cfg.log_std_min, nets.cfg.log_std_max);
}

Var vclub_from(const GaussianHead& head, Var h, std::span<const std::size_t> negatives) {
  Var positive = gaussian_log_prob(head.mean, head.log_std, h);
  Var negative = gaussian_log_prob(head.mean, head.log_std, gather_rows(h, negatives));
  return mean(positive - negative);
}

std::vector<std::size_t> draw_negatives(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> k(n);
  for (auto& v : k) v = pick(rng);
  return k;
}

}  // namespace

Var prediction_loss(EncoderNets& nets, const TransitionBatch& batch, Tape& tape) {
  require_nonempty(batch.size(), "prediction_loss");
  return prediction_loss_from(nets, batch, encode_batch(nets, batch, tape));
}

Var variational_log_likelihood(EncoderNets& nets, const TransitionBatch& batch, Tape& tape) {
  require_nonempty(batch.size(), "variational_log_likelihood");
  Var h = tape.constant(encode_values(nets, batch));
  GaussianHead head = c_head(nets, batch, tape, /*frozen=*/false);
  return mean(gaussian_log_prob(head.mean, head.log_std, h));
}

Var vclub_estimate(EncoderNets& nets, const TransitionBatch& batch, std::mt19937_64& rng,
                   Tape& tape) {
  require_nonempty(batch.size(), "vclub_estimate");
  Var h = encode_batch(nets, batch, tape);
  GaussianHead head = c_head(nets, batch, tape, /*frozen=*/true);
  return vclub_from(head, h, draw_negatives(batch.size(), rng));
}

HindsightStats hindsight_update(EncoderNets& nets, const ReplayBuffer& buffer,
                                const HindsightUpdateConfig& cfg, std::mt19937_64& rng) {
  if (cfg.batch_size == 0 || buffer.size() < cfg.batch_size) return {};
  const auto batch = buffer.sample(cfg.batch_size, rng);
  return hindsight_update(nets, std::span<const Transition>(batch), cfg, rng);
}

HindsightStats hindsight_update(EncoderNets& nets, std::span<const Transition> transitions,
                                const HindsightUpdateConfig& cfg, std::mt19937_64& rng) {
  require_nonempty(transitions.size(), "hindsight_update");
  const TransitionBatch batch = make_batch(transitions, nets.cfg);
  HindsightStats stats;
  stats.ran = true;

  // Fit C to the current encoder's h (h is a constant here).
  {
    Tape tape;
    Var ll = variational_log_likelihood(nets, batch, tape);
    stats.log_likelihood = ll.value().item();
    nets.c.zero_grad();
    tape.backward(-ll);
    adam_step(nets.c, cfg.lr_c);
  }

  // vCLUB against the updated, now frozen C; prediction loss through P.
  Tape tape;
  Var h = encode_batch(nets, batch, tape);
  GaussianHead head = c_head(nets, batch, tape, /*frozen=*/true);
  Var club = vclub_from(head, h, draw_negatives(batch.size(), rng));
  Var lp = prediction_loss_from(nets, batch, cfg.disable_lp ? stop_gradient(h) : h);
  stats.vclub = club.value().item();
  stats.prediction_loss = lp.value().item();
  if (!std::isfinite(stats.vclub) || !std::isfinite(stats.prediction_loss)) {
    throw NonFiniteError("hindsight_update: non-finite L_P or I_vCLUB");
  }

  Var objective = cfg.disable_lf ? lp : lp + cfg.beta * club;
  nets.p.zero_grad();
  nets.f.zero_grad();
  tape.backward(objective);
  adam_step(nets.p, cfg.lr_p);
  if (!(cfg.disable_lf && cfg.disable_lp)) adam_step(nets.f, cfg.lr_f);
  return stats;
}

// ------------------------------------------------------ ConditionalGaussian

ConditionalGaussian::ConditionalGaussian(std::size_t x_dim, std::size_t y_dim, std::size_t hidden,
                                         std::mt19937_64& rng)
    : spec{{x_dim, hidden, hidden, 2 * y_dim}} {
  init_mlp(params, "C", spec, rng, 0.1);
}

std::pair<Tensor, Tensor> ConditionalGaussian::predict(const Tensor& x) const {
  Tape tape;
  Var out = mlp_forward_frozen(spec, params, "C", tape.constant(x));
  GaussianHead head = split_gaussian_head(out, log_std_min, log_std_max);
  return {head.mean.value(), head.log_std.value()};
}

double ConditionalGaussian::log_likelihood(const Tensor& x, const Tensor& y) const {
  require_nonempty(x.rows(), "log_likelihood");
  auto [mu, ls] = predict(x);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    total += gaussian_row_log_density(mu.row_span(i), ls.row_span(i), y.row_span(i));
  }
  return total / static_cast<double>(x.rows());
}

double ConditionalGaussian::fit(const Tensor& x, const Tensor& y, std::size_t steps,
                                std::size_t minibatch, double lr, std::mt19937_64& rng) {
  require_nonempty(x.rows(), "fit");
  std::uniform_int_distribution<std::size_t> pick(0, x.rows() - 1);
  std::vector<std::size_t> idx(std::min(minibatch, x.rows()));
  double last = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    for (auto& i : idx) i = pick(rng);
    Tape tape;
    Var xb = gather_rows(tape.constant(x), idx);
    Var yb = gather_rows(tape.constant(y), idx);
    GaussianHead head =
        split_gaussian_head(mlp_forward(spec, params, "C", xb), log_std_min, log_std_max);
    Var ll = mean(gaussian_log_prob(head.mean, head.log_std, yb));
    last = ll.value().item();
    params.zero_grad();
    tape.backward(-ll);
    adam_step(params, lr);
  }
  return last;
}

double vclub_all_pairs(const ConditionalGaussian& c, const Tensor& x, const Tensor& y) {
  require_nonempty(x.rows(), "vclub_all_pairs");
  auto [mu, ls] = c.predict(x);
  const std::size_t n = x.rows();
  double positive = 0.0, negative = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    positive += gaussian_row_log_density(mu.row_span(i), ls.row_span(i), y.row_span(i));
    for (std::size_t j = 0; j < n; ++j) {
      negative += gaussian_row_log_density(mu.row_span(i), ls.row_span(i), y.row_span(j));
    }
  }
  const double dn = static_cast<double>(n);
  return positive / dn - negative / (dn * dn);
}

double vclub_sampled(const ConditionalGaussian& c, const Tensor& x, const Tensor& y,
                     std::mt19937_64& rng) {
  require_nonempty(x.rows(), "vclub_sampled");
  auto [mu, ls] = c.predict(x);
  const auto k = draw_negatives(x.rows(), rng);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    total += gaussian_row_log_density(mu.row_span(i), ls.row_span(i), y.row_span(i)) -
             gaussian_row_log_density(mu.row_span(i), ls.row_span(i), y.row_span(k[i]));
  }
  return total / static_cast<double>(x.rows());
}

IndependenceReport independence_diagnostic(const HindsightFn& encoder, const EncoderConfig& cfg,
                                           std::span<const Transition> fit_set,
                                           std::span<const Transition> heldout,
                                           std::size_t heldout_batch, std::size_t fit_steps,
                                           std::mt19937_64& rng) {
  require_nonempty(fit_set.size(), "independence_diagnostic");
  require_nonempty(heldout.size(), "independence_diagnostic");
  const TransitionBatch fit_batch = make_batch(fit_set, cfg);
  const Tensor fit_h = encoder(fit_batch);
  ConditionalGaussian c(cfg.obs_dim + cfg.action_dim, fit_h.cols(), cfg.hidden, rng);
  c.log_std_min = cfg.log_std_min;
  c.log_std_max = cfg.log_std_max;
  c.fit(fit_batch.state_action(), fit_h, fit_steps, 256, 1e-3, rng);

  IndependenceReport report;
  std::vector<double> estimates;
  double ll_total = 0.0;
  const std::size_t chunk = std::max<std::size_t>(2, heldout_batch);
  for (std::size_t begin = 0; begin + chunk <= heldout.size(); begin += chunk) {
    const TransitionBatch b = make_batch(heldout.subspan(begin, chunk), cfg);
    const Tensor h = encoder(b);
    const Tensor x = b.state_action();
    estimates.push_back(vclub_all_pairs(c, x, h));
    ll_total += c.log_likelihood(x, h);
  }
  if (estimates.empty()) throw ShapeError("independence_diagnostic: held-out set smaller than batch");
  double m = 0.0;
  for (double e : estimates) m += e;
  m /= static_cast<double>(estimates.size());
  double var = 0.0;
  for (double e : estimates) var += (e - m) * (e - m);
  report.vclub_mean = m;
  report.vclub_std = estimates.size() > 1 ? std::sqrt(var / (estimates.size() - 1)) : 0.0;
  report.heldout_log_likelihood = ll_total / static_cast<double>(estimates.size());
  return report;
}

}  // namespace hvf
