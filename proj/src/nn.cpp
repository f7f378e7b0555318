#include "hvf/nn.hpp"

#include <cmath>

namespace hvf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

std::string wname(const std::string& prefix, std::size_t k) {
  return prefix + "/w" + std::to_string(k);
}
std::string bname(const std::string& prefix, std::size_t k) {
  return prefix + "/b" + std::to_string(k);
}

template <typename BindFn>
Var mlp_apply(const MLPSpec& spec, Var x, BindFn&& bind) {
  spec.validate();
  if (x.value().shape.size() != 2 || x.cols() != spec.in()) {
    throw ShapeError("mlp: input " + x.value().shape_str() + " expected width " +
                     std::to_string(spec.in()));
  }
  Var h = x;
  for (std::size_t k = 0; k < spec.layers(); ++k) {
    auto [w, b] = bind(k);
    h = linear(h, w, b);
    if (k + 1 < spec.layers()) h = tanh(h);
  }
  return h;
}

}  // namespace

void MLPSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("mlp: need at least one layer");
  for (auto w : widths) {
    if (w == 0) throw ShapeError("mlp: zero layer width");
  }
}

void init_mlp(ParamStore& store, const std::string& prefix, const MLPSpec& spec,
              std::mt19937_64& rng, double out_gain) {
  spec.validate();
  for (std::size_t k = 0; k < spec.layers(); ++k) {
    const std::size_t in = spec.widths[k], out = spec.widths[k + 1];
    const double gain = (k + 1 == spec.layers()) ? out_gain : 1.0;
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(in)));
    Tensor w(out, in);
    for (double& v : w.data) v = dist(rng);
    store.add(wname(prefix, k), std::move(w));
    store.add(bname(prefix, k), Tensor(1, out));
  }
}

Var mlp_forward(const MLPSpec& spec, ParamStore& store, const std::string& prefix, Var x) {
  Tape& tape = x.tape();
  return mlp_apply(spec, x, [&](std::size_t k) {
    return std::pair{tape.param(store, wname(prefix, k)), tape.param(store, bname(prefix, k))};
  });
}

Var mlp_forward_frozen(const MLPSpec& spec, const ParamStore& store, const std::string& prefix,
                       Var x) {
  Tape& tape = x.tape();
  return mlp_apply(spec, x, [&](std::size_t k) {
    return std::pair{tape.frozen(store, wname(prefix, k)), tape.frozen(store, bname(prefix, k))};
  });
}

void init_lstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec,
               std::mt19937_64& rng) {
  if (spec.input == 0 || spec.hidden == 0) throw ShapeError("lstm: zero size");
  const std::size_t fan_in = spec.input + spec.hidden;
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  Tensor w(4 * spec.hidden, fan_in);
  for (double& v : w.data) v = dist(rng);
  store.add(prefix + "/w", std::move(w));
  // Forget-gate bias starts at 1 so the cell carries information across steps.
  Tensor b(1, 4 * spec.hidden);
  for (std::size_t j = spec.hidden; j < 2 * spec.hidden; ++j) b.data[j] = 1.0;
  store.add(prefix + "/b", std::move(b));
}

LSTMState lstm_zero_state(Tape& tape, const LSTMSpec& spec, std::size_t batch) {
  return {tape.constant(Tensor(batch, spec.hidden)), tape.constant(Tensor(batch, spec.hidden))};
}

LSTMWeights lstm_weights(Tape& tape, ParamStore& store, const std::string& prefix) {
  return {tape.param(store, prefix + "/w"), tape.param(store, prefix + "/b")};
}

LSTMState lstm_cell(const LSTMSpec& spec, const LSTMWeights& weights, Var input,
                    const LSTMState& state) {
  if (input.value().shape.size() != 2 || input.cols() != spec.input) {
    throw ShapeError("lstm: input " + input.value().shape_str() + " expected width " +
                     std::to_string(spec.input));
  }
  if (state.h.cols() != spec.hidden || state.c.cols() != spec.hidden ||
      state.h.rows() != input.rows() || state.c.rows() != input.rows()) {
    throw ShapeError("lstm: state shape does not match configured hidden size");
  }
  const std::size_t H = spec.hidden;
  Var gates = linear(concat_cols({input, state.h}), weights.w, weights.b);
  Var i = sigmoid(slice_cols(gates, 0, H));
  Var f = sigmoid(slice_cols(gates, H, 2 * H));
  Var g = tanh(slice_cols(gates, 2 * H, 3 * H));
  Var o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  Var c = f * state.c + i * g;
  Var h = o * tanh(c);
  return {h, c};
}

LSTMState lstm_cell(const LSTMSpec& spec, ParamStore& store, const std::string& prefix,
                    Var input, const LSTMState& state) {
  return lstm_cell(spec, lstm_weights(input.tape(), store, prefix), input, state);
}

Var categorical_log_prob(Var logits, std::span<const std::size_t> actions) {
  return pick(log_softmax(logits), actions);
}

Var gaussian_log_prob(Var mean, Var log_std, Var x) {
  if (!mean.value().same_shape(log_std.value()) || !mean.value().same_shape(x.value())) {
    throw ShapeError("gaussian_log_prob: mean, log_std and x must share a shape");
  }
  Var z = (x - mean) * exp(-log_std);
  Var per_dim = -0.5 * square(z) - log_std;
  return add_scalar(row_sum(per_dim), -0.5 * kLog2Pi * static_cast<double>(mean.cols()));
}

Var categorical_entropy(Var logits) {
  Var lp = log_softmax(logits);
  return -row_sum(exp(lp) * lp);
}

Var gaussian_entropy(Var log_std) {
  return add_scalar(row_sum(log_std), 0.5 * (1.0 + kLog2Pi) * static_cast<double>(log_std.cols()));
}

}  // namespace hvf
