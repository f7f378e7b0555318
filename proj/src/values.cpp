#include "hvf/values.hpp"

#include <map>

namespace hvf {

namespace {

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  return widths;
}

void check_traj(const Tensor& obs, const Tensor& h, std::size_t obs_dim, std::size_t d_h) {
  if (obs.rows() == 0) throw ShapeError("hvf_values: empty trajectory");
  if (h.rows() != obs.rows()) {
    throw ShapeError("hvf_values: " + std::to_string(obs.rows()) + " states but " +
                     std::to_string(h.rows()) + " hindsight vectors");
  }
  if (obs.cols() != obs_dim || h.cols() != d_h) throw ShapeError("hvf_values: width mismatch");
}

/// Backward scan over a group of equal-length trajectories; rows of the
/// result are time-major (t, member).
Var scan_group(const HindsightValueNet& net, ParamStore* trainable, const LSTMWeights& w,
               std::span<const TrajectoryInputs> trajs, std::span<const std::size_t> members,
               Tape& tape) {
  const std::size_t T = trajs[members[0]].obs.rows();
  const std::size_t G = members.size();
  const std::size_t obs_dim = net.obs_dim();
  const std::size_t d_h = net.lstm.input;

  std::vector<Var> hidden(T);
  LSTMState state = lstm_zero_state(tape, net.lstm, G);
  for (std::size_t t = T; t-- > 0;) {
    Tensor h_t(G, d_h);
    for (std::size_t g = 0; g < G; ++g) {
      auto src = trajs[members[g]].h.row_span(t);
      std::copy(src.begin(), src.end(), h_t.row_span(g).begin());
    }
    state = lstm_cell(net.lstm, w, tape.constant(std::move(h_t)), state);
    hidden[t] = state.h;
  }
  Tensor s_all(T * G, obs_dim);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t g = 0; g < G; ++g) {
      auto src = trajs[members[g]].obs.row_span(t);
      std::copy(src.begin(), src.end(), s_all.row_span(t * G + g).begin());
    }
  }
  Var x = concat_cols({tape.constant(std::move(s_all)), concat_rows(hidden)});
  return trainable ? mlp_forward(net.head, *trainable, "head", x)
                   : mlp_forward_frozen(net.head, net.params, "head", x);
}

/// trainable == nullptr evaluates with the parameters as constants.
Var hvf_batch_impl(Tape& tape, const HindsightValueNet& net, ParamStore* trainable,
                   std::span<const TrajectoryInputs> trajs) {
  if (trajs.empty()) throw ShapeError("hvf_values: no trajectories");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  std::vector<std::size_t> offsets(trajs.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    check_traj(trajs[i].obs, trajs[i].h, net.obs_dim(), net.lstm.input);
    groups[trajs[i].obs.rows()].push_back(i);
    offsets[i] = total;
    total += trajs[i].obs.rows();
  }
  const LSTMWeights w = trainable ? lstm_weights(tape, *trainable, "lstm")
                                  : LSTMWeights{tape.frozen(net.params, "lstm/w"),
                                                tape.frozen(net.params, "lstm/b")};
  std::vector<Var> pieces;
  std::vector<std::size_t> order(total);
  std::size_t base = 0;
  for (const auto& [T, members] : groups) {
    pieces.push_back(scan_group(net, trainable, w, trajs, members, tape));
    const std::size_t G = members.size();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t g = 0; g < G; ++g) order[offsets[members[g]] + t] = base + t * G + g;
    }
    base += T * G;
  }
  Var stacked = pieces.size() == 1 ? pieces.front() : concat_rows(pieces);
  if (groups.size() == 1 && groups.begin()->second.size() == 1) return stacked;
  return gather_rows(stacked, order);
}

}  // namespace

StateValueNet::StateValueNet(std::size_t obs_dim, std::vector<std::size_t> hidden,
                             std::mt19937_64& rng)
    : spec{with_ends(obs_dim, hidden, 1)} {
  init_mlp(params, "v", spec, rng);
}

HindsightValueNet::HindsightValueNet(std::size_t obs_dim, std::size_t d_h, std::size_t lstm_hidden,
                                     std::vector<std::size_t> hidden, std::mt19937_64& rng)
    : lstm{d_h, lstm_hidden}, head{with_ends(obs_dim + lstm_hidden, hidden, 1)} {
  init_lstm(params, "lstm", lstm, rng);
  init_mlp(params, "head", head, rng);
}

Var svf_values(Tape& tape, StateValueNet& net, const Tensor& obs) {
  return mlp_forward(net.spec, net.params, "v", tape.constant(obs));
}

Var hvf_values(Tape& tape, HindsightValueNet& net, const Tensor& obs, const Tensor& h) {
  const TrajectoryInputs one{obs, h};
  return hvf_batch_impl(tape, net, &net.params, std::span<const TrajectoryInputs>(&one, 1));
}

Var hvf_values_batch(Tape& tape, HindsightValueNet& net, std::span<const TrajectoryInputs> trajs) {
  return hvf_batch_impl(tape, net, &net.params, trajs);
}

std::vector<double> svf_predict(const StateValueNet& net, const Tensor& obs) {
  Tape tape;
  return mlp_forward_frozen(net.spec, net.params, "v", tape.constant(obs)).value().data;
}

std::vector<double> hvf_predict(const HindsightValueNet& net, const Tensor& obs, const Tensor& h) {
  Tape tape;
  const TrajectoryInputs one{obs, h};
  return hvf_batch_impl(tape, net, nullptr, std::span<const TrajectoryInputs>(&one, 1)).value().data;
}

std::vector<double> hvf_predict_batch(const HindsightValueNet& net,
                                      std::span<const TrajectoryInputs> trajs) {
  Tape tape;
  return hvf_batch_impl(tape, net, nullptr, trajs).value().data;
}

Var value_loss(Var estimates, std::span<const double> returns) {
  if (estimates.value().size() != returns.size()) {
    throw ShapeError("value_loss: " + std::to_string(estimates.value().size()) +
                     " estimates but " + std::to_string(returns.size()) + " returns");
  }
  if (returns.empty()) throw ShapeError("value_loss: empty input");
  Tensor target(returns.size(), 1);
  std::copy(returns.begin(), returns.end(), target.data.begin());
  return mean(square(estimates - estimates.tape().constant(std::move(target))));
}

}  // namespace hvf
