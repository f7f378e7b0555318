#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hvf/params.hpp"
#include "hvf/tape.hpp"

namespace hvf {

/// Fully connected stack: tanh between layers, identity on the output.
/// widths = {input, hidden..., output}.
struct MLPSpec {
  std::vector<std::size_t> widths;

  std::size_t in() const { return widths.front(); }
  std::size_t out() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
  void validate() const;
};

/// Adds "<prefix>/w<k>" (out x in) and "<prefix>/b<k>" (1 x out) to the store.
/// Hidden weights ~ N(0, 1/fan_in); the last layer is scaled by out_gain.
void init_mlp(ParamStore& store, const std::string& prefix, const MLPSpec& spec,
              std::mt19937_64& rng, double out_gain = 1.0);

Var mlp_forward(const MLPSpec& spec, ParamStore& store, const std::string& prefix, Var x);
/// Same network evaluated with parameters as constants (no gradient reaches the store).
Var mlp_forward_frozen(const MLPSpec& spec, const ParamStore& store, const std::string& prefix,
                       Var x);

struct LSTMSpec {
  std::size_t input = 0;
  std::size_t hidden = 0;
};

struct LSTMState {
  Var h;
  Var c;
};

/// Weight "<prefix>/w" is (4H x (in + H)) over concat(input, h); bias
/// "<prefix>/b" is (1 x 4H). Gate blocks are ordered input, forget,
/// candidate, output. The forget-gate bias is initialized to 1, the rest to 0.
void init_lstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec,
               std::mt19937_64& rng);

/// Zero hidden and cell vectors for `batch` rows.
LSTMState lstm_zero_state(Tape& tape, const LSTMSpec& spec, std::size_t batch = 1);

/// Parameter handles bound once per tape so a scan reuses them across steps.
struct LSTMWeights {
  Var w;
  Var b;
};
LSTMWeights lstm_weights(Tape& tape, ParamStore& store, const std::string& prefix);

LSTMState lstm_cell(const LSTMSpec& spec, const LSTMWeights& weights, Var input,
                    const LSTMState& state);
LSTMState lstm_cell(const LSTMSpec& spec, ParamStore& store, const std::string& prefix,
                    Var input, const LSTMState& state);

/// log softmax(logits)[r, actions[r]] for every row; B x 1.
Var categorical_log_prob(Var logits, std::span<const std::size_t> actions);
/// Sum over columns of the diagonal Gaussian log density; B x 1.
Var gaussian_log_prob(Var mean, Var log_std, Var x);
/// Shannon entropy per row; B x 1.
Var categorical_entropy(Var logits);
/// Differential entropy of the diagonal Gaussian per row; B x 1.
Var gaussian_entropy(Var log_std);

}  // namespace hvf
