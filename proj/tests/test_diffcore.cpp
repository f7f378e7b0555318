#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fd_check.hpp"
#include "hvf/nn.hpp"

namespace hvf {
namespace {

using testing::input_fd_error;
using testing::param_fd_error;
using testing::random_tensor;

constexpr double kHalfLog2Pi = 0.91893853320467274;

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Tensor, ShapeValidation) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
}

TEST(Tape, SquareGradient) {
  Tape tape;
  Var x = tape.input(Tensor::scalar(3.0));
  tape.backward(sum(square(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

TEST(Tape, ConstantOutputHasZeroGradient) {
  Tape tape;
  Var x = tape.input(Tensor::scalar(3.0));
  Var c = tape.constant(Tensor::scalar(7.0));
  tape.backward(c);
  EXPECT_EQ(tape.grad(x).item(), 0.0);
}

TEST(Tape, NonScalarOutputRejected) {
  Tape tape;
  Var x = tape.input(Tensor(2, 1, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, SharedInputsAccumulate) {
  Tape tape;
  Var x = tape.input(Tensor::scalar(1.5));
  Var y = x * x + 3.0 * x;
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 2 * 1.5 + 3.0);
}

TEST(Tape, ElementwiseShapeMismatchRejected) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 2));
  Var b = tape.constant(Tensor(2, 3));
  EXPECT_THROW(a + b, ShapeError);
  EXPECT_THROW(a * b, ShapeError);
}

TEST(Tape, PrimitiveOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(3, 4, rng);
  const Tensor w = random_tensor(2, 4, rng);
  auto chain = [&](Tape& t, Var in) {
    Var z = linear(in, t.constant(w), t.constant(Tensor(1, 2, 0.1)));
    Var a = concat_cols({tanh(z), sigmoid(z), exp(0.3 * z), slice_cols(in, 1, 3)});
    Var b = log(add_scalar(square(a), 1.0));
    Var m = minimum(b, clamp(a, -0.5, 0.5));
    Var rows = concat_rows(std::vector<Var>{m, -m});
    const std::vector<std::size_t> idx{0, 2, 5, 5};
    return mean(row_sum(gather_rows(rows, idx))) + sum(pick(log_softmax(z), std::vector<std::size_t>{0, 1, 1}));
  };
  EXPECT_LE(input_fd_error(x, chain), 1e-6);
}

TEST(Tape, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(11);
    ParamStore store;
    MLPSpec spec{{3, 5, 2}};
    init_mlp(store, "m", spec, rng);
    Tape tape;
    Var out = sum(square(mlp_forward(spec, store, "m", tape.constant(random_tensor(4, 3, rng)))));
    store.zero_grad();
    tape.backward(out);
    return std::pair{out.value().item(), store.flat_grad()};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, ParametersOffThePathGetZeroGradient) {
  std::mt19937_64 rng(5);
  ParamStore store;
  MLPSpec used{{3, 4, 1}}, unused{{3, 4, 1}};
  init_mlp(store, "used", used, rng);
  init_mlp(store, "unused", unused, rng);
  for (auto& p : store.params()) p.grad = Tensor(p.value.rows(), p.value.cols(), 9.0);
  store.zero_grad();
  Tape tape;
  tape.backward(sum(mlp_forward(used, store, "used", tape.constant(random_tensor(2, 3, rng)))));
  for (const auto& p : store.params()) {
    if (p.name.rfind("unused", 0) != 0) continue;
    for (double g : p.grad.data) EXPECT_EQ(g, 0.0) << p.name;
  }
}

TEST(Tape, FrozenParameterReceivesNoGradient) {
  ParamStore store;
  store.add("w", Tensor::scalar(2.0));
  Tape tape;
  Var x = tape.input(Tensor::scalar(3.0));
  tape.backward(sum(tape.frozen(store, "w") * x));
  EXPECT_EQ(store["w"].grad.item(), 0.0);
  EXPECT_EQ(tape.grad(x).item(), 2.0);
}

// ---------------------------------------------------------------- MLP

TEST(MLP, ZeroWeightsGiveZeroOutput) {
  std::mt19937_64 rng(1);
  ParamStore store;
  MLPSpec spec{{3, 8, 2}};
  init_mlp(store, "m", spec, rng);
  for (auto& p : store.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Tape tape;
  const Tensor out = mlp_forward(spec, store, "m", tape.constant(random_tensor(4, 3, rng))).value();
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(MLP, IdentityOutputLayer) {
  std::mt19937_64 rng(1);
  ParamStore store;
  MLPSpec spec{{3, 3}};
  init_mlp(store, "m", spec, rng);
  store["m/w0"].value = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  store["m/b0"].value = Tensor(1, 3);
  Tape tape;
  const Tensor x({1, 3}, {0.5, -2.0, 7.0});
  EXPECT_EQ(mlp_forward(spec, store, "m", tape.constant(x)).value().data, x.data);
}

TEST(MLP, MatchesHandComputedProducts) {
  std::mt19937_64 rng(2);
  ParamStore store;
  MLPSpec spec{{3, 4, 2}};
  init_mlp(store, "m", spec, rng);
  for (auto& p : store.params()) p.value = random_tensor(p.value.rows(), p.value.cols(), rng);
  const Tensor x({1, 3}, {0.3, -1.2, 0.8});
  const Tensor& w0 = store["m/w0"].value;
  const Tensor& b0 = store["m/b0"].value;
  const Tensor& w1 = store["m/w1"].value;
  const Tensor& b1 = store["m/b1"].value;
  double hidden[4];
  for (int j = 0; j < 4; ++j) {
    double z = b0(0, j);
    for (int i = 0; i < 3; ++i) z += w0(j, i) * x(0, i);
    hidden[j] = std::tanh(z);
  }
  Tape tape;
  const Tensor out = mlp_forward(spec, store, "m", tape.constant(x)).value();
  for (int k = 0; k < 2; ++k) {
    double y = b1(0, k);
    for (int j = 0; j < 4; ++j) y += w1(k, j) * hidden[j];
    EXPECT_NEAR(out(0, k), y, 1e-12);
  }
}

TEST(MLP, WidthMismatchRejected) {
  std::mt19937_64 rng(1);
  ParamStore store;
  MLPSpec spec{{3, 4, 2}};
  init_mlp(store, "m", spec, rng);
  Tape tape;
  EXPECT_THROW(mlp_forward(spec, store, "m", tape.constant(Tensor(2, 5))), ShapeError);
}

TEST(MLP, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  ParamStore store;
  MLPSpec spec{{4, 6, 5, 3}};
  init_mlp(store, "m", spec, rng);
  const Tensor x = random_tensor(5, 4, rng);
  const Tensor y = random_tensor(5, 3, rng);
  auto loss = [&](Tape& t) {
    return mean(square(mlp_forward(spec, store, "m", t.constant(x)) - t.constant(y)));
  };
  EXPECT_LE(param_fd_error(store, loss), 1e-6);
}

// --------------------------------------------------------------- LSTM

TEST(LSTM, ZeroWeightsZeroState) {
  std::mt19937_64 rng(1);
  ParamStore store;
  LSTMSpec spec{3, 2};
  init_lstm(store, "l", spec, rng);
  for (auto& p : store.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Tape tape;
  LSTMState next = lstm_cell(spec, store, "l", tape.constant(random_tensor(1, 3, rng)),
                             lstm_zero_state(tape, spec));
  for (double v : next.h.value().data) EXPECT_EQ(v, 0.0);
  for (double v : next.c.value().data) EXPECT_EQ(v, 0.0);
}

TEST(LSTM, ZeroWeightsHalveCell) {
  std::mt19937_64 rng(1);
  ParamStore store;
  LSTMSpec spec{3, 2};
  init_lstm(store, "l", spec, rng);
  for (auto& p : store.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Tape tape;
  const Tensor v({1, 2}, {0.8, -3.0});
  LSTMState state{tape.constant(Tensor(1, 2)), tape.constant(v)};
  LSTMState next = lstm_cell(spec, store, "l", tape.constant(random_tensor(1, 3, rng)), state);
  for (int i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(next.c.value().data[i], 0.5 * v.data[i]);
    EXPECT_DOUBLE_EQ(next.h.value().data[i], 0.5 * std::tanh(0.5 * v.data[i]));
  }
}

TEST(LSTM, MatchesScalarGateOracle) {
  std::mt19937_64 rng(4);
  ParamStore store;
  LSTMSpec spec{3, 2};
  init_lstm(store, "l", spec, rng);
  for (auto& p : store.params()) p.value = random_tensor(p.value.rows(), p.value.cols(), rng);
  const Tensor x = random_tensor(1, 3, rng);
  const Tensor h = random_tensor(1, 2, rng);
  const Tensor c = random_tensor(1, 2, rng);
  const Tensor& w = store["l/w"].value;
  const Tensor& b = store["l/b"].value;
  const double in[5] = {x.data[0], x.data[1], x.data[2], h.data[0], h.data[1]};
  auto pre = [&](int row) {
    double z = b(0, row);
    for (int k = 0; k < 5; ++k) z += w(row, k) * in[k];
    return z;
  };
  Tape tape;
  LSTMState next = lstm_cell(spec, store, "l", tape.constant(x), {tape.constant(h), tape.constant(c)});
  for (int j = 0; j < 2; ++j) {
    const double i = sigmoid_ref(pre(j));
    const double f = sigmoid_ref(pre(2 + j));
    const double g = std::tanh(pre(4 + j));
    const double o = sigmoid_ref(pre(6 + j));
    const double c_next = f * c.data[j] + i * g;
    EXPECT_NEAR(next.c.value().data[j], c_next, 1e-12);
    EXPECT_NEAR(next.h.value().data[j], o * std::tanh(c_next), 1e-12);
  }
}

TEST(LSTM, InputWidthMismatchRejected) {
  std::mt19937_64 rng(1);
  ParamStore store;
  LSTMSpec spec{3, 2};
  init_lstm(store, "l", spec, rng);
  Tape tape;
  EXPECT_THROW(lstm_cell(spec, store, "l", tape.constant(Tensor(1, 4)), lstm_zero_state(tape, spec)),
               ShapeError);
}

TEST(LSTM, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  ParamStore store;
  LSTMSpec spec{3, 4};
  init_lstm(store, "l", spec, rng);
  std::vector<Tensor> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(random_tensor(2, 3, rng));
  auto loss = [&](Tape& t) {
    LSTMState s = lstm_zero_state(t, spec, 2);
    Var acc = t.constant(Tensor::scalar(0.0));
    for (const auto& x : xs) {
      s = lstm_cell(spec, store, "l", t.constant(x), s);
      acc = acc + sum(square(s.h));
    }
    return acc + mean(s.c);
  };
  EXPECT_LE(param_fd_error(store, loss), 1e-6);
}

// ------------------------------------------------------- distributions

TEST(Categorical, UniformLogits) {
  Tape tape;
  const std::vector<std::size_t> a{2};
  Var lp = categorical_log_prob(tape.constant(Tensor(1, 4)), a);
  EXPECT_NEAR(lp.value().item(), std::log(0.25), 1e-12);
}

TEST(Categorical, LargeLogitsStayFinite) {
  Tape tape;
  const std::vector<std::size_t> a{0};
  Var lp = categorical_log_prob(tape.constant(Tensor({1, 2}, {1000.0, 0.0})), a);
  EXPECT_NEAR(lp.value().item(), 0.0, 1e-12);
}

TEST(Categorical, MatchesSoftmaxThenLog) {
  std::mt19937_64 rng(9);
  const Tensor logits = random_tensor(3, 5, rng, 2.0);
  const std::vector<std::size_t> a{4, 0, 2};
  Tape tape;
  const Tensor lp = categorical_log_prob(tape.constant(logits), a).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0.0;
    for (std::size_t k = 0; k < 5; ++k) z += std::exp(logits(r, k));
    EXPECT_NEAR(lp.data[r], std::log(std::exp(logits(r, a[r])) / z), 1e-12);
  }
}

TEST(Categorical, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(10);
  const Tensor logits = random_tensor(1, 6, rng, 3.0);
  double total = 0.0;
  for (std::size_t k = 0; k < 6; ++k) {
    Tape tape;
    const std::vector<std::size_t> a{k};
    total += std::exp(categorical_log_prob(tape.constant(logits), a).value().item());
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Categorical, OutOfRangeActionRejected) {
  Tape tape;
  const std::vector<std::size_t> a{4};
  EXPECT_THROW(categorical_log_prob(tape.constant(Tensor(1, 4)), a), ShapeError);
}

TEST(Categorical, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const std::vector<std::size_t> a{1, 3, 0};
  auto loss = [&](Tape&, Var logits) {
    return sum(categorical_log_prob(logits, a)) + mean(categorical_entropy(logits));
  };
  EXPECT_LE(input_fd_error(random_tensor(3, 4, rng), loss), 1e-6);
}

TEST(Gaussian, StandardNormalAtZero) {
  Tape tape;
  Var lp = gaussian_log_prob(tape.constant(Tensor(1, 1)), tape.constant(Tensor(1, 1)),
                             tape.constant(Tensor(1, 1)));
  EXPECT_NEAR(lp.value().item(), -kHalfLog2Pi, 1e-12);
  Var lp2 = gaussian_log_prob(tape.constant(Tensor(1, 2)), tape.constant(Tensor(1, 2)),
                              tape.constant(Tensor(1, 2)));
  EXPECT_NEAR(lp2.value().item(), -2.0 * kHalfLog2Pi, 1e-12);
}

TEST(Gaussian, MatchesDensityFormula) {
  std::mt19937_64 rng(13);
  const Tensor mu = random_tensor(4, 3, rng);
  const Tensor ls = random_tensor(4, 3, rng, 0.5);
  const Tensor x = random_tensor(4, 3, rng);
  Tape tape;
  const Tensor lp =
      gaussian_log_prob(tape.constant(mu), tape.constant(ls), tape.constant(x)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double density = 1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double sd = std::exp(ls(r, k));
      const double z = (x(r, k) - mu(r, k)) / sd;
      density *= std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
    }
    EXPECT_NEAR(lp.data[r], std::log(density), 1e-12);
  }
}

TEST(Gaussian, ShapeMismatchRejected) {
  Tape tape;
  EXPECT_THROW(gaussian_log_prob(tape.constant(Tensor(1, 2)), tape.constant(Tensor(1, 3)),
                                 tape.constant(Tensor(1, 2))),
               ShapeError);
}

TEST(Gaussian, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor(3, 2, rng);
  // Input packs mean | log_std side by side.
  auto loss = [&](Tape& t, Var in) {
    Var mu = slice_cols(in, 0, 2);
    Var ls = slice_cols(in, 2, 4);
    return sum(gaussian_log_prob(mu, ls, t.constant(x))) + mean(gaussian_entropy(ls));
  };
  EXPECT_LE(input_fd_error(random_tensor(3, 4, rng, 0.5), loss), 1e-6);
}

TEST(Entropy, KnownValues) {
  Tape tape;
  EXPECT_NEAR(categorical_entropy(tape.constant(Tensor(1, 4))).value().item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(categorical_entropy(tape.constant(Tensor({1, 3}, {1000, -1000, -1000}))).value().item(),
              0.0, 1e-12);
  EXPECT_NEAR(gaussian_entropy(tape.constant(Tensor(1, 1))).value().item(),
              0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e), 1e-12);
}

// --------------------------------------------------------------- Adam

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore store;
  store.add("w", Tensor({1, 3}, {1.0, 1.0, 1.0}));
  store["w"].grad = Tensor({1, 3}, {0.3, -7.0, 1e-3});
  adam_step(store, 0.01);
  EXPECT_NEAR(store["w"].value.data[0], 0.99, 1e-7);
  EXPECT_NEAR(store["w"].value.data[1], 1.01, 1e-7);
  EXPECT_NEAR(store["w"].value.data[2], 0.99, 1e-4);
  EXPECT_EQ(store.step(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParamStore store;
  store.add("w", Tensor({1, 2}, {0.5, -0.5}));
  store.zero_grad();
  adam_step(store, 0.1);
  EXPECT_EQ(store["w"].value.data, (std::vector<double>{0.5, -0.5}));
}

TEST(Adam, TwoStepsMatchMomentRecursion) {
  const double lr = 0.05, g = 0.7, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParamStore store;
  store.add("w", Tensor::scalar(2.0));
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    store["w"].grad = Tensor::scalar(g);
    adam_step(store, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
  }
  EXPECT_NEAR(store["w"].value.item(), w, 1e-12);
  EXPECT_EQ(store.step(), 2u);
}

TEST(Adam, NonFiniteGradientAbortsUntouched) {
  ParamStore store;
  store.add("a", Tensor::scalar(1.0));
  store.add("b", Tensor::scalar(1.0));
  store["a"].grad = Tensor::scalar(0.5);
  store["b"].grad = Tensor::scalar(std::nan(""));
  EXPECT_THROW(adam_step(store, 0.1), NonFiniteError);
  EXPECT_EQ(store["a"].value.item(), 1.0);
  EXPECT_EQ(store["a"].m.item(), 0.0);
  EXPECT_EQ(store.step(), 0u);
}

TEST(ParamStoreTest, ClipGradNorm) {
  ParamStore store;
  store.add("a", Tensor::scalar(0.0));
  store.add("b", Tensor::scalar(0.0));
  store["a"].grad = Tensor::scalar(3.0);
  store["b"].grad = Tensor::scalar(4.0);
  EXPECT_DOUBLE_EQ(store.clip_grad_norm(0.5), 5.0);
  EXPECT_NEAR(store.grad_norm(), 0.5, 1e-12);
  EXPECT_THROW(store.add("a", Tensor::scalar(1.0)), std::invalid_argument);
}

}  // namespace
}  // namespace hvf
