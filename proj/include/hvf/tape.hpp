#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "hvf/params.hpp"
#include "hvf/tensor.hpp"

namespace hvf {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// the owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Constant,
  Input,
  Param,
  Linear,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  RowSum,
  ConcatCols,
  ConcatRows,
  SliceCols,
  LogSoftmax,
  Pick,
  GatherRows,
  Clamp,
  Minimum,
};

/// Records primitive operations in execution order so a single reverse
/// sweep can produce gradients. Gradients for Param leaves are added into
/// the owning ParamStore; callers zero them with ParamStore::zero_grad().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable leaf whose gradient is readable through grad().
  Var input(Tensor value);
  Var param(ParamStore& store, std::string_view name);
  Var param(ParamStore& store, std::size_t index);
  /// Parameter value copied in as a constant; no gradient reaches the store.
  Var frozen(const ParamStore& store, std::string_view name);

  /// Reverse pass from a 1x1 output. Throws ShapeError otherwise.
  void backward(Var output);
  /// Gradient of the last backward() w.r.t. v (zeros if v did not participate).
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by the op free functions below.
  struct Node {
    Op op = Op::Constant;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
    double a = 0.0;
    double b = 0.0;
    std::vector<std::size_t> index;
  };
  Var record(Node node);
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  void backprop_node(std::size_t id);
  Tensor& grad_slot(int id);

  std::vector<Node> nodes_;
};

// Elementwise ops require identical shapes; there is no broadcasting.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(double s, Var a);
Var operator-(Var a);
Var add_scalar(Var a, double s);

/// y = x W^T + b for x (B x in), W (out x in), b (1 x out).
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Stacks tensors of equal width vertically.
Var concat_rows(std::span<const Var> parts);

/// Row-wise log-softmax, stabilized by subtracting the row max.
Var log_softmax(Var logits);
/// Picks column cols[r] from row r; result is B x 1.
Var pick(Var a, std::span<const std::size_t> cols);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// Gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);
/// Elementwise min; ties route the gradient to the first argument.
Var minimum(Var a, Var b);
Var stop_gradient(Var a);

}  // namespace hvf
