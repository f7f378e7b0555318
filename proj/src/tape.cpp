#include "hvf/tape.hpp"

#include <algorithm>
#include <cmath>

namespace hvf {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ShapeError("tape: operands recorded on different tapes");
  }
  return a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape.size() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor");
}

Tape::Node make_node(Op op, std::vector<int> inputs, Tensor value) {
  Tape::Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  return n;
}

Var unary(Var a, Op op, double (*fn)(double)) {
  Tensor out = a.value();
  for (double& v : out.data) v = fn(v);
  return a.tape().record(make_node(op, {a.id()}, std::move(out)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape_->node(id_).value; }

Var Tape::record(Node node) {
  bool needs = node.op == Op::Input || node.op == Op::Param;
  for (int in : node.inputs) needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
  node.needs_grad = needs;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) { return record(make_node(Op::Constant, {}, std::move(value))); }

Var Tape::input(Tensor value) { return record(make_node(Op::Input, {}, std::move(value))); }

Var Tape::param(ParamStore& store, std::size_t index) {
  Node n = make_node(Op::Param, {}, store.at(index).value);
  n.store = &store;
  n.param_index = index;
  return record(std::move(n));
}

Var Tape::param(ParamStore& store, std::string_view name) {
  return param(store, store.index_of(std::string(name)));
}

Var Tape::frozen(const ParamStore& store, std::string_view name) {
  return constant(store[std::string(name)].value);
}

Tensor& Tape::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape, std::vector<double>(n.value.size(), 0.0));
  }
  return n.grad;
}

void Tape::backward(Var output) {
  if (&output.tape() != this) throw ShapeError("backward: output recorded on another tape");
  if (output.value().size() != 1) {
    throw ShapeError("backward: output must be a scalar, got " + output.value().shape_str());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_slot(output.id()).data[0] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(output.id()) + 1; i-- > 0;) {
    if (nodes_[i].needs_grad && nodes_[i].grad.size() == nodes_[i].value.size()) {
      backprop_node(i);
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v.id());
  if (n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape, std::vector<double>(n.value.size(), 0.0));
}

void Tape::backprop_node(std::size_t id) {
  // grad_slot() never reallocates nodes_, so these references stay valid.
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto in_needs = [&](std::size_t k) {
    return nodes_[static_cast<std::size_t>(n.inputs[k])].needs_grad;
  };
  auto in_value = [&](std::size_t k) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.inputs[k])].value;
  };

  switch (n.op) {
    case Op::Constant:
    case Op::Input:
      return;
    case Op::Param: {
      Tensor& dst = n.store->at(n.param_index).grad;
      for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i];
      return;
    }
    case Op::Linear: {
      const Tensor& x = in_value(0);
      const Tensor& w = in_value(1);
      const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
      if (in_needs(0)) {
        Tensor& dx = grad_slot(n.inputs[0]);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t o = 0; o < out; ++o) {
            const double go = g.data[r * out + o];
            if (go == 0.0) continue;
            const double* wrow = w.data.data() + o * in;
            double* dxrow = dx.data.data() + r * in;
            for (std::size_t i = 0; i < in; ++i) dxrow[i] += go * wrow[i];
          }
        }
      }
      if (in_needs(1)) {
        Tensor& dw = grad_slot(n.inputs[1]);
        for (std::size_t r = 0; r < batch; ++r) {
          const double* xrow = x.data.data() + r * in;
          for (std::size_t o = 0; o < out; ++o) {
            const double go = g.data[r * out + o];
            if (go == 0.0) continue;
            double* dwrow = dw.data.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dwrow[i] += go * xrow[i];
          }
        }
      }
      if (n.inputs.size() > 2 && in_needs(2)) {
        Tensor& db = grad_slot(n.inputs[2]);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t o = 0; o < out; ++o) db.data[o] += g.data[r * out + o];
        }
      }
      return;
    }
    case Op::Add:
    case Op::Sub: {
      const double sign = n.op == Op::Add ? 1.0 : -1.0;
      if (in_needs(0)) {
        Tensor& d = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      }
      if (in_needs(1)) {
        Tensor& d = grad_slot(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += sign * g.data[i];
      }
      return;
    }
    case Op::Mul: {
      if (in_needs(0)) {
        const Tensor& other = in_value(1);
        Tensor& d = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * other.data[i];
      }
      if (in_needs(1)) {
        const Tensor& other = in_value(0);
        Tensor& d = grad_slot(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * other.data[i];
      }
      return;
    }
    case Op::Scale: {
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += n.a * g.data[i];
      return;
    }
    case Op::AddScalar: {
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      return;
    }
    case Op::Tanh: {
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.data[i];
        d.data[i] += g.data[i] * (1.0 - y * y);
      }
      return;
    }
    case Op::Sigmoid: {
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.data[i];
        d.data[i] += g.data[i] * y * (1.0 - y);
      }
      return;
    }
    case Op::Exp: {
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * n.value.data[i];
      return;
    }
    case Op::Log: {
      const Tensor& x = in_value(0);
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] / x.data[i];
      return;
    }
    case Op::Square: {
      const Tensor& x = in_value(0);
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += 2.0 * x.data[i] * g.data[i];
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      Tensor& d = grad_slot(n.inputs[0]);
      const double scale =
          n.op == Op::Sum ? g.data[0] : g.data[0] / static_cast<double>(d.size());
      for (double& v : d.data) v += scale;
      return;
    }
    case Op::RowSum: {
      Tensor& d = grad_slot(n.inputs[0]);
      const std::size_t cols = d.cols();
      for (std::size_t r = 0; r < d.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) d.data[r * cols + c] += g.data[r];
      }
      return;
    }
    case Op::ConcatCols: {
      const std::size_t total = n.value.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t width = in_value(k).cols();
        if (in_needs(k)) {
          Tensor& d = grad_slot(n.inputs[k]);
          for (std::size_t r = 0; r < n.value.rows(); ++r) {
            for (std::size_t c = 0; c < width; ++c) {
              d.data[r * width + c] += g.data[r * total + offset + c];
            }
          }
        }
        offset += width;
      }
      return;
    }
    case Op::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t count = in_value(k).size();
        if (in_needs(k)) {
          Tensor& d = grad_slot(n.inputs[k]);
          for (std::size_t i = 0; i < count; ++i) d.data[i] += g.data[offset + i];
        }
        offset += count;
      }
      return;
    }
    case Op::SliceCols: {
      Tensor& d = grad_slot(n.inputs[0]);
      const std::size_t begin = n.index[0];
      const std::size_t width = n.value.cols();
      const std::size_t src_cols = d.cols();
      for (std::size_t r = 0; r < n.value.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          d.data[r * src_cols + begin + c] += g.data[r * width + c];
        }
      }
      return;
    }
    case Op::LogSoftmax: {
      Tensor& d = grad_slot(n.inputs[0]);
      const std::size_t cols = n.value.cols();
      for (std::size_t r = 0; r < n.value.rows(); ++r) {
        double gsum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gsum += g.data[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const double p = std::exp(n.value.data[r * cols + c]);
          d.data[r * cols + c] += g.data[r * cols + c] - p * gsum;
        }
      }
      return;
    }
    case Op::Pick: {
      Tensor& d = grad_slot(n.inputs[0]);
      const std::size_t cols = d.cols();
      for (std::size_t r = 0; r < n.index.size(); ++r) d.data[r * cols + n.index[r]] += g.data[r];
      return;
    }
    case Op::GatherRows: {
      Tensor& d = grad_slot(n.inputs[0]);
      const std::size_t cols = d.cols();
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) d.data[n.index[r] * cols + c] += g.data[r * cols + c];
      }
      return;
    }
    case Op::Clamp: {
      const Tensor& x = in_value(0);
      Tensor& d = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x.data[i] > n.a && x.data[i] < n.b) d.data[i] += g.data[i];
      }
      return;
    }
    case Op::Minimum: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      const bool need_a = in_needs(0), need_b = in_needs(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a.data[i] <= b.data[i]) {
          if (need_a) grad_slot(n.inputs[0]).data[i] += g.data[i];
        } else if (need_b) {
          grad_slot(n.inputs[1]).data[i] += g.data[i];
        }
      }
      return;
    }
  }
}

Var operator+(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return t.record(make_node(Op::Add, {a.id(), b.id()}, std::move(out)));
}

Var operator-(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  return t.record(make_node(Op::Sub, {a.id(), b.id()}, std::move(out)));
}

Var operator*(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  return t.record(make_node(Op::Mul, {a.id(), b.id()}, std::move(out)));
}

Var operator*(double s, Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  auto n = make_node(Op::Scale, {a.id()}, std::move(out));
  n.a = s;
  return a.tape().record(std::move(n));
}

Var operator-(Var a) { return -1.0 * a; }

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v += s;
  return a.tape().record(make_node(Op::AddScalar, {a.id()}, std::move(out)));
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_2d(xv, "linear");
  require_2d(wv, "linear");
  if (xv.cols() != wv.cols()) {
    throw ShapeError("linear: input " + xv.shape_str() + " incompatible with weight " +
                     wv.shape_str());
  }
  const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
  Tensor y(batch, out);
  if (b.valid()) {
    const Tensor& bv = b.value();
    if (bv.size() != out) {
      throw ShapeError("linear: bias " + bv.shape_str() + " does not match " +
                       std::to_string(out) + " outputs");
    }
    for (std::size_t r = 0; r < batch; ++r) {
      std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + r * out);
    }
  }
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xrow = xv.data.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = wv.data.data() + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
      y.data[r * out + o] += acc;
    }
  }
  std::vector<int> inputs{x.id(), w.id()};
  if (b.valid()) inputs.push_back(b.id());
  return same_tape(x, w).record(make_node(Op::Linear, std::move(inputs), std::move(y)));
}

Var linear(Var x, Var w) { return linear(x, w, Var{}); }

Var tanh(Var a) { return unary(a, Op::Tanh, [](double v) { return std::tanh(v); }); }
Var sigmoid(Var a) { return unary(a, Op::Sigmoid, sigmoid_scalar); }
Var exp(Var a) { return unary(a, Op::Exp, [](double v) { return std::exp(v); }); }
Var log(Var a) { return unary(a, Op::Log, [](double v) { return std::log(v); }); }
Var square(Var a) { return unary(a, Op::Square, [](double v) { return v * v; }); }

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape().record(make_node(Op::Sum, {a.id()}, Tensor::scalar(s)));
}

Var mean(Var a) {
  const Tensor& v = a.value();
  if (v.size() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double x : v.data) s += x;
  return a.tape().record(
      make_node(Op::Mean, {a.id()}, Tensor::scalar(s / static_cast<double>(v.size()))));
}

Var row_sum(Var a) {
  const Tensor& v = a.value();
  require_2d(v, "row_sum");
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (double x : v.row_span(r)) s += x;
    out.data[r] = s;
  }
  return a.tape().record(make_node(Op::RowSum, {a.id()}, std::move(out)));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    require_2d(p.value(), "concat_cols");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.data.begin() + r * v.cols(), v.data.begin() + (r + 1) * v.cols(),
                out.data.begin() + r * total + offset);
    }
    offset += v.cols();
  }
  return parts.front().tape().record(make_node(Op::ConcatCols, std::move(ids), std::move(out)));
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    require_2d(p.value(), "concat_rows");
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + offset);
    offset += v.size();
  }
  return parts.front().tape().record(make_node(Op::ConcatRows, std::move(ids), std::move(out)));
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  require_2d(v, "slice_cols");
  if (begin >= end || end > v.cols()) throw ShapeError("slice_cols: bad column range");
  const std::size_t width = end - begin;
  Tensor out(v.rows(), width);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    std::copy(v.data.begin() + r * v.cols() + begin, v.data.begin() + r * v.cols() + end,
              out.data.begin() + r * width);
  }
  auto n = make_node(Op::SliceCols, {a.id()}, std::move(out));
  n.index = {begin};
  return a.tape().record(std::move(n));
}

Var log_softmax(Var logits) {
  Tensor out = logits.value();
  require_2d(out, "log_softmax");
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : row) v -= lse;
  }
  return logits.tape().record(make_node(Op::LogSoftmax, {logits.id()}, std::move(out)));
}

Var pick(Var a, std::span<const std::size_t> cols) {
  const Tensor& v = a.value();
  require_2d(v, "pick");
  if (cols.size() != v.rows()) throw ShapeError("pick: need one index per row");
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (cols[r] >= v.cols()) {
      throw ShapeError("pick: index " + std::to_string(cols[r]) + " out of range for width " +
                       std::to_string(v.cols()));
    }
    out.data[r] = v(r, cols[r]);
  }
  auto n = make_node(Op::Pick, {a.id()}, std::move(out));
  n.index.assign(cols.begin(), cols.end());
  return a.tape().record(std::move(n));
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& v = a.value();
  require_2d(v, "gather_rows");
  Tensor out(rows.size(), v.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= v.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy(v.data.begin() + rows[r] * v.cols(), v.data.begin() + (rows[r] + 1) * v.cols(),
              out.data.begin() + r * v.cols());
  }
  auto n = make_node(Op::GatherRows, {a.id()}, std::move(out));
  n.index.assign(rows.begin(), rows.end());
  return a.tape().record(std::move(n));
}

Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::clamp(v, lo, hi);
  auto n = make_node(Op::Clamp, {a.id()}, std::move(out));
  n.a = lo;
  n.b = hi;
  return a.tape().record(std::move(n));
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "minimum");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::min(out.data[i], bv.data[i]);
  return t.record(make_node(Op::Minimum, {a.id(), b.id()}, std::move(out)));
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

}  // namespace hvf
