#pragma once

// Vector-level reverse-mode differentiation.
//
// A Tape owns a flat arena of node values. Every operation appends its result
// to the arena and records an Op describing how to push the output gradient
// back to its operands. Parameters live outside the tape; backward()
// accumulates into Parameter::grad.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/linalg.hpp"

namespace shortcut {

/// A named trainable array. Vectors are stored as rows x 1 matrices.
struct Parameter {
  std::string name;
  Matrix value;
  // Gradient buffers are accumulators owned by whoever runs backward(); they
  // are mutable so forward passes can read a const model.
  mutable Matrix grad;
  /// Lookup tables: only rows touched since the last zero_grad() carry gradient.
  bool sparse_rows = false;
  mutable std::vector<std::uint32_t> touched_rows;
  mutable std::vector<char> row_touched;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool sparse = false)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()),
        sparse_rows(sparse) {
    if (sparse_rows) row_touched.assign(value.rows(), 0);
  }

  std::size_t size() const { return value.size(); }

  void mark_row(std::size_t r) const {
    if (!sparse_rows || row_touched[r]) return;
    row_touched[r] = 1;
    touched_rows.push_back(static_cast<std::uint32_t>(r));
  }

  void zero_grad() {
    if (sparse_rows) {
      for (auto r : touched_rows) {
        auto g = grad.row(r);
        std::fill(g.begin(), g.end(), 0.0);
        row_touched[r] = 0;
      }
      touched_rows.clear();
    } else {
      grad.fill(0.0);
    }
  }
};

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
  bool operator==(const Var&) const = default;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void clear() {
    values_.clear();
    nodes_.clear();
    ops_.clear();
    lists_.clear();
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t op_count() const { return ops_.size(); }

  std::span<const double> value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return {values_.data() + n.offset, n.len};
  }
  double scalar(Var v) const {
    auto s = value(v);
    if (s.size() != 1) throw ShapeError("scalar() on node of length " + std::to_string(s.size()));
    return s[0];
  }
  std::size_t size(Var v) const { return nodes_.at(v.id).len; }
  Vector vector(Var v) const { return Vector(value(v)); }

  // -- leaves ---------------------------------------------------------------

  Var input(std::span<const double> v) {
    if (!values_.empty() && v.data() >= values_.data() &&
        v.data() < values_.data() + values_.size()) {
      const std::vector<double> copy(v.begin(), v.end());  // arena may move
      return input(std::span<const double>(copy));
    }
    Var out = alloc(v.size());
    std::copy(v.begin(), v.end(), ptr(out));
    return out;
  }
  Var input(const Vector& v) { return input(v.span()); }
  Var constant(std::size_t n, double fill) {
    Var out = alloc(n);
    std::fill_n(ptr(out), n, fill);
    return out;
  }

  /// Whole parameter as a flat vector (biases, gate vectors).
  Var param(const Parameter& p) {
    Var out = input(p.value.span());
    push(Op{.kind = OpKind::Param, .out = out.id, .p = &p});
    return out;
  }

  /// One row of a lookup table.
  Var row(const Parameter& table, std::size_t r) {
    if (r >= table.value.rows()) {
      throw ShapeError(table.name + ": row " + std::to_string(r) + " out of range");
    }
    Var out = input(table.value.row(r));
    push(Op{.kind = OpKind::Row, .out = out.id, .p = &table, .aux = static_cast<std::uint32_t>(r)});
    return out;
  }

  /// W · [inputs...] (+ bias). The inputs partition W's columns in order.
  Var linear(const Parameter& w, std::span<const Var> inputs, const Parameter* bias = nullptr) {
    std::size_t total = 0;
    for (Var v : inputs) total += size(v);
    if (total != w.value.cols()) {
      throw ShapeError(w.name + ": expects input width " + std::to_string(w.value.cols()) +
                       ", got " + std::to_string(total));
    }
    const std::size_t rows = w.value.rows();
    if (bias && bias->value.size() != rows) {
      throw ShapeError(bias->name + ": bias length does not match " + w.name);
    }
    Var out = alloc(rows);
    double* y = ptr(out);
    const double* wd = w.value.data();
    const std::size_t cols = w.value.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      const double* wrow = wd + i * cols;
      double acc = bias ? bias->value.data()[i] : 0.0;
      std::size_t col = 0;
      for (Var v : inputs) {
        const Node& n = nodes_[v.id];
        const double* x = values_.data() + n.offset;
        for (std::size_t j = 0; j < n.len; ++j) acc += wrow[col + j] * x[j];
        col += n.len;
      }
      y[i] = acc;
    }
    const auto begin = static_cast<std::uint32_t>(lists_.size());
    for (Var v : inputs) lists_.push_back(v.id);
    push(Op{.kind = OpKind::Linear,
            .out = out.id,
            .list_begin = begin,
            .list_len = static_cast<std::uint32_t>(inputs.size()),
            .p = &w,
            .p2 = bias});
    return out;
  }
  Var linear(const Parameter& w, std::initializer_list<Var> inputs, const Parameter* bias = nullptr) {
    return linear(w, std::span<const Var>(inputs.begin(), inputs.size()), bias);
  }
  Var matvec(const Parameter& w, Var x) { return linear(w, {x}); }

  // -- elementwise ------------------------------------------------------------

  Var add(Var a, Var b) { return binary(OpKind::Add, a, b); }
  Var sub(Var a, Var b) { return binary(OpKind::Sub, a, b); }
  Var mul(Var a, Var b) { return binary(OpKind::Mul, a, b); }

  Var sigmoid(Var a) {
    Var out = alloc(size(a));
    const double* x = ptr(a);
    double* y = ptr(out);
    for (std::size_t i = 0; i < size(a); ++i) y[i] = shortcut::sigmoid(x[i]);
    push(Op{.kind = OpKind::Sigmoid, .out = out.id, .a = a.id});
    return out;
  }
  Var tanh(Var a) {
    Var out = alloc(size(a));
    const double* x = ptr(a);
    double* y = ptr(out);
    for (std::size_t i = 0; i < size(a); ++i) y[i] = std::tanh(x[i]);
    push(Op{.kind = OpKind::Tanh, .out = out.id, .a = a.id});
    return out;
  }
  /// alpha * a + beta
  Var affine(Var a, double alpha, double beta = 0.0) {
    Var out = alloc(size(a));
    const double* x = ptr(a);
    double* y = ptr(out);
    for (std::size_t i = 0; i < size(a); ++i) y[i] = alpha * x[i] + beta;
    push(Op{.kind = OpKind::Affine, .out = out.id, .a = a.id, .alpha = alpha});
    return out;
  }
  Var scale(Var a, double alpha) { return affine(a, alpha, 0.0); }
  Var mul_const(Var a, std::span<const double> mask) { return mul(a, input(mask)); }

  // -- structural -------------------------------------------------------------

  Var slice(Var a, std::size_t offset, std::size_t len) {
    if (offset + len > size(a)) throw ShapeError("slice out of range");
    Var out = alloc(len);
    std::copy_n(ptr(a) + offset, len, ptr(out));
    push(Op{.kind = OpKind::Slice, .out = out.id, .a = a.id, .aux = static_cast<std::uint32_t>(offset)});
    return out;
  }

  Var concat(std::span<const Var> parts) {
    std::size_t total = 0;
    for (Var v : parts) total += size(v);
    Var out = alloc(total);
    std::size_t off = 0;
    for (Var v : parts) {
      std::copy_n(ptr(v), size(v), ptr(out) + off);
      off += size(v);
    }
    record_list(OpKind::Concat, out, parts);
    return out;
  }
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }

  /// Elementwise sum of equal-length vectors.
  Var sum(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("sum of no vectors");
    const std::size_t n = size(parts[0]);
    Var out = alloc(n);
    double* y = ptr(out);
    std::fill_n(y, n, 0.0);
    for (Var v : parts) {
      if (size(v) != n) throw ShapeError("sum: length mismatch");
      const double* x = ptr(v);
      for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
    }
    record_list(OpKind::Sum, out, parts);
    return out;
  }
  Var sum(std::initializer_list<Var> parts) {
    return sum(std::span<const Var>(parts.begin(), parts.size()));
  }

  /// Sum of all entries, as a length-1 node.
  Var reduce_sum(Var a) {
    Var out = alloc(1);
    double acc = 0.0;
    const double* x = ptr(a);
    for (std::size_t i = 0; i < size(a); ++i) acc += x[i];
    *ptr(out) = acc;
    push(Op{.kind = OpKind::ReduceSum, .out = out.id, .a = a.id});
    return out;
  }

  /// Forward value is `sample`; backward routes the gradient to `p` unchanged.
  Var straight_through(std::span<const double> sample, Var p) {
    if (sample.size() != size(p)) throw ShapeError("straight_through: length mismatch");
    Var out = input(sample);
    push(Op{.kind = OpKind::StraightThrough, .out = out.id, .a = p.id});
    return out;
  }

  /// -log softmax(logits)[gold] as a length-1 node.
  Var nll(Var logits, std::size_t gold) {
    const std::size_t k = size(logits);
    if (gold >= k) throw DataError("gold id " + std::to_string(gold) + " out of range");
    const double* h = ptr(logits);
    const double mx = *std::max_element(h, h + k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += std::exp(h[i] - mx);
    const double loss = -(h[gold] - mx - std::log(total));
    Var out = alloc(1);
    *ptr(out) = loss;
    push(Op{.kind = OpKind::Nll, .out = out.id, .a = logits.id, .aux = static_cast<std::uint32_t>(gold)});
    return out;
  }

  // -- reverse pass -----------------------------------------------------------

  /// Accumulates d(loss)/d(theta) into every Parameter reached, then clears the tape.
  void backward(Var loss, double loss_grad = 1.0) {
    if (ops_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
      throw UsageError("backward() called before a forward pass was recorded");
    }
    if (size(loss) != 1) throw UsageError("backward() needs a scalar loss node");
    grads_.assign(values_.size(), 0.0);
    grads_[nodes_[loss.id].offset] = loss_grad;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) backprop(*it);
    clear();
  }

 private:
  enum class OpKind : std::uint8_t {
    Param, Row, Linear, Add, Sub, Mul, Sigmoid, Tanh, Affine,
    Slice, Concat, Sum, ReduceSum, StraightThrough, Nll
  };

  struct Node {
    std::size_t offset;
    std::size_t len;
  };

  struct Op {
    OpKind kind;
    std::uint32_t out = 0;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t list_begin = 0;
    std::uint32_t list_len = 0;
    const Parameter* p = nullptr;
    const Parameter* p2 = nullptr;
    double alpha = 0.0;
    std::uint32_t aux = 0;
  };

  Var alloc(std::size_t n) {
    Var v{static_cast<std::uint32_t>(nodes_.size())};
    nodes_.push_back({values_.size(), n});
    values_.resize(values_.size() + n);
    return v;
  }
  double* ptr(Var v) { return values_.data() + nodes_[v.id].offset; }
  void push(const Op& op) { ops_.push_back(op); }

  void record_list(OpKind kind, Var out, std::span<const Var> parts) {
    const auto begin = static_cast<std::uint32_t>(lists_.size());
    for (Var v : parts) lists_.push_back(v.id);
    push(Op{.kind = kind,
            .out = out.id,
            .list_begin = begin,
            .list_len = static_cast<std::uint32_t>(parts.size())});
  }

  Var binary(OpKind kind, Var a, Var b) {
    const std::size_t n = size(a);
    if (size(b) != n) {
      throw ShapeError("elementwise op on lengths " + std::to_string(n) + " and " +
                       std::to_string(size(b)));
    }
    Var out = alloc(n);
    const double* x = ptr(a);
    const double* z = ptr(b);
    double* y = ptr(out);
    switch (kind) {
      case OpKind::Add: for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + z[i]; break;
      case OpKind::Sub: for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - z[i]; break;
      default:          for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * z[i]; break;
    }
    push(Op{.kind = kind, .out = out.id, .a = a.id, .b = b.id});
    return out;
  }

  void backprop(const Op& op) {
    const Node& on = nodes_[op.out];
    const double* dy = grads_.data() + on.offset;
    const double* y = values_.data() + on.offset;
    const std::size_t n = on.len;
    auto grad_of = [&](std::uint32_t id) { return grads_.data() + nodes_[id].offset; };
    auto value_of = [&](std::uint32_t id) { return values_.data() + nodes_[id].offset; };

    switch (op.kind) {
      case OpKind::Param: {
        double* g = op.p->grad.data();
        for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
        break;
      }
      case OpKind::Row: {
        op.p->mark_row(op.aux);
        auto g = op.p->grad.row(op.aux);
        for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
        break;
      }
      case OpKind::Linear: {
        const Parameter& w = *op.p;
        const std::size_t cols = w.value.cols();
        double* gw = w.grad.data();
        const double* wd = w.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = dy[i];
          if (gi == 0.0) continue;
          std::size_t col = 0;
          for (std::uint32_t k = 0; k < op.list_len; ++k) {
            const std::uint32_t id = lists_[op.list_begin + k];
            const std::size_t len = nodes_[id].len;
            const double* x = value_of(id);
            double* dx = grad_of(id);
            double* gwrow = gw + i * cols + col;
            const double* wrow = wd + i * cols + col;
            for (std::size_t j = 0; j < len; ++j) {
              gwrow[j] += gi * x[j];
              dx[j] += gi * wrow[j];
            }
            col += len;
          }
        }
        if (op.p2) {
          double* gb = op.p2->grad.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += dy[i];
        }
        break;
      }
      case OpKind::Add: {
        double* da = grad_of(op.a);
        double* db = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) { da[i] += dy[i]; db[i] += dy[i]; }
        break;
      }
      case OpKind::Sub: {
        double* da = grad_of(op.a);
        double* db = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) { da[i] += dy[i]; db[i] -= dy[i]; }
        break;
      }
      case OpKind::Mul: {
        const double* a = value_of(op.a);
        const double* b = value_of(op.b);
        double* da = grad_of(op.a);
        double* db = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) {
          da[i] += dy[i] * b[i];
          db[i] += dy[i] * a[i];
        }
        break;
      }
      case OpKind::Sigmoid: {
        double* da = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::Tanh: {
        double* da = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::Affine: {
        double* da = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) da[i] += op.alpha * dy[i];
        break;
      }
      case OpKind::Slice: {
        double* da = grad_of(op.a) + op.aux;
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
        break;
      }
      case OpKind::Concat: {
        std::size_t off = 0;
        for (std::uint32_t k = 0; k < op.list_len; ++k) {
          const std::uint32_t id = lists_[op.list_begin + k];
          double* da = grad_of(id);
          const std::size_t len = nodes_[id].len;
          for (std::size_t i = 0; i < len; ++i) da[i] += dy[off + i];
          off += len;
        }
        break;
      }
      case OpKind::Sum: {
        for (std::uint32_t k = 0; k < op.list_len; ++k) {
          double* da = grad_of(lists_[op.list_begin + k]);
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        break;
      }
      case OpKind::ReduceSum: {
        double* da = grad_of(op.a);
        const std::size_t len = nodes_[op.a].len;
        for (std::size_t i = 0; i < len; ++i) da[i] += dy[0];
        break;
      }
      case OpKind::StraightThrough: {
        double* da = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
        break;
      }
      case OpKind::Nll: {
        const std::size_t k = nodes_[op.a].len;
        const double* h = value_of(op.a);
        double* da = grad_of(op.a);
        const double mx = *std::max_element(h, h + k);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) total += std::exp(h[i] - mx);
        for (std::size_t i = 0; i < k; ++i) {
          const double prob = std::exp(h[i] - mx) / total;
          da[i] += dy[0] * (prob - (i == op.aux ? 1.0 : 0.0));
        }
        break;
      }
    }
  }

  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Node> nodes_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> lists_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares backward() against central differences for every entry of
/// `params`. `loss_fn` records a forward pass on the given tape and returns
/// the scalar loss. `reference`, if given, evaluates the same loss at the
/// current parameters with less rounding noise; it is used for the finite
/// differences. Both must be deterministic (re-seed any RNG inside).
/// Parameters rejected by `include` still get analytic gradients but are not
/// compared. Lookup-table rows the loss never read are exactly zero on both
/// sides and are counted without re-evaluation. `after_backward` runs between backward and the comparison.
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& loss_fn,
                                  std::span<Parameter* const> params, double eps = 1e-5,
                                  const std::function<bool(const Parameter&)>& include = {},
                                  const std::function<void()>& after_backward = {},
                                  std::function<long double()> reference = {}) {
  for (Parameter* p : params) p->zero_grad();
  Tape tape;
  {
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  if (after_backward) after_backward();
  if (!reference) {
    reference = [&]() -> long double {
      tape.clear();
      const double f = tape.scalar(loss_fn(tape));
      tape.clear();
      return f;
    };
  }
  if (reference() != reference()) {
    throw UsageError("grad_check: loss function is not deterministic");
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    if (include && !include(*p)) continue;
    double* theta = p->value.data();
    const double* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (p->sparse_rows && !p->row_touched[i / p->value.cols()] && g[i] == 0.0) {
        ++report.entries_checked;
        continue;
      }
      const double saved = theta[i];
      const double up = saved + eps;
      const double down = saved - eps;
      theta[i] = up;
      const long double fp = reference();
      theta[i] = down;
      const long double fm = reference();
      theta[i] = saved;
      const auto numeric = static_cast<double>((fp - fm) / (static_cast<long double>(up) - down));
      const double err = relative_error(g[i], numeric);
      ++report.entries_checked;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.worst_analytic = g[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace shortcut
