#pragma once

// Recurrent update rules: the stacked-LSTM baseline, the shortcut block, and
// the Case-1 / Case-2 variants, each combinable with any gate function.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/linalg.hpp"

namespace shortcut {

enum class Mode { Train, Test };

enum class CellRule {
  PlainLSTM,
  WuBaseline,  // LSTM with a gated skip added to h only
  Case1NoGate,
  Case1WithGate,
  Case1Highway,
  Case1SeparateGates,
  ShortcutBlock,
  SB_NoGateInH,
  SB_NoGateInM,
  SB_SharedOutputGate,
  SB_NoShortcutInternal,
  SB_NoShortcutCellOutput,
};

enum class GateKind {
  LinearMap,
  NonlinearPrev,
  NonlinearRecurrent,
  NonlinearSkip,
  BernoulliFixed,
  BernoulliLearned,
  TanhScaledSkip,
};

inline constexpr std::array kAllCellRules = {
    CellRule::PlainLSTM,           CellRule::WuBaseline,           CellRule::Case1NoGate,
    CellRule::Case1WithGate,       CellRule::Case1Highway,         CellRule::Case1SeparateGates,
    CellRule::ShortcutBlock,       CellRule::SB_NoGateInH,         CellRule::SB_NoGateInM,
    CellRule::SB_SharedOutputGate, CellRule::SB_NoShortcutInternal, CellRule::SB_NoShortcutCellOutput,
};

inline constexpr std::array kAllGateKinds = {
    GateKind::LinearMap,      GateKind::NonlinearPrev,    GateKind::NonlinearRecurrent,
    GateKind::NonlinearSkip,  GateKind::BernoulliFixed,   GateKind::BernoulliLearned,
    GateKind::TanhScaledSkip,
};

inline std::string_view to_string(CellRule r) {
  switch (r) {
    case CellRule::PlainLSTM: return "PlainLSTM";
    case CellRule::WuBaseline: return "WuBaseline";
    case CellRule::Case1NoGate: return "Case1NoGate";
    case CellRule::Case1WithGate: return "Case1WithGate";
    case CellRule::Case1Highway: return "Case1Highway";
    case CellRule::Case1SeparateGates: return "Case1SeparateGates";
    case CellRule::ShortcutBlock: return "ShortcutBlock";
    case CellRule::SB_NoGateInH: return "SB_NoGateInH";
    case CellRule::SB_NoGateInM: return "SB_NoGateInM";
    case CellRule::SB_SharedOutputGate: return "SB_SharedOutputGate";
    case CellRule::SB_NoShortcutInternal: return "SB_NoShortcutInternal";
    case CellRule::SB_NoShortcutCellOutput: return "SB_NoShortcutCellOutput";
  }
  return "?";
}

inline std::string_view to_string(GateKind g) {
  switch (g) {
    case GateKind::LinearMap: return "LinearMap";
    case GateKind::NonlinearPrev: return "NonlinearPrev";
    case GateKind::NonlinearRecurrent: return "NonlinearRecurrent";
    case GateKind::NonlinearSkip: return "NonlinearSkip";
    case GateKind::BernoulliFixed: return "BernoulliFixed";
    case GateKind::BernoulliLearned: return "BernoulliLearned";
    case GateKind::TanhScaledSkip: return "TanhScaledSkip";
  }
  return "?";
}

inline CellRule parse_cell_rule(std::string_view s) {
  for (CellRule r : kAllCellRules)
    if (to_string(r) == s) return r;
  throw ConfigError("unknown cell rule '" + std::string(s) + "'");
}

inline GateKind parse_gate_kind(std::string_view s) {
  for (GateKind g : kAllGateKinds)
    if (to_string(g) == s) return g;
  throw ConfigError("unknown gate kind '" + std::string(s) + "'");
}

/// Rules that carry a self-connected cell state c across time.
inline bool has_cell_state(CellRule r) {
  switch (r) {
    case CellRule::PlainLSTM:
    case CellRule::WuBaseline:
    case CellRule::Case1NoGate:
    case CellRule::Case1WithGate:
    case CellRule::Case1Highway:
    case CellRule::Case1SeparateGates:
      return true;
    default:
      return false;
  }
}

inline bool uses_gate(CellRule r) {
  return r != CellRule::PlainLSTM && r != CellRule::Case1NoGate;
}

/// Gate slots per skip source: the separate-gates variant gates c and h independently.
inline std::size_t gate_slots_per_skip(CellRule r) {
  if (!uses_gate(r)) return 0;
  return r == CellRule::Case1SeparateGates ? 2 : 1;
}

/// Pre-activation row blocks in W: (i, f, o, s) with a cell state, (i, o, s) without.
inline std::size_t preactivation_blocks(CellRule r) { return has_cell_state(r) ? 4 : 3; }

inline bool gate_has_weight(GateKind k) {
  return k != GateKind::BernoulliFixed && k != GateKind::TanhScaledSkip;
}
inline bool gate_has_bias(GateKind k) {
  return gate_has_weight(k) && k != GateKind::LinearMap;
}

struct GateSpec {
  GateKind kind = GateKind::NonlinearPrev;
  double p = 0.5;  // BernoulliFixed only

  void validate() const {
    if (kind == GateKind::BernoulliFixed && !(p >= 0.0 && p <= 1.0)) {
      throw ConfigError("BernoulliFixed gate needs p in [0,1], got " + std::to_string(p));
    }
  }
};

/// Weights of one recurrent layer in one direction.
struct CellParams {
  CellRule rule = CellRule::PlainLSTM;
  GateSpec gate;
  std::size_t n = 0;
  std::size_t d_in = 0;
  std::size_t skips = 0;
  Parameter w;  // (blocks*n) x (d_in + n)
  Parameter b;  // blocks*n
  // One entry per gate slot (skip k, slot j) at index k*slots + j. Entries are
  // empty parameters for gate kinds that have no weight or bias.
  std::vector<Parameter> gate_w;
  std::vector<Parameter> gate_b;

  template <class F>
  void for_each_parameter(F&& f) {
    f(w);
    f(b);
    for (std::size_t s = 0; s < gate_w.size(); ++s) {
      if (gate_w[s].size() > 0) f(gate_w[s]);
      if (gate_b[s].size() > 0) f(gate_b[s]);
    }
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<CellParams*>(this)->for_each_parameter(
        [&](const Parameter& p) { f(p); });
  }
};

/// Shape of the weight feeding a gate slot (rows x cols); {0,0} when absent.
inline std::pair<std::size_t, std::size_t> gate_weight_shape(GateKind k, std::size_t n,
                                                             std::size_t d_in) {
  switch (k) {
    case GateKind::LinearMap:
    case GateKind::NonlinearRecurrent:
    case GateKind::NonlinearSkip:
      return {n, n};
    case GateKind::NonlinearPrev:
    case GateKind::BernoulliLearned:
      return {n, d_in};
    default:
      return {0, 0};
  }
}

/// Input columns of W are Gaussian; each n x n recurrent block is orthogonal;
/// biases start at zero. Gate weights on the recurrent path (U) are
/// orthogonal, the others Gaussian.
inline CellParams make_cell_params(const std::string& prefix, CellRule rule, GateSpec gate,
                                   std::size_t n, std::size_t d_in, std::size_t skips,
                                   Rng& rng) {
  gate.validate();
  if (n < 1 || d_in < 1) throw ShapeError(prefix + ": widths must be >= 1");
  CellParams p;
  p.rule = rule;
  p.gate = gate;
  p.n = n;
  p.d_in = d_in;
  p.skips = skips;

  const std::size_t blocks = preactivation_blocks(rule);
  Matrix w(blocks * n, d_in + n);
  const Matrix input_part = gaussian_init(blocks * n, d_in, d_in, rng);
  for (std::size_t r = 0; r < blocks * n; ++r)
    for (std::size_t c = 0; c < d_in; ++c) w(r, c) = input_part(r, c);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const Matrix q = orthogonal_init(n, rng);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) w(blk * n + r, d_in + c) = q(r, c);
  }
  p.w = Parameter(prefix + ".W", std::move(w));
  p.b = Parameter(prefix + ".b", Matrix(blocks * n, 1));

  const std::size_t slots = gate_slots_per_skip(rule) * skips;
  for (std::size_t s = 0; s < slots; ++s) {
    const std::string gp = prefix + ".gate" + std::to_string(s);
    const auto [rows, cols] = gate_weight_shape(gate.kind, n, d_in);
    if (rows == 0) {
      p.gate_w.emplace_back();
    } else if (gate.kind == GateKind::NonlinearRecurrent) {
      p.gate_w.emplace_back(gp + ".U", orthogonal_init(n, rng));
    } else {
      p.gate_w.emplace_back(gp + ".W", gaussian_init(rows, cols, cols, rng));
    }
    if (gate_has_bias(gate.kind)) {
      p.gate_b.emplace_back(gp + ".b", Matrix(n, 1));
    } else {
      p.gate_b.emplace_back();
    }
  }
  return p;
}

struct CellState {
  Var h;
  Var c;  // invalid for rules without a cell state
};

/// Output of a lower layer fed to this layer through a shortcut.
struct SkipInput {
  Var h;
  Var c;  // required only by Case1SeparateGates
};

struct StepOptions {
  Mode mode = Mode::Test;
  Rng* rng = nullptr;  // required for Bernoulli gates in train mode
  /// Replace every gate by this constant (reduction checks).
  std::optional<double> pinned_gate;
  /// Learned Bernoulli gates pass gradient to p through the sampled mask.
  /// When false the mask is a constant, so gradients are exact for that mask.
  bool straight_through = true;
};

/// A gate as seen by the update equations: `apply(v)` realizes "g ⊙ v".
struct GateResult {
  enum class Form { Elementwise, Matrix, Identity };
  Form form = Form::Identity;
  Var g;                              // Elementwise
  Var p;                              // Bernoulli kinds: the keep probability
  const Parameter* matrix = nullptr;  // Matrix (LinearMap)

  Var apply(Tape& tape, Var v) const {
    switch (form) {
      case Form::Elementwise: return tape.mul(g, v);
      case Form::Matrix: return tape.matvec(*matrix, v);
      case Form::Identity: return v;
    }
    return v;
  }
};

/// Evaluates gate slot `slot` of `params`.
/// `prev_layer` is h_t^{l-1} (this layer's input), `prev_time` is h_{t-1}^l.
inline GateResult gate_value(Tape& tape, const CellParams& params, std::size_t slot,
                             Var prev_layer, Var prev_time, Var skip,
                             const StepOptions& opt) {
  const std::size_t n = params.n;
  GateResult out;
  if (opt.pinned_gate) {
    out.form = GateResult::Form::Elementwise;
    out.g = tape.constant(n, *opt.pinned_gate);
    return out;
  }
  const GateSpec& spec = params.gate;
  const Parameter* w = slot < params.gate_w.size() ? &params.gate_w[slot] : nullptr;
  const Parameter* b = slot < params.gate_b.size() ? &params.gate_b[slot] : nullptr;
  if (gate_has_weight(spec.kind) && (!w || w->size() == 0)) {
    throw UsageError("gate slot " + std::to_string(slot) + " has no weights");
  }

  auto sample = [&](std::span<const double> probs) {
    if (!opt.rng) throw UsageError("stochastic gate in train mode needs an rng");
    std::vector<double> mask(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) mask[i] = opt.rng->bernoulli(probs[i]) ? 1.0 : 0.0;
    return mask;
  };

  switch (spec.kind) {
    case GateKind::LinearMap:
      out.form = GateResult::Form::Matrix;
      out.matrix = w;
      break;
    case GateKind::NonlinearPrev:
      out.form = GateResult::Form::Elementwise;
      out.g = tape.sigmoid(tape.linear(*w, {prev_layer}, b));
      break;
    case GateKind::NonlinearRecurrent:
      out.form = GateResult::Form::Elementwise;
      out.g = tape.sigmoid(tape.linear(*w, {prev_time}, b));
      break;
    case GateKind::NonlinearSkip:
      out.form = GateResult::Form::Elementwise;
      out.g = tape.sigmoid(tape.linear(*w, {skip}, b));
      break;
    case GateKind::BernoulliFixed: {
      spec.validate();
      out.form = GateResult::Form::Elementwise;
      out.p = tape.constant(n, spec.p);
      if (opt.mode == Mode::Train) {
        const std::vector<double> probs(n, spec.p);
        out.g = tape.input(sample(probs));
      } else {
        out.g = out.p;
      }
      break;
    }
    case GateKind::BernoulliLearned: {
      out.form = GateResult::Form::Elementwise;
      out.p = tape.sigmoid(tape.linear(*w, {prev_layer}, b));
      if (opt.mode == Mode::Train) {
        const std::vector<double> probs(tape.value(out.p).begin(), tape.value(out.p).end());
        out.g = opt.straight_through ? tape.straight_through(sample(probs), out.p) : tape.input(sample(probs));
      } else {
        out.g = out.p;
      }
      break;
    }
    case GateKind::TanhScaledSkip:
      out.form = GateResult::Form::Identity;
      break;
  }
  return out;
}

/// Intermediate values of one step, for inspection in tests.
struct StepTrace {
  Var h_tilde;  // Case-1 and Wu rules: o ⊙ tanh(c̃) before any shortcut
  Var c_tilde;  // f ⊙ c_{t-1} + i ⊙ s before any shortcut
  Var m;        // Case-2 rules: internal state
  std::vector<GateResult> gates;
};

/// One time step of any CellRule. `x` is the layer input, `prev` the state at t-1.
inline CellState cell_step(Tape& tape, const CellParams& params, Var x, const CellState& prev,
                           std::span<const SkipInput> skips, const StepOptions& opt = {},
                           StepTrace* trace = nullptr) {
  const std::size_t n = params.n;
  const CellRule rule = params.rule;
  if (tape.size(x) != params.d_in) {
    throw ShapeError(params.w.name + ": input length " + std::to_string(tape.size(x)) +
                     " != " + std::to_string(params.d_in));
  }
  if (tape.size(prev.h) != n) throw ShapeError(params.w.name + ": previous h has wrong length");
  const bool stateful = has_cell_state(rule);
  if (stateful && !prev.c.valid()) {
    throw UsageError(std::string(to_string(rule)) + " step needs the previous cell state c");
  }
  for (const SkipInput& s : skips) {
    if (tape.size(s.h) != n) {
      throw ShapeError(params.w.name + ": skip length " + std::to_string(tape.size(s.h)) +
                       " != hidden width " + std::to_string(n));
    }
  }
  if (uses_gate(rule) && !opt.pinned_gate && gate_has_weight(params.gate.kind) &&
      params.gate_w.size() < skips.size() * gate_slots_per_skip(rule)) {
    throw ShapeError(params.w.name + ": more skip inputs than gate slots");
  }

  const Var z = tape.linear(params.w, {x, prev.h}, &params.b);
  const Var i = tape.sigmoid(tape.slice(z, 0, n));
  std::size_t off = n;
  Var f;
  if (stateful) {
    f = tape.sigmoid(tape.slice(z, off, n));
    off += n;
  }
  const Var o = tape.sigmoid(tape.slice(z, off, n));
  const Var s = tape.tanh(tape.slice(z, off + n, n));
  const Var is = tape.mul(i, s);

  const bool squash = params.gate.kind == GateKind::TanhScaledSkip && !opt.pinned_gate;
  std::vector<Var> skip_h;
  std::vector<Var> skip_c;
  for (const SkipInput& sk : skips) {
    skip_h.push_back(squash ? tape.tanh(sk.h) : sk.h);
    if (rule == CellRule::Case1SeparateGates) {
      if (!sk.c.valid()) throw UsageError("Case1SeparateGates needs the skip source's cell state");
      if (tape.size(sk.c) != n) throw ShapeError("skip cell state has wrong length");
      skip_c.push_back(squash ? tape.tanh(sk.c) : sk.c);
    }
  }

  const std::size_t slots = gate_slots_per_skip(rule);
  std::vector<GateResult> gates;
  for (std::size_t k = 0; k < skips.size(); ++k)
    for (std::size_t j = 0; j < slots; ++j)
      gates.push_back(gate_value(tape, params, k * slots + j, x, prev.h, skips[k].h, opt));

  // Σ_k gate_k(v_k) over skip sources, using gate slot j of each source.
  auto gated_sum = [&](std::span<const Var> values, std::size_t j, Var base) {
    Var acc = base;
    for (std::size_t k = 0; k < values.size(); ++k)
      acc = tape.add(acc, gates[k * slots + j].apply(tape, values[k]));
    return acc;
  };
  auto plain_sum = [&](std::span<const Var> values, Var base) {
    Var acc = base;
    for (Var v : values) acc = tape.add(acc, v);
    return acc;
  };

  CellState next;
  if (stateful) {
    const Var c_tilde = tape.add(tape.mul(f, prev.c), is);
    const Var h_tilde = tape.mul(o, tape.tanh(c_tilde));
    if (trace) {
      trace->c_tilde = c_tilde;
      trace->h_tilde = h_tilde;
    }
    switch (rule) {
      case CellRule::PlainLSTM:
        next = {h_tilde, c_tilde};
        break;
      case CellRule::WuBaseline:
        next = {gated_sum(skip_h, 0, h_tilde), c_tilde};
        break;
      case CellRule::Case1NoGate:
        next = {plain_sum(skip_h, h_tilde), plain_sum(skip_h, c_tilde)};
        break;
      case CellRule::Case1WithGate:
        next = {gated_sum(skip_h, 0, h_tilde), gated_sum(skip_h, 0, c_tilde)};
        break;
      case CellRule::Case1Highway: {
        // (1 - g) ⊙ x̃ + g ⊙ skip, written as x̃ - g(x̃) + g(skip) so that the
        // matrix-valued gate stays well defined.
        Var c = c_tilde;
        Var h = h_tilde;
        for (std::size_t k = 0; k < skips.size(); ++k) {
          c = tape.add(tape.sub(c, gates[k].apply(tape, c_tilde)), gates[k].apply(tape, skip_h[k]));
          h = tape.add(tape.sub(h, gates[k].apply(tape, h_tilde)), gates[k].apply(tape, skip_h[k]));
        }
        next = {h, c};
        break;
      }
      case CellRule::Case1SeparateGates:
        next = {gated_sum(skip_h, 1, h_tilde), gated_sum(skip_c, 0, c_tilde)};
        break;
      default:
        break;
    }
  } else {
    Var m;
    switch (rule) {
      case CellRule::SB_NoGateInM: m = plain_sum(skip_h, is); break;
      case CellRule::SB_NoShortcutInternal: m = is; break;
      default: m = gated_sum(skip_h, 0, is); break;
    }
    const Var core = tape.mul(o, tape.tanh(m));
    Var h;
    switch (rule) {
      case CellRule::SB_NoGateInH: h = plain_sum(skip_h, core); break;
      case CellRule::SB_SharedOutputGate: {
        h = core;
        for (Var v : skip_h) h = tape.add(h, tape.mul(o, v));
        break;
      }
      case CellRule::SB_NoShortcutCellOutput: h = core; break;
      default: h = gated_sum(skip_h, 0, core); break;
    }
    if (trace) trace->m = m;
    next = {h, Var{}};
  }
  if (trace) trace->gates = std::move(gates);
  return next;
}

/// The baseline stacked-LSTM step: c' = f ⊙ c + i ⊙ s, h' = o ⊙ tanh(c').
inline CellState lstm_step(Tape& tape, const CellParams& params, Var x, const CellState& prev) {
  if (params.rule != CellRule::PlainLSTM) throw UsageError("lstm_step needs PlainLSTM params");
  return cell_step(tape, params, x, prev, {});
}

/// Any shortcut rule with its skip inputs.
inline CellState shortcut_block_step(Tape& tape, const CellParams& params, Var x,
                                     const CellState& prev, std::span<const SkipInput> skips,
                                     const StepOptions& opt = {}, StepTrace* trace = nullptr) {
  return cell_step(tape, params, x, prev, skips, opt, trace);
}

}  // namespace shortcut
