#pragma once

// L bidirectional recurrent layers wired by one of five shortcut topologies.
//
// Layer l (1-based) of each direction reads the combined output of layer l-1
// and, through gated shortcuts, the raw same-direction outputs of the layers
// returned by skip_sources(). Layers without a skip source run PlainLSTM.

#include <string>
#include <string_view>
#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/cells.hpp"
#include "shortcut/dropout.hpp"

namespace shortcut {

enum class Topology { T1, T2, T3, T4, T5 };
inline constexpr std::array kAllTopologies = {Topology::T1, Topology::T2, Topology::T3,
                                              Topology::T4, Topology::T5};

inline std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::T1: return "T1";
    case Topology::T2: return "T2";
    case Topology::T3: return "T3";
    case Topology::T4: return "T4";
    case Topology::T5: return "T5";
  }
  return "?";
}

inline Topology parse_topology(std::string_view s) {
  for (Topology t : kAllTopologies)
    if (to_string(t) == s) return t;
  throw ConfigError("unknown topology '" + std::string(s) + "'");
}

/// How forward and backward outputs of a layer merge before feeding the next.
enum class Combine { Sum, ConcatProject };

inline std::string_view to_string(Combine c) {
  return c == Combine::Sum ? "sum" : "concat-project";
}
inline Combine parse_combine(std::string_view s) {
  if (s == "sum") return Combine::Sum;
  if (s == "concat-project") return Combine::ConcatProject;
  throw ConfigError("unknown combine mode '" + std::string(s) + "'");
}

struct StackConfig {
  std::size_t layers = 9;
  std::size_t hidden = 465;
  Topology topology = Topology::T2;
  CellRule rule = CellRule::ShortcutBlock;
  GateSpec gate;
  Combine combine = Combine::Sum;
};

/// Source layers (1-based, all < l) whose outputs skip into layer l.
///   T1: {1} for l >= 3               T2: {l-2} for l >= 3
///   T3: {l-3} for l >= 4             T4: {1} at l = 3, {1, l-2} at odd l >= 5
///   T5: {l-2, l-3} restricted to layers >= 1, for l >= 3
inline std::vector<std::size_t> skip_sources(Topology topology, std::size_t l, std::size_t layers) {
  if (l < 1 || l > layers) {
    throw UsageError("skip_sources: layer " + std::to_string(l) + " outside 1.." +
                     std::to_string(layers));
  }
  switch (topology) {
    case Topology::T1:
      if (l >= 3) return {1};
      return {};
    case Topology::T2:
      if (l >= 3) return {l - 2};
      return {};
    case Topology::T3:
      if (l >= 4) return {l - 3};
      return {};
    case Topology::T4:
      if (l == 3) return {1};
      if (l >= 5 && l % 2 == 1) return {1, l - 2};
      return {};
    case Topology::T5:
      if (l == 3) return {1};
      if (l >= 4) return {l - 2, l - 3};
      return {};
  }
  return {};
}

inline CellRule effective_rule(const StackConfig& cfg, std::size_t l) {
  return skip_sources(cfg.topology, l, cfg.layers).empty() ? CellRule::PlainLSTM : cfg.rule;
}

struct LayerParams {
  CellParams fwd;
  CellParams bwd;
  Parameter project;  // n x 2n, concat-project mode and l < L only
};

struct StackParams {
  StackConfig config;
  std::size_t d_in = 0;
  std::vector<LayerParams> layers;

  template <class F>
  void for_each_parameter(F&& f) {
    for (LayerParams& lp : layers) {
      lp.fwd.for_each_parameter(f);
      lp.bwd.for_each_parameter(f);
      if (lp.project.size() > 0) f(lp.project);
    }
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<StackParams*>(this)->for_each_parameter([&](const Parameter& p) { f(p); });
  }
};

inline StackParams make_stack_params(const StackConfig& cfg, std::size_t d_in, Rng& rng,
                                     const std::string& prefix = "stack") {
  if (cfg.layers < 1) throw ConfigError("stack.layers must be >= 1");
  if (cfg.hidden < 1) throw ConfigError("stack.hidden must be >= 1");
  cfg.gate.validate();
  StackParams sp;
  sp.config = cfg;
  sp.d_in = d_in;
  const std::size_t n = cfg.hidden;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    const std::size_t layer_in = l == 1 ? d_in : n;
    const std::size_t skips = skip_sources(cfg.topology, l, cfg.layers).size();
    const CellRule rule = effective_rule(cfg, l);
    const std::string base = prefix + ".layer" + std::to_string(l);
    LayerParams lp;
    lp.fwd = make_cell_params(base + ".fwd", rule, cfg.gate, n, layer_in, skips, rng);
    lp.bwd = make_cell_params(base + ".bwd", rule, cfg.gate, n, layer_in, skips, rng);
    if (cfg.combine == Combine::ConcatProject && l < cfg.layers) {
      lp.project = Parameter(base + ".project", gaussian_init(n, 2 * n, 2 * n, rng));
    }
    sp.layers.push_back(std::move(lp));
  }
  return sp;
}

struct StackOptions {
  Mode mode = Mode::Test;
  Rng* rng = nullptr;
  /// Dropout on the first hidden layer's output and on the top output.
  double hidden_drop = 0.0;
  std::optional<double> pinned_gate;
  bool straight_through = true;
};

/// Runs the whole stack over one sequence. Returns, per token, the
/// concatenation [forward top state; backward top state] of length 2n.
inline std::vector<Var> stack_forward(Tape& tape, const StackParams& sp, std::span<const Var> inputs,
                                      const StackOptions& opt = {}) {
  const StackConfig& cfg = sp.config;
  const std::size_t T = inputs.size();
  const std::size_t L = cfg.layers;
  const std::size_t n = cfg.hidden;
  if (T == 0) throw UsageError("stack_forward: empty sequence");
  if (sp.layers.size() != L) throw ShapeError("stack params do not match layer count");

  StepOptions step_opt{.mode = opt.mode, .rng = opt.rng, .pinned_gate = opt.pinned_gate,
                       .straight_through = opt.straight_through};

  // outputs[l][dir][t]: visible per-direction states of layer l+1
  std::vector<std::array<std::vector<CellState>, 2>> outputs(L);
  std::vector<Var> layer_in(inputs.begin(), inputs.end());

  for (std::size_t l = 1; l <= L; ++l) {
    const LayerParams& lp = sp.layers[l - 1];
    const auto sources = skip_sources(cfg.topology, l, L);
    for (int dir = 0; dir < 2; ++dir) {
      const CellParams& cp = dir == 0 ? lp.fwd : lp.bwd;
      auto& out = outputs[l - 1][dir];
      out.assign(T, CellState{});
      CellState prev{tape.constant(n, 0.0), has_cell_state(cp.rule) ? tape.constant(n, 0.0) : Var{}};
      std::vector<SkipInput> skips(sources.size());
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = dir == 0 ? step : T - 1 - step;
        for (std::size_t k = 0; k < sources.size(); ++k) {
          const CellState& src = outputs[sources[k] - 1][dir][t];
          skips[k] = SkipInput{src.h, src.c};
        }
        prev = cell_step(tape, cp, layer_in[t], prev, skips, step_opt);
        out[t] = prev;
      }
    }
    if (l == 1 && L > 1 && opt.hidden_drop > 0.0) {
      for (int dir = 0; dir < 2; ++dir)
        for (CellState& s : outputs[0][dir])
          s.h = apply_dropout(tape, s.h, opt.hidden_drop, opt.mode, opt.rng);
    }
    if (l < L) {
      for (std::size_t t = 0; t < T; ++t) {
        const Var f = outputs[l - 1][0][t].h;
        const Var b = outputs[l - 1][1][t].h;
        layer_in[t] = cfg.combine == Combine::Sum ? tape.add(f, b)
                                                  : tape.matvec(lp.project, tape.concat({f, b}));
      }
    }
  }

  std::vector<Var> top(T);
  for (std::size_t t = 0; t < T; ++t) {
    top[t] = tape.concat({outputs[L - 1][0][t].h, outputs[L - 1][1][t].h});
    top[t] = apply_dropout(tape, top[t], opt.hidden_drop, opt.mode, opt.rng);
  }
  return top;
}

}  // namespace shortcut
