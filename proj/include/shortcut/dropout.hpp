#pragma once

#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/cells.hpp"
#include "shortcut/linalg.hpp"

namespace shortcut {

/// Binary keep-mask: each entry is 1 with probability 1 - p.
inline std::vector<double> dropout_mask(std::size_t len, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
  std::vector<double> mask(len, 1.0);
  if (p == 0.0) return mask;
  for (double& m : mask) m = rng.bernoulli(1.0 - p) ? 1.0 : 0.0;
  return mask;
}

/// Train mode multiplies by a fresh mask; test mode scales by (1 - p).
inline Var apply_dropout(Tape& tape, Var v, double p, Mode mode, Rng* rng) {
  if (p == 0.0) return v;
  if (mode == Mode::Test) return tape.scale(v, 1.0 - p);
  if (!rng) throw UsageError("train-mode dropout needs an rng");
  return tape.mul_const(v, dropout_mask(tape.size(v), p, *rng));
}

}  // namespace shortcut
