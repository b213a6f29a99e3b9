#pragma once

// Finite-difference verification of the full tagger over every
// rule x gate x topology combination, on a tiny model.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/model.hpp"

namespace shortcut {

struct GradCheckCase {
  CellRule rule;
  GateKind gate;
  Topology topology;

  std::string label() const {
    return std::string(to_string(rule)) + "/" + std::string(to_string(gate)) + "/" + std::string(to_string(topology));
  }
};

struct GradCheckOutcome {
  GradCheckCase which;
  double train_error = 0.0;  // train mode, dropout and gate samples frozen
  double test_error = 0.0;   // test mode; only run for learned Bernoulli gates
  std::string worst_parameter;
  std::size_t entries = 0;

  double max_error() const { return std::max(train_error, test_error); }
};

struct GradCheckSetup {
  std::size_t hidden = 4;
  std::size_t layers = 5;
  std::size_t length = 3;
  std::size_t vocab = 10;
  std::size_t tags = 5;
  double eps = 1e-5;
  std::uint64_t seed = 7;
};

/// The tiny tagging problem used for gradient checks.
inline TaggedCorpus gradcheck_corpus(const GradCheckSetup& s) {
  Rng rng(s.seed);
  TaggedCorpus c;
  // One sentence per vocabulary word so every word and tag is in the vocab.
  for (std::size_t v = 0; v < s.vocab; ++v) {
    TaggedSentence sent;
    for (std::size_t t = 0; t < s.length; ++t) {
      const std::size_t w = t == 0 ? v : rng.below(s.vocab);
      std::string tok = synthetic_token_name(w);
      if (w % 3 == 1) tok[0] = 'W';  // exercise more than one capitalization row
      sent.push_back({tok, "T" + std::to_string((v + t) % s.tags)});
    }
    c.sentences.push_back(std::move(sent));
  }
  return c;
}

inline ModelConfig gradcheck_model_config(const GradCheckSetup& s, const GradCheckCase& k) {
  ModelConfig cfg;
  cfg.features = FeatureDims{.word_dim = 2, .cap_dim = 2, .char_dim = 1, .chars_per_side = 1, .window = 3};
  cfg.stack.layers = s.layers;
  cfg.stack.hidden = s.hidden;
  cfg.stack.topology = k.topology;
  cfg.stack.rule = k.rule;
  cfg.stack.gate = GateSpec{k.gate, 0.5};
  cfg.window_drop = 0.25;
  cfg.hidden_drop = 0.5;
  return cfg;
}

/// Train mode runs with dropout and gate masks frozen (the RNG is re-seeded
/// per evaluation) and learned Bernoulli masks treated as constants. Models
/// with a learned Bernoulli gate get a second, test-mode pass, which is where
/// the gate weights receive gradient. `after_backward` lets negative-control
/// tests tamper with analytic gradients.
inline GradCheckOutcome check_gradients(const GradCheckCase& k, const GradCheckSetup& s = {},
                                        const std::function<void(TaggerModel&)>& after_backward = {}) {
  const TaggedCorpus corpus = gradcheck_corpus(s);
  Rng init(s.seed);
  TaggerModel m = build_model(gradcheck_model_config(s, k), corpus, init);
  const auto& sent = corpus.sentences.front();
  const EncodedSentence enc = encode_sentence(m, sentence_tokens(sent));
  const std::vector<std::uint32_t> gold = gold_ids(m, sent);
  std::vector<Parameter*> params = m.parameters();

  auto run = [&](Mode mode) {
    auto options = [&](Rng& masks) {
      return ForwardOptions{.mode = mode, .rng = &masks, .pinned_gate = std::nullopt, .straight_through = false};
    };
    auto loss = [&](Tape& tape) {
      Rng masks(s.seed + 1);
      return sentence_loss(tape, m, enc, gold, options(masks));
    };
    Tape scratch;
    auto reference = [&]() {
      Rng masks(s.seed + 1);
      return precise_sentence_loss(scratch, m, enc, gold, options(masks));
    };
    std::function<void()> hook;
    if (after_backward) hook = [&] { after_backward(m); };
    return grad_check(loss, params, s.eps, {}, hook, reference);
  };

  GradCheckOutcome out{k};
  const GradCheckReport train = run(Mode::Train);
  out.train_error = train.max_rel_error;
  out.worst_parameter = train.worst_parameter;
  out.entries = train.entries_checked;
  if (k.gate == GateKind::BernoulliLearned) {
    const GradCheckReport test = run(Mode::Test);
    out.test_error = test.max_rel_error;
    out.entries += test.entries_checked;
    if (test.max_rel_error > train.max_rel_error) out.worst_parameter = test.worst_parameter;
  }
  return out;
}

inline std::vector<GradCheckCase> all_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  for (CellRule r : kAllCellRules)
    for (GateKind g : kAllGateKinds)
      for (Topology t : kAllTopologies) cases.push_back({r, g, t});
  return cases;
}

}  // namespace shortcut
