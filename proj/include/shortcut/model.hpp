#pragma once

// End-to-end tagger: features -> gated window -> bidirectional stack -> softmax.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/data.hpp"
#include "shortcut/dropout.hpp"
#include "shortcut/features.hpp"
#include "shortcut/stack.hpp"

namespace shortcut {

/// Output classes seen in training plus a reserved RARE class (last id).
class TagVocab {
 public:
  static constexpr const char* kRare = "<rare>";

  TagVocab() = default;
  explicit TagVocab(const std::vector<std::string>& tags) {
    for (const auto& t : tags) add(t);
    rare_ = static_cast<std::uint32_t>(tags_.size());
    tags_.emplace_back(kRare);
  }

  std::uint32_t id(const std::string& tag) const {
    auto it = index_.find(tag);
    return it == index_.end() ? rare_ : it->second;
  }
  const std::string& tag(std::uint32_t id) const { return tags_.at(id); }
  std::uint32_t rare() const { return rare_; }
  std::size_t size() const { return tags_.size(); }
  /// Tags without the RARE entry, in id order.
  std::vector<std::string> known() const { return {tags_.begin(), tags_.end() - 1}; }

  bool operator==(const TagVocab& o) const { return tags_ == o.tags_; }

 private:
  void add(const std::string& t) {
    if (t == kRare) throw DataError("tag '<rare>' is reserved");
    if (index_.emplace(t, static_cast<std::uint32_t>(tags_.size())).second) tags_.push_back(t);
  }
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::uint32_t rare_ = 0;
};

struct ModelConfig {
  FeatureDims features;
  StackConfig stack;
  double window_drop = 0.25;
  double hidden_drop = 0.5;
};

struct TaggerModel {
  ModelConfig config;
  FeatureVocab vocab;
  TagVocab tags;
  FeatureParams features;
  StackParams stack;
  Parameter output_w;  // |tags| x 2n
  Parameter output_b;  // |tags|

  template <class F>
  void for_each_parameter(F&& f) {
    features.for_each_parameter(f);
    stack.for_each_parameter(f);
    f(output_w);
    f(output_b);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<TaggerModel*>(this)->for_each_parameter([&](const Parameter& p) { f(p); });
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for_each_parameter([&](Parameter& p) { out.push_back(&p); });
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const Parameter& p) { n += p.size(); });
    return n;
  }
};

inline TaggerModel make_model(const ModelConfig& cfg, FeatureVocab vocab, TagVocab tags, Rng& rng) {
  cfg.features.validate();
  if (!(cfg.window_drop >= 0.0 && cfg.window_drop < 1.0) ||
      !(cfg.hidden_drop >= 0.0 && cfg.hidden_drop < 1.0)) {
    throw ConfigError("dropout rates must be in [0,1)");
  }
  TaggerModel m;
  m.config = cfg;
  m.vocab = std::move(vocab);
  m.tags = std::move(tags);
  m.features = make_feature_params(cfg.features, m.vocab, rng);
  m.stack = make_stack_params(cfg.stack, cfg.features.window_length(), rng);
  const std::size_t width = 2 * cfg.stack.hidden;
  m.output_w = Parameter("output.W", gaussian_init(m.tags.size(), width, width, rng));
  m.output_b = Parameter("output.b", Matrix(m.tags.size(), 1));
  return m;
}

/// Builds vocabularies from the training corpus and initializes every weight.
inline TaggerModel build_model(const ModelConfig& cfg, const TaggedCorpus& train, Rng& rng) {
  FeatureVocab vocab;
  std::vector<std::string> tag_list;
  std::unordered_map<std::string, bool> seen;
  for (const auto& s : train.sentences)
    for (const auto& t : s) {
      vocab.add_token(t.token);
      if (seen.emplace(t.tag, true).second) tag_list.push_back(t.tag);
    }
  return make_model(cfg, std::move(vocab), TagVocab(tag_list), rng);
}

using EncodedSentence = std::vector<EncodedToken>;

inline EncodedSentence encode_sentence(const TaggerModel& m, const std::vector<std::string>& tokens) {
  EncodedSentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(encode_token(t, m.vocab, m.config.features));
  return out;
}

inline std::vector<std::string> sentence_tokens(const TaggedSentence& s) {
  std::vector<std::string> out;
  for (const auto& t : s) out.push_back(t.token);
  return out;
}

inline std::vector<std::uint32_t> gold_ids(const TaggerModel& m, const TaggedSentence& s) {
  std::vector<std::uint32_t> out;
  for (const auto& t : s) out.push_back(m.tags.id(t.tag));
  return out;
}

struct ForwardOptions {
  Mode mode = Mode::Test;
  Rng* rng = nullptr;
  std::optional<double> pinned_gate;
  bool straight_through = true;
};

/// Records the forward pass; returns one logit vector per token.
inline std::vector<Var> forward_logits(Tape& tape, const TaggerModel& m, const EncodedSentence& sentence,
                                       const ForwardOptions& opt = {}) {
  if (sentence.empty()) throw UsageError("forward: empty sentence");
  const std::size_t T = sentence.size();
  std::vector<Var> feats(T);
  for (std::size_t t = 0; t < T; ++t) feats[t] = token_feature(tape, m.features, sentence[t]);
  const Var pad = pad_feature(tape, m.features);
  const std::vector<Var> gates = window_gates(tape, m.features);
  std::vector<Var> inputs(T);
  for (std::size_t t = 0; t < T; ++t) {
    inputs[t] = window_input(tape, m.features, feats, pad, t, gates);
    inputs[t] = apply_dropout(tape, inputs[t], m.config.window_drop, opt.mode, opt.rng);
  }
  StackOptions so{.mode = opt.mode, .rng = opt.rng, .hidden_drop = m.config.hidden_drop,
                  .pinned_gate = opt.pinned_gate, .straight_through = opt.straight_through};
  const std::vector<Var> top = stack_forward(tape, m.stack, inputs, so);
  std::vector<Var> logits(T);
  for (std::size_t t = 0; t < T; ++t) logits[t] = tape.linear(m.output_w, {top[t]}, &m.output_b);
  return logits;
}

/// Mean token negative log-likelihood of the gold tags, as a scalar node.
inline Var sentence_loss(Tape& tape, const TaggerModel& m, const EncodedSentence& sentence,
                         std::span<const std::uint32_t> gold, const ForwardOptions& opt = {}) {
  if (gold.size() != sentence.size()) throw DataError("gold tag count does not match sentence length");
  const std::vector<Var> logits = forward_logits(tape, m, sentence, opt);
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) terms.push_back(tape.nll(logits[t], gold[t]));
  return tape.scale(tape.sum(terms), 1.0 / static_cast<double>(terms.size()));
}

/// The same loss as sentence_loss, with the log-softmax and mean taken in
/// extended precision. Finite differences of this are far less noisy.
/// `tape` is scratch space and is cleared.
inline long double precise_sentence_loss(Tape& tape, const TaggerModel& m, const EncodedSentence& sentence,
                                         std::span<const std::uint32_t> gold, const ForwardOptions& opt = {}) {
  if (gold.size() != sentence.size()) throw DataError("gold tag count does not match sentence length");
  tape.clear();
  const std::vector<Var> logits = forward_logits(tape, m, sentence, opt);
  long double total = 0.0L;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const auto h = tape.value(logits[t]);
    if (gold[t] >= h.size()) throw DataError("gold id " + std::to_string(gold[t]) + " out of range");
    const long double mx = *std::max_element(h.begin(), h.end());
    long double z = 0.0L;
    for (double v : h) z += std::exp(static_cast<long double>(v) - mx);
    total += mx + std::log(z) - static_cast<long double>(h[gold[t]]);
  }
  tape.clear();
  return total / static_cast<long double>(logits.size());
}

/// Per-token tag distributions.
inline std::vector<Vector> forward(const TaggerModel& m, const std::vector<std::string>& sentence,
                                   Mode mode, Rng& rng) {
  Tape tape;
  const auto logits = forward_logits(tape, m, encode_sentence(m, sentence), {.mode = mode, .rng = &rng});
  std::vector<Vector> probs;
  for (Var v : logits) probs.push_back(softmax(tape.vector(v)));
  return probs;
}

/// -(1/N) Σ log probs[t][gold[t]]
inline double nll_loss(std::span<const Vector> probs, std::span<const std::uint32_t> gold) {
  if (probs.size() != gold.size()) throw DataError("nll_loss: length mismatch");
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (gold[t] >= probs[t].size()) {
      throw DataError("nll_loss: gold id " + std::to_string(gold[t]) + " out of range");
    }
    total -= std::log(probs[t][gold[t]]);
  }
  return total / static_cast<double>(probs.size());
}

/// Index of the largest entry; ties go to the lowest index.
inline std::uint32_t argmax(std::span<const double> v) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<std::uint32_t> predict_ids(const TaggerModel& m, const EncodedSentence& sentence) {
  Tape tape;
  const auto logits = forward_logits(tape, m, sentence, {.mode = Mode::Test});
  std::vector<std::uint32_t> out;
  for (Var v : logits) out.push_back(argmax(tape.value(v)));
  return out;
}

inline std::vector<std::string> predict(const TaggerModel& m, const std::vector<std::string>& sentence) {
  std::vector<std::string> out;
  if (sentence.empty()) return out;
  for (auto id : predict_ids(m, encode_sentence(m, sentence))) out.push_back(m.tags.tag(id));
  return out;
}

template <class T>
double accuracy(std::span<const T> predicted, std::span<const T> gold) {
  if (predicted.size() != gold.size()) throw DataError("accuracy: length mismatch");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}
inline double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  return accuracy<std::string>(predicted, gold);
}

/// Worker count for read-only evaluation: SHORTCUT_STACK_THREADS if set, else
/// the hardware concurrency.
inline std::size_t evaluation_threads() {
  if (const char* env = std::getenv("SHORTCUT_STACK_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Token accuracy over a corpus. Gold tags unseen in training can never be
/// matched: the model's RARE prediction is not equal to any real tag.
inline double evaluate(const TaggerModel& m, const TaggedCorpus& corpus, std::size_t threads = 0) {
  if (corpus.token_count() == 0) return 0.0;
  if (threads == 0) threads = evaluation_threads();
  threads = std::min(threads, std::max<std::size_t>(1, corpus.size()));
  std::vector<std::size_t> hits(threads, 0);
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < corpus.size(); i += threads) {
      const auto& s = corpus.sentences[i];
      const auto pred = predict_ids(m, encode_sentence(m, sentence_tokens(s)));
      for (std::size_t t = 0; t < s.size(); ++t) hits[w] += pred[t] != m.tags.rare() && pred[t] == m.tags.id(s[t].tag);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(corpus.token_count());
}

}  // namespace shortcut
