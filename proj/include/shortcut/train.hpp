#pragma once

// Online SGD: one update per training sequence, dev evaluation once per
// epoch, learning rate halved when the dev error stops moving.

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "shortcut/dropout.hpp"
#include "shortcut/model.hpp"

namespace shortcut {

struct TrainConfig {
  double lr0 = 0.02;
  double lr_halt = 0.0005;
  double improve_thresh = 0.005;
  double window_drop = 0.25;
  double hidden_drop = 0.5;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const {
    if (!(window_drop >= 0.0 && window_drop < 1.0)) throw ConfigError("train.window_drop must be in [0,1)");
    if (!(hidden_drop >= 0.0 && hidden_drop < 1.0)) throw ConfigError("train.hidden_drop must be in [0,1)");
    if (!(lr_halt > 0.0) || !(lr0 > lr_halt)) throw ConfigError("need train.lr0 > train.lr_halt > 0");
    if (!(improve_thresh >= 0.0)) throw ConfigError("train.improve_thresh must be >= 0");
  }
};

/// Halves `lr` when |e_p - e_c| / e_p <= thresh and lr >= floor. A zero
/// previous error leaves lr unchanged.
inline double lr_step(double prev_error, double cur_error, double lr, double thresh = 0.005,
                      double floor = 0.0005) {
  if (prev_error <= 0.0) return lr;
  const double ratio = std::abs(prev_error - cur_error) / prev_error;
  if (ratio <= thresh && lr >= floor) return lr * 0.5;
  return lr;
}

/// theta <- theta - lr * grad for every parameter, then zero the gradients.
/// Throws NumericError (leaving the weights untouched) if any gradient is non-finite.
inline void apply_sgd(TaggerModel& model, double lr) {
  model.for_each_parameter([&](Parameter& p) {
    if (p.sparse_rows) {
      for (auto r : p.touched_rows)
        if (!all_finite(p.grad.row(r))) throw NumericError("non-finite gradient in " + p.name);
    } else if (!all_finite(p.grad.span())) {
      throw NumericError("non-finite gradient in " + p.name);
    }
  });
  model.for_each_parameter([&](Parameter& p) {
    if (p.sparse_rows) {
      for (auto r : p.touched_rows) {
        auto v = p.value.row(r);
        auto g = p.grad.row(r);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - lr * g[i];
      }
    } else {
      double* v = p.value.data();
      const double* g = p.grad.data();
      for (std::size_t i = 0; i < p.value.size(); ++i) v[i] = v[i] - lr * g[i];
    }
    p.zero_grad();
  });
}

inline void zero_grads(TaggerModel& model) {
  model.for_each_parameter([](Parameter& p) { p.zero_grad(); });
}

/// One train-mode forward with fresh dropout and gate samples, one backward,
/// one SGD step. Returns the loss before the update.
inline double sgd_sequence_update(TaggerModel& model, const EncodedSentence& sentence,
                                  std::span<const std::uint32_t> gold, double lr, Rng& rng) {
  Tape tape;
  const Var loss = sentence_loss(tape, model, sentence, gold, {.mode = Mode::Train, .rng = &rng});
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) {
    zero_grads(model);
    throw NumericError("non-finite loss (" + std::to_string(value) + ")");
  }
  tape.backward(loss);
  try {
    apply_sgd(model, lr);
  } catch (const NumericError&) {
    zero_grads(model);
    throw;
  }
  return value;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_acc = 0.0;
  double lr = 0.0;  // rate used during this epoch
};

inline std::string format_epoch_log(const EpochLog& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.8g", e.epoch, e.train_loss, e.dev_acc, e.lr);
  return buf;
}

struct TrainState {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::vector<double> dev_errors;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_acc = 0.0;
};

struct TrainResult {
  TrainState state;
  TaggerModel best;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochLog&, const TaggerModel&)>;

/// Trains `model` in place and also returns a copy of the best-dev weights.
/// The dropout rates in `cfg` are written into the model config first.
inline TrainResult train(TaggerModel& model, const TaggedCorpus& train_set, const TaggedCorpus& dev_set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (dev_set.empty()) throw DataError("dev set is empty");
  model.config.window_drop = cfg.window_drop;
  model.config.hidden_drop = cfg.hidden_drop;
  zero_grads(model);

  std::vector<EncodedSentence> inputs;
  std::vector<std::vector<std::uint32_t>> golds;
  for (const auto& s : train_set.sentences) {
    inputs.push_back(encode_sentence(model, sentence_tokens(s)));
    golds.push_back(gold_ids(model, s));
  }

  Rng rng(cfg.seed);
  TrainResult result{TrainState{}, model};
  TrainState& st = result.state;
  st.lr = cfg.lr0;
  st.best_dev_acc = evaluate(model, dev_set);

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (st.lr < cfg.lr_halt) break;
    if (cfg.shuffle) rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t idx : order) total += sgd_sequence_update(model, inputs[idx], golds[idx], st.lr, rng);

    EpochLog entry{epoch, total / static_cast<double>(order.size()), evaluate(model, dev_set), st.lr};
    st.epoch = epoch;
    st.log.push_back(entry);
    const double err = 1.0 - entry.dev_acc;
    if (entry.dev_acc > st.best_dev_acc) {
      st.best_dev_acc = entry.dev_acc;
      st.best_epoch = epoch;
      result.best = model;
    }
    if (!st.dev_errors.empty()) {
      st.lr = lr_step(st.dev_errors.back(), err, st.lr, cfg.improve_thresh, cfg.lr_halt);
    }
    st.dev_errors.push_back(err);
    if (on_epoch && !on_epoch(entry, model)) break;
  }
  return result;
}

}  // namespace shortcut
