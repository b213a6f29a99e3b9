#include <gtest/gtest.h>

#include <limits>

#include "shortcut/checkpoint.hpp"
#include "shortcut/train.hpp"

using namespace shortcut;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.features = FeatureDims{.word_dim = 4, .cap_dim = 2, .char_dim = 2, .chars_per_side = 2, .window = 3};
  cfg.stack.layers = 3;
  cfg.stack.hidden = 6;
  return cfg;
}

SyntheticTask tiny_task() {
  SyntheticSpec spec;
  spec.vocab = 8;
  spec.tags = 3;
  spec.min_len = 4;
  spec.max_len = 6;
  spec.distance = 1;
  spec.train_size = 16;
  spec.dev_size = 6;
  spec.test_size = 2;
  return gen_synthetic(spec);
}

}  // namespace

TEST(LrStep, HalvesOnPlateau) { EXPECT_EQ(lr_step(0.1, 0.0996, 0.02), 0.01); }

TEST(LrStep, KeepsRateWhileImproving) { EXPECT_EQ(lr_step(0.1, 0.08, 0.02), 0.02); }

TEST(LrStep, StopsHalvingBelowFloor) { EXPECT_EQ(lr_step(0.1, 0.0999, 0.0004), 0.0004); }

TEST(LrStep, BoundaryAndZeroError) {
  EXPECT_EQ(lr_step(0.1, 0.09951, 0.02), 0.01);
  EXPECT_EQ(lr_step(0.1, 0.1, 0.0005), 0.00025);
  EXPECT_EQ(lr_step(0.0, 0.0, 0.02), 0.02);
  EXPECT_EQ(lr_step(0.1, 0.1004, 0.02), 0.01);
}

TEST(LrStep, HalvingIsExact) {
  double lr = 0.02;
  for (int k = 1; k <= 5; ++k) {
    lr = lr_step(0.2, 0.2, lr);
    EXPECT_EQ(lr, 0.02 / static_cast<double>(1 << k));
  }
}

TEST(Sgd, UpdateIsExactlyMinusLrTimesGradient) {
  const SyntheticTask task = tiny_task();
  Rng rng(1);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  const auto& s = task.train.sentences[0];
  Tape tape;
  tape.backward(sentence_loss(tape, m, encode_sentence(m, sentence_tokens(s)), gold_ids(m, s)));
  std::vector<Matrix> before, grads;
  m.for_each_parameter([&](Parameter& p) {
    before.push_back(p.value);
    grads.push_back(p.grad);
  });
  const double lr = 0.037;
  apply_sgd(m, lr);
  std::size_t k = 0;
  m.for_each_parameter([&](Parameter& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(p.value.data()[i], before[k].data()[i] - lr * grads[k].data()[i]) << p.name;
      EXPECT_EQ(p.grad.data()[i], 0.0);
    }
    ++k;
  });
}

TEST(Sgd, ZeroRateLeavesWeights) {
  const SyntheticTask task = tiny_task();
  Rng rng(2);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  const TaggerModel copy = m;
  const auto& s = task.train.sentences[1];
  Rng masks(3);
  sgd_sequence_update(m, encode_sentence(m, sentence_tokens(s)), gold_ids(m, s), 0.0, masks);
  std::vector<Matrix> a, b;
  m.for_each_parameter([&](const Parameter& p) { a.push_back(p.value); });
  copy.for_each_parameter([&](const Parameter& p) { b.push_back(p.value); });
  EXPECT_EQ(a, b);
}

TEST(Sgd, NonFiniteLossIsNumericError) {
  const SyntheticTask task = tiny_task();
  Rng rng(3);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  m.output_b.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto& s = task.train.sentences[0];
  Rng masks(1);
  EXPECT_THROW(sgd_sequence_update(m, encode_sentence(m, sentence_tokens(s)), gold_ids(m, s), 0.1, masks),
               NumericError);
}

TEST(Dropout, ZeroRateKeepsEverything) {
  Rng rng(1);
  for (double v : dropout_mask(1000, 0.0, rng)) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(dropout_mask(3, 1.0, rng), ConfigError);
}

TEST(Dropout, KeepRateMatches) {
  Rng rng(2);
  const auto mask = dropout_mask(1000000, 0.25, rng);
  double mean = 0.0;
  for (double v : mask) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    mean += v / static_cast<double>(mask.size());
  }
  EXPECT_NEAR(mean, 0.75, 0.002);
}

TEST(Dropout, TestModeScales) {
  Tape tape;
  const Vector a{1.0, -2.0, 4.0};
  const auto out = tape.vector(apply_dropout(tape, tape.input(a), 0.25, Mode::Test, nullptr));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out[i], 0.75 * a[i]);
  EXPECT_THROW(apply_dropout(tape, tape.input(a), 0.25, Mode::Train, nullptr), UsageError);
}

TEST(Training, RepeatedExampleLossKeepsFalling) {
  const SyntheticTask task = tiny_task();
  Rng rng(4);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  m.config.window_drop = m.config.hidden_drop = 0.0;
  const auto& s = task.train.sentences[0];
  const EncodedSentence enc = encode_sentence(m, sentence_tokens(s));
  const auto gold = gold_ids(m, s);
  Rng masks(5);
  std::vector<double> losses;
  for (int k = 0; k < 200; ++k) losses.push_back(sgd_sequence_update(m, enc, gold, 0.02, masks));
  for (std::size_t k = 0; k + 50 < losses.size(); ++k) EXPECT_LT(losses[k + 50], losses[k]) << k;
}

TEST(Training, ZeroEpochsReturnsInitialModel) {
  const SyntheticTask task = tiny_task();
  Rng rng(5);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const TrainResult r = train(m, task.train, task.dev, cfg);
  EXPECT_TRUE(r.state.log.empty());
  EXPECT_EQ(r.state.best_epoch, 0u);
  EXPECT_EQ(r.best.output_w.value, m.output_w.value);
}

TEST(Training, RejectsEmptySetsAndBadConfig) {
  const SyntheticTask task = tiny_task();
  Rng rng(6);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  EXPECT_THROW(train(m, TaggedCorpus{}, task.dev, TrainConfig{}), DataError);
  EXPECT_THROW(train(m, task.train, TaggedCorpus{}, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.lr0 = bad.lr_halt / 2;
  EXPECT_THROW(train(m, task.train, task.dev, bad), ConfigError);
}

TEST(Training, SeededRunsAreBitwiseIdentical) {
  const SyntheticTask task = tiny_task();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 11;
  auto run = [&] {
    Rng rng(7);
    TaggerModel m = build_model(tiny_config(), task.train, rng);
    const TrainResult r = train(m, task.train, task.dev, cfg);
    std::ostringstream ckpt;
    save_checkpoint(r.best, ckpt);
    std::string log;
    for (const auto& e : r.state.log) log += format_epoch_log(e) + "\n";
    return std::make_pair(log, ckpt.str());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Training, CallbackCanStopEarlyAndLearningHappens) {
  const SyntheticTask task = tiny_task();
  Rng rng(8);
  TaggerModel m = build_model(tiny_config(), task.train, rng);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.lr_halt = 1e-12;
  cfg.window_drop = cfg.hidden_drop = 0.0;
  std::size_t calls = 0;
  const TrainResult r = train(m, task.train, task.dev, cfg, [&](const EpochLog& e, const TaggerModel&) {
    ++calls;
    EXPECT_EQ(e.epoch, calls);
    return calls < 25;
  });
  EXPECT_EQ(calls, 25u);
  EXPECT_EQ(r.state.log.size(), 25u);
  EXPECT_LT(r.state.log.back().train_loss, r.state.log.front().train_loss);
  EXPECT_GE(r.state.best_dev_acc, r.state.log.front().dev_acc);
}
