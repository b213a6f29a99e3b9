#include <gtest/gtest.h>

#include <cmath>

#include "shortcut/model.hpp"
#include "shortcut/train.hpp"

using namespace shortcut;

namespace {

ModelConfig small_config(CellRule rule = CellRule::ShortcutBlock, std::size_t layers = 3) {
  ModelConfig cfg;
  cfg.features = FeatureDims{.word_dim = 4, .cap_dim = 2, .char_dim = 2, .chars_per_side = 2, .window = 3};
  cfg.stack.layers = layers;
  cfg.stack.hidden = 6;
  cfg.stack.rule = rule;
  cfg.window_drop = 0.25;
  cfg.hidden_drop = 0.5;
  return cfg;
}

TaggedCorpus small_corpus(std::size_t sentences = 12) {
  SyntheticSpec spec;
  spec.vocab = 8;
  spec.tags = 4;
  spec.min_len = 4;
  spec.max_len = 6;
  spec.distance = 2;
  spec.train_size = sentences;
  spec.dev_size = 1;
  spec.test_size = 1;
  return gen_synthetic(spec).train;
}

}  // namespace

TEST(TagVocab, RareIsLastAndCatchesUnknowns) {
  const TagVocab tags({"NN", "DT", "NN"});
  EXPECT_EQ(tags.size(), 3u);
  EXPECT_EQ(tags.rare(), 2u);
  EXPECT_EQ(tags.id("DT"), 1u);
  EXPECT_EQ(tags.id("VB"), tags.rare());
  EXPECT_EQ(tags.known(), (std::vector<std::string>{"NN", "DT"}));
  EXPECT_THROW(TagVocab({"<rare>"}), DataError);
}

TEST(Model, ProbabilitiesAreNormalized) {
  const TaggedCorpus c = small_corpus();
  Rng rng(1);
  const TaggerModel m = build_model(small_config(), c, rng);
  Rng masks(2);
  for (Mode mode : {Mode::Test, Mode::Train})
    for (const auto& probs : forward(m, sentence_tokens(c.sentences[0]), mode, masks)) {
      ASSERT_EQ(probs.size(), m.tags.size());
      double total = 0.0;
      for (double p : probs) {
        EXPECT_GT(p, 0.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Model, ZeroOutputWeightsGiveUniformAndLogKLoss) {
  const TaggedCorpus c = small_corpus();
  Rng rng(1);
  TaggerModel m = build_model(small_config(), c, rng);
  m.output_w.value.fill(0.0);
  const auto& s = c.sentences[0];
  Rng masks(1);
  const auto probs = forward(m, sentence_tokens(s), Mode::Test, masks);
  for (const auto& p : probs)
    for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(m.tags.size()));
  EXPECT_NEAR(nll_loss(probs, gold_ids(m, s)), std::log(static_cast<double>(m.tags.size())), 1e-12);
  for (auto id : predict_ids(m, encode_sentence(m, sentence_tokens(s)))) EXPECT_EQ(id, 0u);
}

TEST(Model, UniformLossOverFullTagSet) {
  const std::vector<Vector> probs(3, Vector(1286, 1.0 / 1286));
  const std::vector<std::uint32_t> gold{0, 17, 1285};
  EXPECT_NEAR(nll_loss(probs, gold), 7.159, 1e-3);
  EXPECT_NEAR(nll_loss(probs, gold), std::log(1286.0), 1e-12);
}

TEST(Model, ArgmaxTieBreaksLow) {
  const std::vector<double> v{0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(Model, LogitShiftLeavesPredictionsUnchanged) {
  const TaggedCorpus c = small_corpus();
  Rng rng(3);
  TaggerModel m = build_model(small_config(), c, rng);
  const EncodedSentence enc = encode_sentence(m, sentence_tokens(c.sentences[1]));
  const auto before = predict_ids(m, enc);
  for (double& b : m.output_b.value.span()) b += 12.5;
  EXPECT_EQ(predict_ids(m, enc), before);
}

TEST(Model, AccuracyCountsMatches) {
  EXPECT_DOUBLE_EQ(accuracy({"A", "B", "C", "D"}, {"A", "B", "C", "X"}), 0.75);
  EXPECT_THROW(accuracy({"A"}, {"A", "B"}), DataError);
}

TEST(Model, SmallGradientStepReducesLoss) {
  const TaggedCorpus c = small_corpus(40);
  ModelConfig cfg = small_config();
  cfg.window_drop = cfg.hidden_drop = 0.0;
  int decreased = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(100 + trial);
    TaggerModel m = build_model(cfg, c, rng);
    const auto& s = c.sentences[trial % c.size()];
    const EncodedSentence enc = encode_sentence(m, sentence_tokens(s));
    const auto gold = gold_ids(m, s);
    Tape tape;
    const Var loss = sentence_loss(tape, m, enc, gold);
    const double before = tape.scalar(loss);
    tape.backward(loss);
    apply_sgd(m, 1e-4);
    Tape after;
    decreased += after.scalar(sentence_loss(after, m, enc, gold)) < before;
  }
  EXPECT_GE(decreased, 95);
}

TEST(Model, TrainModeIsSeeded) {
  const TaggedCorpus c = small_corpus();
  Rng rng(4);
  const TaggerModel m = build_model(small_config(), c, rng);
  const auto toks = sentence_tokens(c.sentences[0]);
  Rng a(9), b(9), other(10);
  const auto pa = forward(m, toks, Mode::Train, a);
  EXPECT_EQ(pa, forward(m, toks, Mode::Train, b));
  EXPECT_NE(pa, forward(m, toks, Mode::Train, other));
}

TEST(Model, TestModeIgnoresRng) {
  const TaggedCorpus c = small_corpus();
  ModelConfig cfg = small_config();
  cfg.stack.gate = {GateKind::BernoulliFixed, 0.4};
  Rng rng(5);
  const TaggerModel m = build_model(cfg, c, rng);
  const auto toks = sentence_tokens(c.sentences[0]);
  Rng a(1), b(2);
  EXPECT_EQ(forward(m, toks, Mode::Test, a), forward(m, toks, Mode::Test, b));
}

TEST(Model, UnseenGoldTagsNeverCount) {
  TaggedCorpus train;
  train.sentences.push_back({{"a", "X"}, {"b", "Y"}});
  ModelConfig cfg = small_config();
  Rng rng(6);
  TaggerModel m = build_model(cfg, train, rng);
  // Force every prediction onto the RARE class.
  m.output_w.value.fill(0.0);
  m.output_b.value.fill(0.0);
  m.output_b.value(m.tags.rare(), 0) = 10.0;
  TaggedCorpus dev;
  dev.sentences.push_back({{"a", "Z"}, {"b", "<rare>"}});
  EXPECT_EQ(evaluate(m, dev, 1), 0.0);
  EXPECT_EQ(gold_ids(m, dev.sentences[0])[0], m.tags.rare());
}

TEST(Model, EvaluateIsThreadCountInvariant) {
  const TaggedCorpus c = small_corpus(20);
  Rng rng(7);
  const TaggerModel m = build_model(small_config(), c, rng);
  EXPECT_EQ(evaluate(m, c, 1), evaluate(m, c, 3));
}

TEST(Model, EmptySentence) {
  const TaggedCorpus c = small_corpus();
  Rng rng(8);
  const TaggerModel m = build_model(small_config(), c, rng);
  EXPECT_TRUE(predict(m, {}).empty());
  Tape tape;
  EXPECT_THROW(forward_logits(tape, m, {}), UsageError);
}

TEST(Model, PreciseLossAgreesWithTapeLoss) {
  const TaggedCorpus c = small_corpus();
  Rng rng(9);
  const TaggerModel m = build_model(small_config(), c, rng);
  const auto& s = c.sentences[0];
  const EncodedSentence enc = encode_sentence(m, sentence_tokens(s));
  Tape tape, scratch;
  const double plain = tape.scalar(sentence_loss(tape, m, enc, gold_ids(m, s)));
  EXPECT_NEAR(static_cast<double>(precise_sentence_loss(scratch, m, enc, gold_ids(m, s))), plain, 1e-12);
}
