#include <gtest/gtest.h>

#include <sstream>

#include "shortcut/checkpoint.hpp"

using namespace shortcut;

namespace {

ModelConfig small_config(GateKind gate = GateKind::NonlinearPrev) {
  ModelConfig cfg;
  cfg.features = FeatureDims{.word_dim = 4, .cap_dim = 2, .char_dim = 2, .chars_per_side = 2, .window = 3};
  cfg.stack.layers = 4;
  cfg.stack.hidden = 5;
  cfg.stack.topology = Topology::T5;
  cfg.stack.gate = {gate, 0.5};
  return cfg;
}

TaggedCorpus corpus() {
  TaggedCorpus c;
  c.sentences.push_back({{"The", "DT"}, {"café", "NN"}, {"opened", "VBD"}, {"in", "IN"}, {"1999", "CD"}});
  c.sentences.push_back({{"Prices", "NNS"}, {"rose", "VBD"}, {".", "."}});
  return c;
}

std::string save(const TaggerModel& m) {
  std::ostringstream out;
  save_checkpoint(m, out);
  return out.str();
}

TaggerModel load(const std::string& bytes) {
  std::istringstream in(bytes);
  return load_checkpoint(in);
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (GateKind g : kAllGateKinds) {
    Rng rng(1);
    const TaggerModel m = build_model(small_config(g), corpus(), rng);
    const std::string a = save(m);
    EXPECT_EQ(save(load(a)), a) << to_string(g);
  }
}

TEST(Checkpoint, RoundTripPreservesOutputsBitwise) {
  Rng rng(2);
  const TaggerModel m = build_model(small_config(), corpus(), rng);
  const TaggerModel back = load(save(m));
  EXPECT_EQ(back.vocab.words, m.vocab.words);
  EXPECT_EQ(back.vocab.chars, m.vocab.chars);
  EXPECT_EQ(back.tags, m.tags);
  const std::vector<std::string> sentence{"The", "unseen", "Prices", "rose", "42"};
  Rng a(3), b(3);
  EXPECT_EQ(forward(back, sentence, Mode::Test, a), forward(m, sentence, Mode::Test, b));
  Rng c(4), d(4);
  EXPECT_EQ(forward(back, sentence, Mode::Train, c), forward(m, sentence, Mode::Train, d));
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  Rng rng(3);
  const std::string bytes = save(build_model(small_config(), corpus(), rng));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 100, bytes.size() / 2, std::size_t{10}}) {
    EXPECT_THROW(load(bytes.substr(0, cut)), CheckpointError) << cut;
  }
  EXPECT_THROW(load(bytes + "x"), CheckpointError);
  EXPECT_THROW(load(""), CheckpointError);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  Rng rng(4);
  const TaggerModel m = build_model(small_config(), corpus(), rng);
  std::string bytes = save(m);
  const std::string rows = std::to_string(m.tags.size());
  const std::string from = "output.W " + rows + " 10";
  const auto pos = bytes.find(from);
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, from.size(), "output.W " + rows + " 12");
  EXPECT_THROW(load(bytes), CheckpointError);
}

TEST(Checkpoint, ConfigMismatchIsRejected) {
  Rng rng(5);
  std::string bytes = save(build_model(small_config(), corpus(), rng));
  const std::string from = "stack.layers = 4";
  bytes.replace(bytes.find(from), from.size(), "stack.layers = 5");
  EXPECT_THROW(load(bytes), CheckpointError);
}

TEST(Checkpoint, WrongVersionIsRejected) {
  Rng rng(6);
  std::string bytes = save(build_model(small_config(), corpus(), rng));
  bytes.replace(0, 8, "format 9");
  EXPECT_THROW(load(bytes), CheckpointError);
}

TEST(Checkpoint, MissingFile) { EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError); }
