#include <gtest/gtest.h>

#include <sstream>

#include "shortcut/config.hpp"

using namespace shortcut;

TEST(Config, DefaultsMatchReferenceSetup) {
  const RunConfig c;
  EXPECT_EQ(c.features.window, 3u);
  EXPECT_EQ(c.stack.hidden, 465u);
  EXPECT_EQ(c.stack.layers, 9u);
  EXPECT_EQ(c.stack.topology, Topology::T2);
  EXPECT_EQ(c.stack.rule, CellRule::ShortcutBlock);
  EXPECT_EQ(c.stack.gate.kind, GateKind::NonlinearPrev);
  EXPECT_EQ(c.train.lr0, 0.02);
  EXPECT_EQ(c.train.window_drop, 0.25);
  EXPECT_EQ(c.train.hidden_drop, 0.5);
  EXPECT_EQ(c.train.lr_halt, 0.0005);
}

TEST(Config, ParsesKeysCommentsAndBlanks) {
  std::istringstream in(
      "# experiment\n"
      "stack.layers = 7\n"
      "\n"
      "stack.rule=Case1Highway   # trailing comment\n"
      "stack.gate = BernoulliFixed\n"
      "stack.gate_p = 0.3\n"
      "train.shuffle = false\n"
      "sweep.depths = 3, 5\n");
  const RunConfig c = parse_config(in);
  EXPECT_EQ(c.stack.layers, 7u);
  EXPECT_EQ(c.stack.rule, CellRule::Case1Highway);
  EXPECT_EQ(c.stack.gate.kind, GateKind::BernoulliFixed);
  EXPECT_EQ(c.stack.gate.p, 0.3);
  EXPECT_FALSE(c.train.shuffle);
  EXPECT_EQ(c.sweep_depths, (std::vector<std::size_t>{3, 5}));
}

TEST(Config, DumpParseRoundTrip) {
  RunConfig c;
  c.stack.topology = Topology::T5;
  c.train.lr0 = 0.1 / 3;
  c.train.seed = 123456789012345ULL;
  c.data.train = "corpus/train.conll";
  c.data.synthetic = true;
  c.synthetic.distance = 4;
  std::istringstream in(dump_config(c));
  const RunConfig back = parse_config(in);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.train.lr0, c.train.lr0);
  EXPECT_EQ(dump_config(back), dump_config(c));
}

TEST(Config, EveryKeyRoundTripsThroughGetSet) {
  const RunConfig c;
  for (const auto& key : config_keys()) {
    RunConfig d;
    set_config_value(d, key, get_config_value(c, key));
    EXPECT_EQ(get_config_value(d, key), get_config_value(c, key)) << key;
  }
}

TEST(Config, UnknownKeyIsRejectedWithLocation) {
  std::istringstream in("stack.layers = 3\nstack.depth = 4\n");
  try {
    parse_config(in, "run.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("stack.depth"), std::string::npos) << msg;
  }
}

TEST(Config, BadValuesAreRejected) {
  for (const char* text : {"stack.layers = many\n", "stack.layers = 3x\n", "stack.topology = T7\n",
                           "train.shuffle = maybe\n", "features.window = 4\n", "train.lr0 = 0.0001\n",
                           "train.window_drop = 1\n", "stack.gate_p = 2\nstack.gate = BernoulliFixed\n",
                           "no equals sign\n", "sweep.depths =\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(in), ConfigError) << text;
  }
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError); }

TEST(Config, ModelConfigTransfersDropout) {
  RunConfig c;
  c.train.window_drop = 0.1;
  c.train.hidden_drop = 0.2;
  const ModelConfig m = c.model_config();
  EXPECT_EQ(m.window_drop, 0.1);
  EXPECT_EQ(m.hidden_drop, 0.2);
  RunConfig d;
  d.set_model_config(m);
  EXPECT_EQ(d.train.window_drop, 0.1);
  EXPECT_TRUE(is_model_key("stack.hidden"));
  EXPECT_FALSE(is_model_key("train.lr0"));
}
