#include <iostream>

#include <CLI11.hpp>

#include "shortcut/cli.hpp"

namespace {

template <class T, class Parse>
std::vector<T> parse_list(const std::vector<std::string>& names, Parse parse) {
  std::vector<T> out;
  for (const auto& n : names) out.push_back(parse(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace shortcut;
  CLI::App app{"Stacked bidirectional LSTM tagger with gated shortcut connections"};
  app.require_subcommand(1);

  CommonOptions common;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "Config file (key = value lines)");
    cmd->add_option("--seed", seed, "Override train.seed");
    cmd->add_option("--out", out_dir, "Override output.dir");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a tagger and write a checkpoint and epoch log");
  add_common(train_cmd);

  std::string checkpoint, data_path, input_path = "-";
  auto* eval_cmd = app.add_subcommand("eval", "Token accuracy of a checkpoint on a CoNLL file");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "Two-column CoNLL file")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Tag one sentence per input line");
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--input", input_path, "Input file, '-' for stdin");

  std::vector<std::string> rules, gates, topologies;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad_cmd->add_option("--config", common.config_path, "Accepted for uniformity; the check uses a built-in tiny model");
  grad_cmd->add_option("--rule", rules, "Restrict to these cell rules");
  grad_cmd->add_option("--gate", gates, "Restrict to these gate kinds");
  grad_cmd->add_option("--topology", topologies, "Restrict to these topologies");

  std::string axis;
  std::size_t seeds = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one model per value of an axis and tabulate accuracy");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "topology | gate | rule | depth")->required();
  sweep_cmd->add_option("--seeds", seeds, "Average over this many training seeds");

  auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic task as CoNLL files");
  add_common(gen_cmd);

  auto* init_cmd = app.add_subcommand("init-config", "Print the effective configuration");
  add_common(init_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (auto* cmd : {train_cmd, sweep_cmd, gen_cmd, init_cmd}) {
    if (cmd->count("--seed")) common.seed = seed;
    if (cmd->count("--out")) common.out_dir = out_dir;
  }

  if (*train_cmd) return cmd_train(common, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(checkpoint, data_path, std::cout, std::cerr);
  if (*predict_cmd) {
    if (input_path == "-") return cmd_predict(checkpoint, std::cin, std::cout, std::cerr);
    std::ifstream in(input_path);
    if (!in) {
      std::cerr << "cannot open " << input_path << "\n";
      return kExitFailure;
    }
    return cmd_predict(checkpoint, in, std::cout, std::cerr);
  }
  if (*grad_cmd) {
    GradCheckRequest req;
    const int code = guarded(std::cerr, [&] {
      req.rules = parse_list<CellRule>(rules, parse_cell_rule);
      req.gates = parse_list<GateKind>(gates, parse_gate_kind);
      req.topologies = parse_list<Topology>(topologies, parse_topology);
      if (!common.config_path.empty()) load_config(common.config_path);
      return kExitOk;
    });
    if (code != kExitOk) return code;
    return cmd_gradcheck(req, std::cout, std::cerr);
  }
  if (*sweep_cmd) return cmd_sweep(common, axis, seeds, std::cout, std::cerr);
  if (*gen_cmd) return cmd_gen_data(common, std::cout, std::cerr);
  if (*init_cmd) return cmd_init_config(common, std::cout, std::cerr);
  return kExitUsage;
}
