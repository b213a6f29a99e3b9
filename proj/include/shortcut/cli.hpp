#pragma once

// Command implementations behind the `shortcut` executable. Each command
// writes to the given streams and returns a process exit code:
// 0 ok, 1 check/accuracy/data/checkpoint failure, 2 usage or config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/checkpoint.hpp"
#include "shortcut/config.hpp"
#include "shortcut/data.hpp"
#include "shortcut/gradcheck.hpp"
#include "shortcut/model.hpp"
#include "shortcut/train.hpp"

namespace shortcut {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Runs `fn`, mapping exceptions to exit codes and messages on `err`.
inline int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// Defaults, then the config file, then command-line overrides.
inline RunConfig resolve_config(const CommonOptions& opt) {
  RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  if (opt.out_dir) cfg.output_dir = *opt.out_dir;
  validate(cfg);
  return cfg;
}

struct Datasets {
  TaggedCorpus train, dev, test;
};

inline Datasets load_datasets(const RunConfig& cfg) {
  if (cfg.data.synthetic) {
    SyntheticTask task = gen_synthetic(cfg.synthetic);
    return {std::move(task.train), std::move(task.dev), std::move(task.test)};
  }
  if (cfg.data.train.empty()) throw ConfigError("data.train is not set (or set data.synthetic = true)");
  if (cfg.data.dev.empty()) throw ConfigError("data.dev is not set");
  Datasets d;
  d.train = load_conll(cfg.data.train);
  d.dev = load_conll(cfg.data.dev);
  if (!cfg.data.test.empty()) d.test = load_conll(cfg.data.test);
  return d;
}

inline std::string format_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct TrainOutcome {
  TrainResult result;
  double dev_acc = 0.0;
  std::optional<double> test_acc;
};

/// Builds a model for `cfg`, trains it and scores the best-dev weights.
inline TrainOutcome train_and_score(const RunConfig& cfg, const Datasets& data, const EpochCallback& on_epoch = {},
                                    std::ostream* log = nullptr) {
  Rng rng(cfg.train.seed);
  TaggerModel model = build_model(cfg.model_config(), data.train, rng);
  if (!cfg.data.embeddings.empty()) {
    const std::size_t n = load_pretrained_embeddings(cfg.data.embeddings, model.vocab.words, model.features.words);
    if (log) *log << "loaded " << n << " pretrained embeddings\n";
  }
  TrainOutcome out{train(model, data.train, data.dev, cfg.train, on_epoch)};
  out.dev_acc = evaluate(out.result.best, data.dev);
  if (!data.test.empty()) out.test_acc = evaluate(out.result.best, data.test);
  return out;
}

/// Writes <out>/model.ckpt, <out>/epochs.csv and <out>/config.txt.
inline int cmd_train(const CommonOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opt);
    const Datasets data = load_datasets(cfg);
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);

    std::ofstream csv(dir / "epochs.csv");
    if (!csv) throw DataError("cannot write " + (dir / "epochs.csv").string());
    csv << "epoch,train_loss,dev_acc,lr\n";
    auto on_epoch = [&](const EpochLog& e, const TaggerModel&) {
      const std::string line = format_epoch_log(e);
      csv << line << "\n" << std::flush;
      out << "epoch " << line << "\n" << std::flush;
      return true;
    };
    const TrainOutcome res = train_and_score(cfg, data, on_epoch, &out);

    save_checkpoint(res.result.best, (dir / "model.ckpt").string());
    std::ofstream(dir / "config.txt") << dump_config(cfg);
    out << "best_epoch " << res.result.state.best_epoch << "\n";
    out << "dev_accuracy " << format_accuracy(res.dev_acc) << "\n";
    if (res.test_acc) out << "test_accuracy " << format_accuracy(*res.test_acc) << "\n";
    out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
    return kExitOk;
  });
}

inline int cmd_eval(const std::string& checkpoint, const std::string& data_path, std::ostream& out,
                    std::ostream& err) {
  return guarded(err, [&] {
    if (checkpoint.empty()) throw UsageError("eval needs --checkpoint");
    if (data_path.empty()) throw UsageError("eval needs --data");
    const TaggerModel m = load_checkpoint(checkpoint);
    const TaggedCorpus corpus = load_conll(data_path);
    out << "accuracy " << format_accuracy(evaluate(m, corpus)) << "\n";
    return kExitOk;
  });
}

/// Tags one whitespace-separated sentence per input line. Each tagged
/// sentence is written as "token tag" lines followed by a blank line; empty
/// input lines produce no output.
inline int cmd_predict(const std::string& checkpoint, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (checkpoint.empty()) throw UsageError("predict needs --checkpoint");
    const TaggerModel m = load_checkpoint(checkpoint);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      for (std::string tok; ss >> tok;) tokens.push_back(tok);
      if (tokens.empty()) continue;
      const std::vector<std::string> tags = predict(m, tokens);
      for (std::size_t i = 0; i < tokens.size(); ++i) out << tokens[i] << " " << tags[i] << "\n";
      out << "\n";
    }
    return kExitOk;
  });
}

struct GradCheckRequest {
  std::vector<CellRule> rules;  // empty = all
  std::vector<GateKind> gates;
  std::vector<Topology> topologies;
  double tolerance = 1e-4;
  GradCheckSetup setup;
  /// Negative controls: tamper with the analytic gradients after backward.
  std::function<void(TaggerModel&)> after_backward;
};

inline int cmd_gradcheck(const GradCheckRequest& req, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto keep = [](const auto& filter, auto v) {
      return filter.empty() || std::find(filter.begin(), filter.end(), v) != filter.end();
    };
    std::vector<std::string> failed;
    double worst = 0.0;
    std::string worst_label;
    std::size_t checked = 0;
    for (const GradCheckCase& k : all_gradcheck_cases()) {
      if (!keep(req.rules, k.rule) || !keep(req.gates, k.gate) || !keep(req.topologies, k.topology)) continue;
      const GradCheckOutcome o = check_gradients(k, req.setup, req.after_backward);
      const bool ok = o.max_error() <= req.tolerance;
      char line[256];
      std::snprintf(line, sizeof line, "%-24s %-19s %-3s %.3e %s", std::string(to_string(k.rule)).c_str(),
                    std::string(to_string(k.gate)).c_str(), std::string(to_string(k.topology)).c_str(),
                    o.max_error(), ok ? "ok" : ("FAIL " + o.worst_parameter).c_str());
      out << line << "\n" << std::flush;
      ++checked;
      if (o.max_error() >= worst) {
        worst = o.max_error();
        worst_label = k.label();
      }
      if (!ok) failed.push_back(k.label());
    }
    out << "checked " << checked << " combinations, worst " << std::scientific << std::setprecision(3) << worst
        << std::defaultfloat << " (" << worst_label << ")\n";
    if (!failed.empty()) {
      err << "gradient check failed (tolerance " << req.tolerance << ") for:";
      for (const auto& f : failed) err << " " << f;
      err << "\n";
      return kExitFailure;
    }
    return kExitOk;
  });
}

enum class SweepAxis { Topology, Gate, Rule, Depth };

inline SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "topology") return SweepAxis::Topology;
  if (s == "gate") return SweepAxis::Gate;
  if (s == "rule") return SweepAxis::Rule;
  if (s == "depth") return SweepAxis::Depth;
  throw UsageError("unknown sweep axis '" + std::string(s) + "' (expected topology|gate|rule|depth)");
}

/// One labelled config per value of the axis.
inline std::vector<std::pair<std::string, RunConfig>> sweep_rows(const RunConfig& base, SweepAxis axis) {
  std::vector<std::pair<std::string, RunConfig>> rows;
  auto add = [&](std::string label, auto&& edit) {
    RunConfig c = base;
    edit(c);
    rows.emplace_back(std::move(label), std::move(c));
  };
  switch (axis) {
    case SweepAxis::Topology:
      for (Topology t : kAllTopologies) add(std::string(to_string(t)), [&](RunConfig& c) { c.stack.topology = t; });
      break;
    case SweepAxis::Gate:
      for (GateKind g : kAllGateKinds) add(std::string(to_string(g)), [&](RunConfig& c) { c.stack.gate.kind = g; });
      break;
    case SweepAxis::Rule:
      for (CellRule r : kAllCellRules) add(std::string(to_string(r)), [&](RunConfig& c) { c.stack.rule = r; });
      break;
    case SweepAxis::Depth:
      for (std::size_t d : base.sweep_depths)
        add(std::to_string(d) + " layers", [&](RunConfig& c) { c.stack.layers = d; });
      break;
  }
  return rows;
}

struct SweepRow {
  std::string label;
  double dev_acc = 0.0;
  std::optional<double> test_acc;
};

/// Renders rows as a column-aligned text table.
inline std::string format_sweep_table(const std::string& axis, const std::vector<SweepRow>& rows) {
  std::size_t width = axis.size();
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << axis << "  " << std::right << std::setw(8) << "dev"
     << "  " << std::setw(8) << "test" << "\n";
  os << std::string(width + 20, '-') << "\n";
  auto percent = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::right << std::setw(8)
       << percent(r.dev_acc) << "  " << std::setw(8) << (r.test_acc ? percent(*r.test_acc) : "-") << "\n";
  }
  return os.str();
}

/// Trains one model per axis value; with seeds > 1 accuracies are averaged
/// over consecutive training seeds starting at train.seed.
inline int cmd_sweep(const CommonOptions& opt, const std::string& axis_name, std::size_t seeds, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    const SweepAxis axis = parse_sweep_axis(axis_name);
    if (seeds < 1) throw UsageError("--seeds must be >= 1");
    const RunConfig base = resolve_config(opt);
    const Datasets data = load_datasets(base);
    std::vector<SweepRow> rows;
    for (auto& [label, cfg] : sweep_rows(base, axis)) {
      validate(cfg);
      SweepRow row{label};
      double test_total = 0.0;
      for (std::size_t s = 0; s < seeds; ++s) {
        RunConfig run = cfg;
        run.train.seed = cfg.train.seed + s;
        const TrainOutcome res = train_and_score(run, data);
        row.dev_acc += res.dev_acc / static_cast<double>(seeds);
        if (res.test_acc) test_total += *res.test_acc / static_cast<double>(seeds);
      }
      if (!data.test.empty()) row.test_acc = test_total;
      err << "finished " << label << "\n" << std::flush;
      rows.push_back(row);
    }
    out << format_sweep_table(axis_name, rows);
    return kExitOk;
  });
}

/// Writes train.conll, dev.conll and test.conll for the configured synthetic task.
inline int cmd_gen_data(const CommonOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(opt);
    const SyntheticTask task = gen_synthetic(cfg.synthetic);
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    save_conll((dir / "train.conll").string(), task.train);
    save_conll((dir / "dev.conll").string(), task.dev);
    save_conll((dir / "test.conll").string(), task.test);
    out << "wrote " << task.train.size() << "/" << task.dev.size() << "/" << task.test.size()
        << " sentences to " << dir.string() << "\n";
    return kExitOk;
  });
}

/// Prints the effective config (defaults plus any file and overrides).
inline int cmd_init_config(const CommonOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    out << dump_config(resolve_config(opt));
    return kExitOk;
  });
}

}  // namespace shortcut
