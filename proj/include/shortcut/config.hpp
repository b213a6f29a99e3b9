#pragma once

// Flat "key = value" run configuration. Keys are dotted by module
// (stack.topology = T2); '#' starts a comment; unknown keys are rejected.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/data.hpp"
#include "shortcut/model.hpp"
#include "shortcut/train.hpp"

namespace shortcut {

struct DataPaths {
  bool synthetic = false;
  std::string train;
  std::string dev;
  std::string test;
  std::string embeddings;
  bool operator==(const DataPaths&) const = default;
};

struct RunConfig {
  FeatureDims features;
  StackConfig stack;
  TrainConfig train;
  SyntheticSpec synthetic;
  DataPaths data;
  std::string output_dir = "out";
  std::vector<std::size_t> sweep_depths = {7, 9, 11, 13};

  ModelConfig model_config() const {
    return ModelConfig{features, stack, train.window_drop, train.hidden_drop};
  }
  void set_model_config(const ModelConfig& m) {
    features = m.features;
    stack = m.stack;
    train.window_drop = m.window_drop;
    train.hidden_drop = m.hidden_drop;
  }
};

namespace config_detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SHORTCUT_SIZE_KEY(NAME, FIELD)                                                  \
  Key { NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },              \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<std::size_t>(NAME, v); } }
#define SHORTCUT_DOUBLE_KEY(NAME, FIELD)                                                \
  Key { NAME, [](const RunConfig& c) { return fmt_double(c.FIELD); },                  \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<double>(NAME, v); } }
#define SHORTCUT_STRING_KEY(NAME, FIELD)                                                \
  Key { NAME, [](const RunConfig& c) { return c.FIELD; },                              \
        [](RunConfig& c, const std::string& v) { c.FIELD = v; } }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      SHORTCUT_SIZE_KEY("stack.layers", stack.layers),
      SHORTCUT_SIZE_KEY("stack.hidden", stack.hidden),
      Key{"stack.topology", [](const RunConfig& c) { return std::string(to_string(c.stack.topology)); },
          [](RunConfig& c, const std::string& v) { c.stack.topology = parse_topology(v); }},
      Key{"stack.rule", [](const RunConfig& c) { return std::string(to_string(c.stack.rule)); },
          [](RunConfig& c, const std::string& v) { c.stack.rule = parse_cell_rule(v); }},
      Key{"stack.gate", [](const RunConfig& c) { return std::string(to_string(c.stack.gate.kind)); },
          [](RunConfig& c, const std::string& v) { c.stack.gate.kind = parse_gate_kind(v); }},
      SHORTCUT_DOUBLE_KEY("stack.gate_p", stack.gate.p),
      Key{"stack.combine", [](const RunConfig& c) { return std::string(to_string(c.stack.combine)); },
          [](RunConfig& c, const std::string& v) { c.stack.combine = parse_combine(v); }},
      SHORTCUT_SIZE_KEY("features.window", features.window),
      SHORTCUT_SIZE_KEY("features.word_dim", features.word_dim),
      SHORTCUT_SIZE_KEY("features.cap_dim", features.cap_dim),
      SHORTCUT_SIZE_KEY("features.char_dim", features.char_dim),
      SHORTCUT_SIZE_KEY("features.chars_per_side", features.chars_per_side),
      SHORTCUT_DOUBLE_KEY("train.lr0", train.lr0),
      SHORTCUT_DOUBLE_KEY("train.lr_halt", train.lr_halt),
      SHORTCUT_DOUBLE_KEY("train.improve_thresh", train.improve_thresh),
      SHORTCUT_DOUBLE_KEY("train.window_drop", train.window_drop),
      SHORTCUT_DOUBLE_KEY("train.hidden_drop", train.hidden_drop),
      SHORTCUT_SIZE_KEY("train.max_epochs", train.max_epochs),
      Key{"train.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
          [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("train.seed", v); }},
      Key{"train.shuffle", [](const RunConfig& c) { return std::string(c.train.shuffle ? "true" : "false"); },
          [](RunConfig& c, const std::string& v) { c.train.shuffle = parse_bool("train.shuffle", v); }},
      Key{"data.synthetic", [](const RunConfig& c) { return std::string(c.data.synthetic ? "true" : "false"); },
          [](RunConfig& c, const std::string& v) { c.data.synthetic = parse_bool("data.synthetic", v); }},
      SHORTCUT_STRING_KEY("data.train", data.train),
      SHORTCUT_STRING_KEY("data.dev", data.dev),
      SHORTCUT_STRING_KEY("data.test", data.test),
      SHORTCUT_STRING_KEY("data.embeddings", data.embeddings),
      SHORTCUT_SIZE_KEY("synthetic.vocab", synthetic.vocab),
      SHORTCUT_SIZE_KEY("synthetic.tags", synthetic.tags),
      SHORTCUT_SIZE_KEY("synthetic.min_len", synthetic.min_len),
      SHORTCUT_SIZE_KEY("synthetic.max_len", synthetic.max_len),
      SHORTCUT_SIZE_KEY("synthetic.distance", synthetic.distance),
      SHORTCUT_SIZE_KEY("synthetic.train_size", synthetic.train_size),
      SHORTCUT_SIZE_KEY("synthetic.dev_size", synthetic.dev_size),
      SHORTCUT_SIZE_KEY("synthetic.test_size", synthetic.test_size),
      Key{"synthetic.seed", [](const RunConfig& c) { return std::to_string(c.synthetic.seed); },
          [](RunConfig& c, const std::string& v) {
            c.synthetic.seed = parse_number<std::uint64_t>("synthetic.seed", v);
          }},
      SHORTCUT_STRING_KEY("output.dir", output_dir),
      Key{"sweep.depths",
          [](const RunConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.sweep_depths.size(); ++i)
              s += (i ? "," : "") + std::to_string(c.sweep_depths[i]);
            return s;
          },
          [](RunConfig& c, const std::string& v) {
            c.sweep_depths.clear();
            std::stringstream ss(v);
            for (std::string item; std::getline(ss, item, ',');)
              c.sweep_depths.push_back(parse_number<std::size_t>("sweep.depths", trim(item)));
            if (c.sweep_depths.empty()) throw ConfigError("sweep.depths: empty list");
          }},
  };
  return table;
}

#undef SHORTCUT_SIZE_KEY
#undef SHORTCUT_DOUBLE_KEY
#undef SHORTCUT_STRING_KEY

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : config_detail::keys()) out.emplace_back(k.name);
  return out;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_detail::keys()) {
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  for (const auto& k : config_detail::keys())
    if (key == k.name) return k.get(cfg);
  throw ConfigError("unknown config key '" + key + "'");
}

/// Checks cross-field constraints of every section.
inline void validate(const RunConfig& cfg) {
  cfg.features.validate();
  cfg.train.validate();
  cfg.stack.gate.validate();
  if (cfg.stack.layers < 1) throw ConfigError("stack.layers must be >= 1");
  if (cfg.stack.hidden < 1) throw ConfigError("stack.hidden must be >= 1");
  if (cfg.data.synthetic) cfg.synthetic.validate();
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : config_detail::keys()) {
    const std::string name = k.name;
    const std::string sec = name.substr(0, name.find('.'));
    if (sec != section) {
      if (!section.empty()) out += "\n";
      section = sec;
    }
    out += name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

/// Keys that define a model's architecture; stored in checkpoints.
inline bool is_model_key(const std::string& key) {
  return key.rfind("stack.", 0) == 0 || key.rfind("features.", 0) == 0 ||
         key == "train.window_drop" || key == "train.hidden_drop";
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return dump_config(a) == dump_config(b); }

}  // namespace shortcut
