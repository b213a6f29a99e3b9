#pragma once

// Checkpoint layout:
//
//   format <version>
//   config <count>        followed by <count> "key = value" lines
//   words <count>         one token per line
//   chars <count>         one hex-encoded character token per line
//   tags <count>          training tags in id order (RARE excluded)
//   params <count>        "<name> <rows> <cols>" per parameter
//   data
//   <raw little-endian float64 arrays, in header order>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/config.hpp"
#include "shortcut/model.hpp"

namespace shortcut {

inline constexpr int kCheckpointVersion = 1;

namespace checkpoint_detail {

inline std::string hex_encode(const std::string& s) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 15]);
  }
  return out;
}

inline std::string hex_decode(const std::string& s) {
  if (s.size() % 2 != 0) throw CheckpointError("chars: odd-length hex entry '" + s + "'");
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw CheckpointError("chars: bad hex entry '" + s + "'");
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); i += 2)
    out.push_back(static_cast<char>(nibble(s[i]) * 16 + nibble(s[i + 1])));
  return out;
}

inline void write_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

class HeaderReader {
 public:
  explicit HeaderReader(std::istream& in) : in_(in) {}

  std::string line(const std::string& what) {
    std::string s;
    if (!std::getline(in_, s)) throw CheckpointError("truncated checkpoint: missing " + what);
    ++lineno_;
    return s;
  }

  /// Reads "<keyword> <count>".
  std::size_t section(const std::string& keyword) {
    std::istringstream ss(line(keyword + " section"));
    std::string kw;
    long long count = -1;
    if (!(ss >> kw >> count) || kw != keyword || count < 0) {
      throw CheckpointError("line " + std::to_string(lineno_) + ": expected '" + keyword + " <count>'");
    }
    return static_cast<std::size_t>(count);
  }

  std::size_t lineno() const { return lineno_; }

 private:
  std::istream& in_;
  std::size_t lineno_ = 0;
};

}  // namespace checkpoint_detail

inline void save_checkpoint(const TaggerModel& m, std::ostream& out) {
  using namespace checkpoint_detail;
  RunConfig rc;
  rc.set_model_config(m.config);
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& key : config_keys())
    if (is_model_key(key)) entries.emplace_back(key, get_config_value(rc, key));

  out << "format " << kCheckpointVersion << "\n";
  out << "config " << entries.size() << "\n";
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  out << "words " << m.vocab.words.size() << "\n";
  for (const auto& w : m.vocab.words.tokens()) out << w << "\n";
  out << "chars " << m.vocab.chars.size() << "\n";
  for (const auto& c : m.vocab.chars.tokens()) out << hex_encode(c) << "\n";
  const auto known = m.tags.known();
  out << "tags " << known.size() << "\n";
  for (const auto& t : known) out << t << "\n";

  std::vector<const Parameter*> params;
  m.for_each_parameter([&](const Parameter& p) { params.push_back(&p); });
  out << "params " << params.size() << "\n";
  for (const Parameter* p : params) out << p->name << " " << p->value.rows() << " " << p->value.cols() << "\n";
  out << "data\n";
  for (const Parameter* p : params)
    for (double v : p->value.span()) write_double(out, v);
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline void save_checkpoint(const TaggerModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  save_checkpoint(m, out);
}

inline TaggerModel load_checkpoint(std::istream& in) {
  using namespace checkpoint_detail;
  HeaderReader rd(in);

  {
    std::istringstream ss(rd.line("format line"));
    std::string kw;
    int version = 0;
    if (!(ss >> kw >> version) || kw != "format") throw CheckpointError("not a checkpoint: missing 'format <version>'");
    if (version != kCheckpointVersion) {
      throw CheckpointError("format: unsupported version " + std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
  }

  RunConfig rc;
  const std::size_t n_config = rd.section("config");
  for (std::size_t i = 0; i < n_config; ++i) {
    const std::string line = rd.line("config entry");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("config: malformed entry '" + line + "'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    if (!is_model_key(key)) throw CheckpointError("config: unexpected key '" + key + "'");
    try {
      set_config_value(rc, key, config_detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("config: ") + e.what());
    }
  }

  std::vector<std::string> words(rd.section("words"));
  for (auto& w : words) w = rd.line("word entry");
  std::vector<std::string> chars(rd.section("chars"));
  for (auto& c : chars) c = hex_decode(rd.line("char entry"));
  std::vector<std::string> tags(rd.section("tags"));
  for (auto& t : tags) t = rd.line("tag entry");

  struct Shape {
    std::string name;
    std::size_t rows, cols;
  };
  std::vector<Shape> shapes(rd.section("params"));
  for (auto& s : shapes) {
    std::istringstream ss(rd.line("parameter entry"));
    if (!(ss >> s.name >> s.rows >> s.cols)) {
      throw CheckpointError("params: malformed entry at line " + std::to_string(rd.lineno()));
    }
  }
  if (rd.line("data marker") != "data") throw CheckpointError("missing 'data' marker");

  TaggerModel m;
  try {
    FeatureVocab vocab{Vocab::from_tokens(words), Vocab::from_tokens(chars)};
    Rng scratch(0);
    m = make_model(rc.model_config(), std::move(vocab), TagVocab(tags), scratch);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("config: ") + e.what());
  }

  std::vector<Parameter*> params = m.parameters();
  if (params.size() != shapes.size()) {
    throw CheckpointError("params: file lists " + std::to_string(shapes.size()) + " parameters, config implies " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    const Shape& s = shapes[i];
    if (s.name != p.name || s.rows != p.value.rows() || s.cols != p.value.cols()) {
      throw CheckpointError("params: entry " + std::to_string(i) + " is " + s.name + " " + std::to_string(s.rows) +
                            "x" + std::to_string(s.cols) + ", expected " + p.name + " " +
                            std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
  }
  for (Parameter* p : params) {
    for (double& v : p->value.span()) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw CheckpointError("truncated checkpoint: data for " + p->name + " is incomplete");
      }
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
      v = std::bit_cast<double>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after parameter data");
  return m;
}

inline TaggerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace shortcut
