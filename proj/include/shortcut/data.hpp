#pragma once

#include <array>
#include <compare>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/linalg.hpp"

namespace shortcut {

struct TaggedToken {
  std::string token;
  std::string tag;
  auto operator<=>(const TaggedToken&) const = default;
};

using TaggedSentence = std::vector<TaggedToken>;

struct TaggedCorpus {
  std::vector<TaggedSentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }
  bool operator==(const TaggedCorpus&) const = default;
};

/// Two whitespace-separated columns per line, "token tag"; a blank line ends a
/// sentence. Lines with any other column count are rejected.
inline TaggedCorpus parse_conll(std::istream& in, const std::string& source = "<stream>") {
  TaggedCorpus corpus;
  TaggedSentence current;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(std::move(f));
    if (fields.empty()) {
      if (!current.empty()) corpus.sentences.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (fields.size() != 2) {
      throw DataError(source + ":" + std::to_string(lineno) + ": expected 2 columns (token tag), found " +
                      std::to_string(fields.size()));
    }
    current.push_back({std::move(fields[0]), std::move(fields[1])});
  }
  if (!current.empty()) corpus.sentences.push_back(std::move(current));
  return corpus;
}

inline TaggedCorpus load_conll(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  return parse_conll(in, path);
}

inline void write_conll(std::ostream& out, const TaggedCorpus& corpus) {
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s) out << t.token << ' ' << t.tag << '\n';
    out << '\n';
  }
}

inline void save_conll(const std::string& path, const TaggedCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path);
  write_conll(out, corpus);
}

/// Long-range synthetic tagging task. Tokens are drawn uniformly; the tag at
/// position t is rule[token(t)][token(t - distance)], where the second index
/// is `vocab` ("no token") when t < distance.
struct SyntheticSpec {
  std::size_t vocab = 20;
  std::size_t tags = 5;
  std::size_t min_len = 10;
  std::size_t max_len = 16;
  std::size_t distance = 8;
  std::size_t train_size = 200;
  std::size_t dev_size = 50;
  std::size_t test_size = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab < 1 || tags < 1) throw ConfigError("synthetic.vocab and synthetic.tags must be >= 1");
    if (min_len < 1 || min_len > max_len) throw ConfigError("synthetic lengths must satisfy 1 <= min_len <= max_len");
    if (distance >= min_len) throw ConfigError("synthetic.distance must be < synthetic.min_len");
    // Splits hold distinct sentences, so there must be enough of them.
    const std::size_t needed = train_size + dev_size + test_size;
    std::size_t possible = 0;
    for (std::size_t len = min_len; len <= max_len && possible < needed; ++len) {
      std::size_t count = 1;
      for (std::size_t i = 0; i < len && count < needed; ++i) count *= vocab;
      possible += count;
    }
    if (possible < needed) throw ConfigError("synthetic: vocab and lengths allow fewer distinct sentences than requested");
  }
};

struct SyntheticTask {
  TaggedCorpus train, dev, test;
  /// rule[current][earlier] -> tag id; earlier == vocab means "before the start".
  std::vector<std::vector<std::size_t>> rule;
  std::vector<std::string> token_names;
  std::vector<std::string> tag_names;
};

/// Letters-only token names, so digit normalization never merges two tokens.
inline std::string synthetic_token_name(std::size_t id) {
  std::string s = "w";
  do {
    s.push_back(static_cast<char>('a' + id % 26));
    id /= 26;
  } while (id > 0);
  return s;
}

inline SyntheticTask gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticTask task;
  for (std::size_t v = 0; v < spec.vocab; ++v) task.token_names.push_back(synthetic_token_name(v));
  for (std::size_t k = 0; k < spec.tags; ++k) task.tag_names.push_back("T" + std::to_string(k));
  task.rule.assign(spec.vocab, std::vector<std::size_t>(spec.vocab + 1));
  for (auto& row : task.rule)
    for (auto& cell : row) cell = rng.below(spec.tags);

  std::set<std::vector<std::size_t>> seen;
  auto make_split = [&](std::size_t count) {
    TaggedCorpus corpus;
    while (corpus.size() < count) {
      const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
      std::vector<std::size_t> ids(len);
      for (auto& id : ids) id = rng.below(spec.vocab);
      if (!seen.insert(ids).second) continue;  // keep splits disjoint
      TaggedSentence s;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t earlier = t >= spec.distance ? ids[t - spec.distance] : spec.vocab;
        s.push_back({task.token_names[ids[t]], task.tag_names[task.rule[ids[t]][earlier]]});
      }
      corpus.sentences.push_back(std::move(s));
    }
    return corpus;
  };
  task.train = make_split(spec.train_size);
  task.dev = make_split(spec.dev_size);
  task.test = make_split(spec.test_size);
  return task;
}

/// Seeded shuffle, then contiguous partition by the given fractions.
inline std::array<TaggedCorpus, 3> split(const TaggedCorpus& corpus, std::array<double, 3> fractions,
                                         std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n = corpus.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_dev = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  std::array<TaggedCorpus, 3> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t part = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);
    out[part].sentences.push_back(corpus.sentences[order[i]]);
  }
  return out;
}

}  // namespace shortcut
