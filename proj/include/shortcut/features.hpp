#pragma once

// Token -> network input: normalization, word / capitalization / character
// lookup tables, and the gated context window.

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shortcut/autodiff.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/linalg.hpp"

namespace shortcut {

/// Digits become '9', then ASCII letters are lowercased.
inline std::string normalize(std::string_view token) {
  if (token.empty()) throw DataError("normalize: empty token");
  std::string out(token);
  for (char& ch : out) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isdigit(u)) {
      ch = '9';
    } else {
      ch = static_cast<char>(std::tolower(u));
    }
  }
  return out;
}

enum class CapCategory { AllLower, AllCaps, InitialCap, Mixed, NonAlpha };
inline constexpr std::size_t kCapCategories = 5;
/// Extra capitalization row used by the sentence-boundary pad token.
inline constexpr std::size_t kCapBoundaryRow = kCapCategories;

inline std::string_view to_string(CapCategory c) {
  switch (c) {
    case CapCategory::AllLower: return "all-lower";
    case CapCategory::AllCaps: return "all-caps";
    case CapCategory::InitialCap: return "initial-cap";
    case CapCategory::Mixed: return "mixed";
    case CapCategory::NonAlpha: return "non-alpha";
  }
  return "?";
}

/// Categories look only at ASCII letters: no letters -> non-alpha; all letters
/// lower -> all-lower; all upper -> all-caps; an upper first character followed
/// only by lower letters -> initial-cap; anything else -> mixed.
inline CapCategory cap_category(std::string_view token) {
  if (token.empty()) throw DataError("cap_category: empty token");
  std::size_t letters = 0, upper = 0;
  for (char ch : token) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalpha(u)) {
      ++letters;
      if (std::isupper(u)) ++upper;
    }
  }
  if (letters == 0) return CapCategory::NonAlpha;
  if (upper == 0) return CapCategory::AllLower;
  if (upper == letters) return CapCategory::AllCaps;
  const auto first = static_cast<unsigned char>(token.front());
  if (upper == 1 && std::isupper(first)) return CapCategory::InitialCap;
  return CapCategory::Mixed;
}

/// Dense string -> id map with reserved UNK (0) and PAD (1).
class Vocab {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::uint32_t kPad = 1;

  Vocab() : tokens_{"<unk>", "<pad>"} {
    index_.emplace(tokens_[0], kUnk);
    index_.emplace(tokens_[1], kPad);
  }

  std::uint32_t add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }
  std::uint32_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Rebuild from a stored token list; the first two entries must be the reserved ones.
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[0] != "<unk>" || tokens[1] != "<pad>") {
      throw CheckpointError("vocabulary does not start with <unk>, <pad>");
    }
    Vocab v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      if (v.add(tokens[i]) != i) throw CheckpointError("duplicate vocabulary entry '" + tokens[i] + "'");
    }
    return v;
  }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct FeatureDims {
  std::size_t word_dim = 100;
  std::size_t cap_dim = 5;
  std::size_t char_dim = 5;
  std::size_t chars_per_side = 5;  // leftmost and rightmost characters kept
  std::size_t window = 3;

  std::size_t token_length() const { return word_dim + cap_dim + 2 * chars_per_side * char_dim; }
  std::size_t window_length() const { return token_length() * window; }

  void validate() const {
    if (window < 1 || window % 2 == 0) throw ConfigError("features.window must be odd and >= 1");
    if (word_dim < 1) throw ConfigError("features.word_dim must be >= 1");
  }
};

/// Word and character vocabularies built from normalized training tokens.
struct FeatureVocab {
  Vocab words;
  Vocab chars;

  void add_token(std::string_view raw) {
    const std::string norm = normalize(raw);
    words.add(norm);
    for (char ch : norm) chars.add(std::string(1, ch));
  }
};

/// Leftmost `per_side` characters padded on the right, then rightmost
/// `per_side` characters padded on the left. Unknown characters map to UNK.
inline std::vector<std::uint32_t> char_ids(std::string_view normalized, const Vocab& chars,
                                           std::size_t per_side = 5) {
  if (normalized.empty()) throw DataError("char_ids: empty token");
  std::vector<std::uint32_t> ids(2 * per_side, Vocab::kPad);
  const std::size_t len = normalized.size();
  const std::size_t take = std::min(len, per_side);
  for (std::size_t i = 0; i < take; ++i) ids[i] = chars.id(std::string(1, normalized[i]));
  for (std::size_t i = 0; i < take; ++i)
    ids[2 * per_side - take + i] = chars.id(std::string(1, normalized[len - take + i]));
  return ids;
}

struct EncodedToken {
  std::uint32_t word = Vocab::kUnk;
  std::uint32_t cap = 0;
  std::vector<std::uint32_t> chars;
};

inline EncodedToken encode_token(std::string_view raw, const FeatureVocab& vocab,
                                 const FeatureDims& dims) {
  const std::string norm = normalize(raw);
  return EncodedToken{vocab.words.id(norm), static_cast<std::uint32_t>(cap_category(raw)),
                      char_ids(norm, vocab.chars, dims.chars_per_side)};
}

struct FeatureParams {
  FeatureDims dims;
  Parameter words;        // |V_w| x word_dim
  Parameter caps;         // (5 categories + boundary) x cap_dim
  Parameter chars;        // |V_c| x char_dim
  Parameter window_gate;  // window x token_length, pre-sigmoid

  template <class F>
  void for_each_parameter(F&& f) {
    f(words);
    f(caps);
    if (chars.size() > 0) f(chars);
    f(window_gate);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<FeatureParams*>(this)->for_each_parameter([&](const Parameter& p) { f(p); });
  }
};

inline FeatureParams make_feature_params(const FeatureDims& dims, const FeatureVocab& vocab, Rng& rng) {
  dims.validate();
  FeatureParams fp;
  fp.dims = dims;
  // Lookup tables see a one-hot input, so fan-in is 1.
  fp.words = Parameter("features.words", gaussian_init(vocab.words.size(), dims.word_dim, 1, rng), true);
  fp.caps = Parameter("features.caps", gaussian_init(kCapCategories + 1, dims.cap_dim, 1, rng));
  if (dims.char_dim > 0 && dims.chars_per_side > 0) {
    fp.chars = Parameter("features.chars", gaussian_init(vocab.chars.size(), dims.char_dim, 1, rng), true);
  }
  fp.window_gate = Parameter("features.window_gate", Matrix(dims.window, dims.token_length()));
  return fp;
}

/// f_w = [L_w(w); L_a(a); L_c(c_1); ...; L_c(c_k)]
inline Var token_feature(Tape& tape, const FeatureParams& fp, const EncodedToken& tok) {
  std::vector<Var> parts;
  parts.reserve(2 + tok.chars.size());
  parts.push_back(tape.row(fp.words, tok.word));
  if (fp.dims.cap_dim > 0) parts.push_back(tape.row(fp.caps, tok.cap));
  if (fp.chars.size() > 0)
    for (std::uint32_t c : tok.chars) parts.push_back(tape.row(fp.chars, c));
  return tape.concat(parts);
}

/// Feature of the sentence-boundary token.
inline Var pad_feature(Tape& tape, const FeatureParams& fp) {
  EncodedToken pad{Vocab::kPad, static_cast<std::uint32_t>(kCapBoundaryRow),
                   std::vector<std::uint32_t>(2 * fp.dims.chars_per_side, Vocab::kPad)};
  return token_feature(tape, fp, pad);
}

/// Concatenation over offsets -d/2..d/2 of σ(r_offset) ⊙ f_{t+offset};
/// positions outside the sentence use `pad`. `t` is 0-based.
inline Var window_input(Tape& tape, const FeatureParams& fp, std::span<const Var> features,
                        Var pad, std::size_t t, std::span<const Var> window_gates = {}) {
  const std::size_t d = fp.dims.window;
  const auto half = static_cast<std::ptrdiff_t>(d / 2);
  const auto T = static_cast<std::ptrdiff_t>(features.size());
  if (static_cast<std::ptrdiff_t>(t) >= T) throw UsageError("window_input: position out of range");
  std::vector<Var> slots;
  slots.reserve(d);
  for (std::ptrdiff_t off = -half; off <= half; ++off) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) + off;
    const Var f = (pos < 0 || pos >= T) ? pad : features[static_cast<std::size_t>(pos)];
    const std::size_t slot = static_cast<std::size_t>(off + half);
    const Var gate = window_gates.empty() ? tape.sigmoid(tape.row(fp.window_gate, slot))
                                          : window_gates[slot];
    slots.push_back(tape.mul(gate, f));
  }
  return tape.concat(slots);
}

/// σ(r_offset) for every window slot, computed once per sentence.
inline std::vector<Var> window_gates(Tape& tape, const FeatureParams& fp) {
  std::vector<Var> gates;
  for (std::size_t s = 0; s < fp.dims.window; ++s)
    gates.push_back(tape.sigmoid(tape.row(fp.window_gate, s)));
  return gates;
}

/// Loads "token v1 ... vk" lines into the word table. Tokens are normalized
/// before matching; vocabulary words absent from the file keep their values.
/// Returns the number of rows overwritten.
inline std::size_t load_pretrained_embeddings(const std::string& path, const Vocab& words,
                                              Parameter& table) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path);
  std::string line;
  std::size_t lineno = 0, loaded = 0;
  const std::size_t dim = table.value.cols();
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vals;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (vals.size() != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " values, found " + std::to_string(vals.size()));
    }
    const std::string norm = normalize(token);
    if (!words.contains(norm)) continue;
    auto row = table.value.row(words.id(norm));
    std::copy(vals.begin(), vals.end(), row.begin());
    ++loaded;
  }
  return loaded;
}

}  // namespace shortcut
