#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "couplet/errors.hpp"
#include "couplet/rng.hpp"
#include "couplet/utf8.hpp"

namespace couplet {

using TokenId = std::uint32_t;

/// A couplet as raw characters.
struct CoupletText {
  std::u32string antecedent;
  std::u32string subsequent;

  bool operator==(const CoupletText&) const = default;
};

/// A couplet as vocabulary ids, |antecedent| == |subsequent| >= 1.
struct CoupletPair {
  std::vector<TokenId> antecedent;
  std::vector<TokenId> subsequent;

  bool operator==(const CoupletPair&) const = default;
};

struct Corpus {
  std::vector<CoupletText> pairs;
  std::size_t skipped = 0;  // lines rejected for unequal or empty clauses
};

/// Parses `antecedent<TAB>subsequent` lines. Blank lines are ignored; a
/// trailing CR is tolerated.
inline Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto text = utf8::decode(line);
    if (!text) throw FormatError("malformed UTF-8", lineno);
    const auto tab = text->find(U'\t');
    if (tab == std::u32string::npos || text->find(U'\t', tab + 1) != std::u32string::npos) {
      ++corpus.skipped;
      continue;
    }
    CoupletText pair{text->substr(0, tab), text->substr(tab + 1)};
    if (pair.antecedent.empty() || pair.antecedent.size() != pair.subsequent.size()) {
      ++corpus.skipped;
      continue;
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus '" + path + "'");
  return parse_corpus(in);
}

inline void write_corpus(std::ostream& out, const std::vector<CoupletText>& pairs) {
  for (const auto& p : pairs) out << utf8::encode(p.antecedent) << '\t' << utf8::encode(p.subsequent) << '\n';
}

/// Character <-> id bijection over characters with frequency >= min_freq.
/// Kept characters are ordered by descending frequency, ties by code point;
/// `<unk>` and `<eos>` follow them.
class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kEos = "<eos>";

  Vocab() : Vocab(std::vector<std::pair<char32_t, std::size_t>>{}, {}) {}

  /// `kept` is the id-ordered list of (character, frequency); `freq` the full
  /// frequency table including dropped characters.
  Vocab(std::vector<std::pair<char32_t, std::size_t>> kept, std::map<char32_t, std::size_t> freq)
      : freq_(std::move(freq)) {
    for (const auto& [ch, n] : kept) {
      if (char_to_id_.count(ch)) throw std::invalid_argument("vocab: duplicate character " + utf8::encode(ch));
      char_to_id_.emplace(ch, static_cast<TokenId>(id_to_char_.size()));
      id_to_char_.push_back(ch);
      kept_freq_.push_back(n);
    }
    unk_ = static_cast<TokenId>(id_to_char_.size());
    eos_ = unk_ + 1;
  }

  std::size_t size() const { return id_to_char_.size() + 2; }
  TokenId unk_id() const { return unk_; }
  TokenId eos_id() const { return eos_; }
  bool is_special(TokenId id) const { return id >= unk_; }

  bool contains(char32_t ch) const { return char_to_id_.count(ch) != 0; }

  TokenId id(char32_t ch) const {
    auto it = char_to_id_.find(ch);
    return it == char_to_id_.end() ? unk_ : it->second;
  }

  /// Character for a regular id. Throws for specials.
  char32_t character(TokenId id) const {
    if (id >= id_to_char_.size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " has no character");
    return id_to_char_[id];
  }

  std::string token(TokenId id) const {
    if (id == unk_) return kUnk;
    if (id == eos_) return kEos;
    return utf8::encode(character(id));
  }

  /// Frequency of a kept id (0 for specials).
  std::size_t frequency(TokenId id) const { return id < kept_freq_.size() ? kept_freq_[id] : 0; }

  /// Corpus frequency of any character, kept or not.
  std::size_t corpus_frequency(char32_t ch) const {
    auto it = freq_.find(ch);
    return it == freq_.end() ? 0 : it->second;
  }

  const std::map<char32_t, std::size_t>& frequencies() const { return freq_; }

  bool operator==(const Vocab& o) const { return id_to_char_ == o.id_to_char_ && kept_freq_ == o.kept_freq_; }

 private:
  std::unordered_map<char32_t, TokenId> char_to_id_;
  std::vector<char32_t> id_to_char_;
  std::vector<std::size_t> kept_freq_;
  std::map<char32_t, std::size_t> freq_;
  TokenId unk_ = 0;
  TokenId eos_ = 1;
};

inline std::map<char32_t, std::size_t> count_characters(const std::vector<CoupletText>& pairs) {
  std::map<char32_t, std::size_t> freq;
  for (const auto& p : pairs) {
    for (char32_t c : p.antecedent) ++freq[c];
    for (char32_t c : p.subsequent) ++freq[c];
  }
  return freq;
}

/// Counts characters over both clauses and keeps those seen at least
/// `min_freq` times.
inline Vocab build_vocab(const std::vector<CoupletText>& pairs, std::size_t min_freq = 10) {
  if (pairs.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  auto freq = count_characters(pairs);
  std::vector<std::pair<char32_t, std::size_t>> kept;
  for (const auto& [ch, n] : freq)
    if (n >= min_freq) kept.emplace_back(ch, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return Vocab(std::move(kept), std::move(freq));
}

/// Writes `char<TAB>id<TAB>freq` lines, specials included.
inline void write_vocab(std::ostream& out, const Vocab& vocab) {
  for (TokenId id = 0; id < vocab.size(); ++id) out << vocab.token(id) << '\t' << id << '\t' << vocab.frequency(id) << '\n';
}

inline void save_vocab(const std::string& path, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocab '" + path + "'");
  write_vocab(out, vocab);
}

inline Vocab read_vocab(std::istream& in) {
  std::vector<std::pair<char32_t, std::size_t>> kept;
  std::map<char32_t, std::size_t> freq;
  std::string line;
  std::size_t lineno = 0;
  bool saw_unk = false, saw_eos = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError("vocab: expected char<TAB>id<TAB>freq", lineno);
    const std::string tok = line.substr(0, t1);
    std::size_t id, n;
    try {
      id = std::stoul(line.substr(t1 + 1, t2 - t1 - 1));
      n = std::stoul(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError("vocab: bad number", lineno);
    }
    if (tok == Vocab::kUnk) {
      if (id != kept.size()) throw FormatError("vocab: <unk> must follow the regular characters", lineno);
      saw_unk = true;
      continue;
    }
    if (tok == Vocab::kEos) {
      if (id != kept.size() + 1) throw FormatError("vocab: <eos> must follow <unk>", lineno);
      saw_eos = true;
      continue;
    }
    auto cs = utf8::decode(tok);
    if (!cs || cs->size() != 1) throw FormatError("vocab: expected a single character", lineno);
    if (saw_unk || id != kept.size()) throw FormatError("vocab: ids must be dense and ordered", lineno);
    kept.emplace_back((*cs)[0], n);
    freq[(*cs)[0]] = n;
  }
  if (!saw_unk || !saw_eos) throw FormatError("vocab: missing <unk> or <eos>");
  return Vocab(std::move(kept), std::move(freq));
}

inline Vocab load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocab '" + path + "'");
  return read_vocab(in);
}

inline std::vector<TokenId> encode_clause(std::u32string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char32_t c : text) ids.push_back(vocab.id(c));
  return ids;
}

/// UTF-8 rendering; specials render as `<unk>` / `<eos>`.
inline std::string decode_clause(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) out += vocab.token(id);
  return out;
}

/// Code points of regular ids. Throws on specials.
inline std::u32string decode_chars(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::u32string out;
  for (TokenId id : ids) out.push_back(vocab.character(id));
  return out;
}

inline CoupletPair encode_pair(const CoupletText& text, const Vocab& vocab) {
  return {encode_clause(text.antecedent, vocab), encode_clause(text.subsequent, vocab)};
}

inline std::vector<CoupletPair> encode_pairs(const std::vector<CoupletText>& pairs, const Vocab& vocab) {
  std::vector<CoupletPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode_pair(p, vocab));
  return out;
}

struct DatasetSplit {
  std::vector<CoupletText> train, validation, test;
  std::uint64_t seed = 0;
};

/// Validation/test sizes used when none are configured: the full-size
/// 1000/2000 split, or 5% / 10% of smaller corpora (same 1:2 ratio).
inline std::pair<std::size_t, std::size_t> default_split_sizes(std::size_t corpus_size) {
  const auto val = std::min<std::size_t>(1000, corpus_size / 20);
  const auto test = std::min<std::size_t>(2000, corpus_size / 10);
  return {val, test};
}

inline DatasetSplit make_splits(const std::vector<CoupletText>& corpus, std::size_t val_n, std::size_t test_n,
                                std::uint64_t seed) {
  if (val_n + test_n > 0 && val_n + test_n >= corpus.size())
    throw std::invalid_argument("make_splits: validation " + std::to_string(val_n) + " + test " +
                                std::to_string(test_n) + " needs a corpus larger than " +
                                std::to_string(corpus.size()));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = corpus[order[k]];
    if (k < val_n)
      split.validation.push_back(p);
    else if (k < val_n + test_n)
      split.test.push_back(p);
    else
      split.train.push_back(p);
  }
  return split;
}

struct HeadCount {
  std::size_t total = 0;  // occurrences in either clause
  std::size_t head = 0;   // occurrences as first character of an antecedent
};

using HeadStats = std::map<char32_t, HeadCount>;

inline HeadStats collect_head_stats(const std::vector<CoupletText>& corpus) {
  HeadStats stats;
  for (const auto& p : corpus) {
    for (char32_t c : p.antecedent) ++stats[c].total;
    for (char32_t c : p.subsequent) ++stats[c].total;
    if (!p.antecedent.empty()) ++stats[p.antecedent.front()].head;
  }
  return stats;
}

}  // namespace couplet
