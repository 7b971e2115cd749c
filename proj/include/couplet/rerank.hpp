#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "couplet/corpus.hpp"
#include "couplet/errors.hpp"
#include "couplet/utf8.hpp"

namespace couplet {

enum class Tone { Level, Oblique, Unknown };

namespace detail {

/// Splits `char<TAB>value` lines; blank lines and `#` comments are skipped.
template <class Fn>
void read_char_table(std::istream& in, const char* what, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(std::string(what) + ": expected char<TAB>value", lineno);
    const auto ch = utf8::decode(line.substr(0, tab));
    if (!ch || ch->size() != 1) throw FormatError(std::string(what) + ": expected a single character", lineno);
    fn((*ch)[0], line.substr(tab + 1), lineno);
  }
}

}  // namespace detail

class ToneLexicon {
 public:
  ToneLexicon() = default;
  explicit ToneLexicon(std::map<char32_t, Tone> entries) : map_(std::move(entries)) {}

  static ToneLexicon parse(std::istream& in) {
    std::map<char32_t, Tone> m;
    detail::read_char_table(in, "tone lexicon", [&](char32_t c, const std::string& v, std::size_t line) {
      if (v == "L")
        m[c] = Tone::Level;
      else if (v == "O")
        m[c] = Tone::Oblique;
      else
        throw FormatError("tone lexicon: tone must be L or O", line);
    });
    return ToneLexicon(std::move(m));
  }

  static ToneLexicon load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read tone lexicon '" + path + "'");
    return parse(in);
  }

  Tone tone(char32_t c) const {
    const auto it = map_.find(c);
    return it == map_.end() ? Tone::Unknown : it->second;
  }
  std::size_t size() const { return map_.size(); }

 private:
  std::map<char32_t, Tone> map_;
};

class SentimentLexicon {
 public:
  SentimentLexicon() = default;
  explicit SentimentLexicon(std::map<char32_t, int> entries) : map_(std::move(entries)) {
    for (const auto& [_, v] : map_)
      if (v != 1 && v != -1) throw std::invalid_argument("sentiment polarity must be +1 or -1");
  }

  static SentimentLexicon parse(std::istream& in) {
    std::map<char32_t, int> m;
    detail::read_char_table(in, "sentiment lexicon", [&](char32_t c, const std::string& v, std::size_t line) {
      if (v == "+1" || v == "1")
        m[c] = 1;
      else if (v == "-1")
        m[c] = -1;
      else
        throw FormatError("sentiment lexicon: polarity must be +1 or -1", line);
    });
    return SentimentLexicon(std::move(m));
  }

  static SentimentLexicon load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read sentiment lexicon '" + path + "'");
    return parse(in);
  }

  int polarity(char32_t c) const {
    const auto it = map_.find(c);
    return it == map_.end() ? 0 : it->second;
  }
  std::size_t size() const { return map_.size(); }

 private:
  std::map<char32_t, int> map_;
};

struct RankWeights {
  double length = 0.25, repeat = 0.25, tone = 0.25, sentiment = 0.25;

  void validate() const {
    if (length < 0 || repeat < 0 || tone < 0 || sentiment < 0)
      throw std::invalid_argument("rank weights must be non-negative");
    if (!(length + repeat + tone + sentiment > 0)) throw std::invalid_argument("rank weights must not all be zero");
  }
  RankWeights scaled(double c) const { return {length * c, repeat * c, tone * c, sentiment * c}; }
};

struct ScoreComponents {
  double length = 0, repeat = 0, tone = 0, sentiment = 0;
  bool operator==(const ScoreComponents&) const = default;
};

/// Positions where the clauses agree, plus characters already seen earlier in
/// their own clause.
inline std::size_t repeat_violations(const CoupletText& c) {
  std::size_t v = 0;
  const std::size_t n = std::min(c.antecedent.size(), c.subsequent.size());
  for (std::size_t i = 0; i < n; ++i) v += c.antecedent[i] == c.subsequent[i];
  for (const auto* clause : {&c.antecedent, &c.subsequent}) {
    std::set<char32_t> seen;
    for (char32_t ch : *clause) v += !seen.insert(ch).second;
  }
  return v;
}

inline ScoreComponents score_components(const CoupletText& c, const ToneLexicon& tones,
                                        const SentimentLexicon& sentiment) {
  if (c.antecedent.empty() || c.subsequent.empty()) throw std::invalid_argument("score_components: empty clause");
  ScoreComponents s;
  s.length = c.antecedent.size() == c.subsequent.size() ? 1.0 : 0.0;
  const double viol = static_cast<double>(repeat_violations(c)) / static_cast<double>(c.antecedent.size());
  s.repeat = std::clamp(1.0 - viol, 0.0, 1.0);
  const Tone a = tones.tone(c.antecedent.back()), b = tones.tone(c.subsequent.back());
  s.tone = a == Tone::Unknown || b == Tone::Unknown ? 0.5 : a != b ? 1.0 : 0.0;
  double pol = 0;
  for (char32_t ch : c.antecedent) pol += sentiment.polarity(ch);
  for (char32_t ch : c.subsequent) pol += sentiment.polarity(ch);
  pol /= static_cast<double>(c.antecedent.size() + c.subsequent.size());
  s.sentiment = (1.0 + pol) / 2.0;
  return s;
}

inline double total_score(const ScoreComponents& s, const RankWeights& w) {
  return w.length * s.length + w.repeat * s.repeat + w.tone * s.tone + w.sentiment * s.sentiment;
}

struct RankCandidate {
  CoupletText pair;
  double logprob = 0;  // generator log-probability, used to break ties
};

struct ScoredCouplet {
  CoupletText pair;
  double logprob = 0;
  ScoreComponents scores;
  double total = 0;
};

/// Best first: total, then generator log-probability, then the clauses.
inline std::vector<ScoredCouplet> rerank(const std::vector<RankCandidate>& pool, const RankWeights& weights,
                                         const ToneLexicon& tones, const SentimentLexicon& sentiment) {
  if (pool.empty()) throw std::invalid_argument("rerank: empty candidate pool");
  weights.validate();
  std::vector<ScoredCouplet> out;
  out.reserve(pool.size());
  for (const auto& c : pool) {
    ScoredCouplet s{c.pair, c.logprob, score_components(c.pair, tones, sentiment), 0};
    s.total = total_score(s.scores, weights);
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const ScoredCouplet& a, const ScoredCouplet& b) {
    if (a.total != b.total) return a.total > b.total;
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    if (a.pair.antecedent != b.pair.antecedent) return a.pair.antecedent < b.pair.antecedent;
    return a.pair.subsequent < b.pair.subsequent;
  });
  return out;
}

}  // namespace couplet
