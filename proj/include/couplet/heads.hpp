#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "couplet/corpus.hpp"
#include "couplet/errors.hpp"
#include "couplet/rng.hpp"
#include "couplet/utf8.hpp"

namespace couplet {

struct HeadEntry {
  double p = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};

/// p(head | char) with additive smoothing. Characters never seen in the
/// corpus have p = 0.
class HeadPosterior {
 public:
  HeadPosterior() = default;
  HeadPosterior(std::map<char32_t, HeadEntry> entries, double alpha) : table_(std::move(entries)), alpha_(alpha) {}

  double posterior(char32_t c) const {
    const auto it = table_.find(c);
    return it == table_.end() ? 0.0 : it->second.p;
  }
  std::size_t total(char32_t c) const {
    const auto it = table_.find(c);
    return it == table_.end() ? 0 : it->second.total;
  }
  double alpha() const { return alpha_; }
  const std::map<char32_t, HeadEntry>& table() const { return table_; }

 private:
  std::map<char32_t, HeadEntry> table_;
  double alpha_ = 1.0;
};

inline double head_probability(std::size_t head, std::size_t total, double alpha) {
  const double den = static_cast<double>(total) + 2 * alpha;
  return den > 0 ? (static_cast<double>(head) + alpha) / den : 0.0;
}

inline HeadPosterior fit_head_model(const HeadStats& stats, double alpha = 1.0) {
  if (!(alpha >= 0)) throw std::invalid_argument("head model smoothing must be >= 0");
  std::map<char32_t, HeadEntry> t;
  for (const auto& [c, n] : stats)
    if (n.total > 0) t[c] = {head_probability(n.head, n.total, alpha), n.head, n.total};
  return HeadPosterior(std::move(t), alpha);
}

inline void write_head_table(std::ostream& out, const HeadPosterior& hp) {
  char buf[32];
  for (const auto& [c, e] : hp.table()) {
    std::snprintf(buf, sizeof buf, "%.17g", e.p);
    out << utf8::encode(c) << '\t' << buf << '\t' << e.head << '\t' << e.total << '\n';
  }
}

inline void save_head_table(const std::string& path, const HeadPosterior& hp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write head table '" + path + "'");
  write_head_table(out, hp);
  if (!out) throw IoError("failed writing head table '" + path + "'");
}

inline HeadPosterior read_head_table(std::istream& in) {
  std::map<char32_t, HeadEntry> t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (std::size_t tab; (tab = line.find('\t', pos)) != std::string::npos; pos = tab + 1)
      f.push_back(line.substr(pos, tab - pos));
    f.push_back(line.substr(pos));
    if (f.size() != 4) throw FormatError("head table: expected char<TAB>p<TAB>head<TAB>total", lineno);
    const auto ch = utf8::decode(f[0]);
    if (!ch || ch->size() != 1) throw FormatError("head table: expected a single character", lineno);
    HeadEntry e;
    try {
      e.p = std::stod(f[1]);
      e.head = std::stoul(f[2]);
      e.total = std::stoul(f[3]);
    } catch (const std::exception&) {
      throw FormatError("head table: bad number", lineno);
    }
    if (!(e.p >= 0 && e.p <= 1) || e.head > e.total) throw FormatError("head table: inconsistent entry", lineno);
    t[(*ch)[0]] = e;
  }
  return HeadPosterior(std::move(t), 1.0);
}

inline HeadPosterior load_head_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read head table '" + path + "'");
  return read_head_table(in);
}

struct HeadSelection {
  char32_t first = 0;   // K1, heads the antecedent
  char32_t second = 0;  // K2, heads the subsequent
  TokenId first_id = 0;
  TokenId second_id = 0;
  std::string warning;
};

struct HeadOptions {
  bool sample = false;
  std::uint64_t seed = 0;
};

/// Strips ASCII whitespace and the ideographic space at both ends.
inline std::u32string trim_input(std::u32string s) {
  auto space = [](char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'　'; };
  while (!s.empty() && space(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && space(s[i])) ++i;
  return s.substr(i);
}

inline constexpr std::size_t kInputLength = 4;

/// Picks (K1, K2) from a 4-character input. Deterministic mode ranks usable
/// characters by posterior, then corpus frequency, then input position, and
/// takes the first two distinct characters. Sampling mode draws without
/// replacement in proportion to the posterior.
inline HeadSelection select_heads(std::u32string_view raw, const HeadPosterior& hp, const Vocab& vocab,
                                  const HeadOptions& opt = {}) {
  const auto input = trim_input(std::u32string(raw));
  if (input.size() != kInputLength)
    throw std::invalid_argument("input must be exactly 4 characters, got " + std::to_string(input.size()));
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < input.size(); ++i)
    if (vocab.contains(input[i])) usable.push_back(i);
  if (usable.size() < 2)
    throw SelectionError("need at least 2 input characters known to the model, found " +
                         std::to_string(usable.size()));

  auto before = [&](std::size_t a, std::size_t b) {
    const double pa = hp.posterior(input[a]), pb = hp.posterior(input[b]);
    if (pa != pb) return pa > pb;
    const auto fa = hp.total(input[a]), fb = hp.total(input[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  };
  std::vector<std::size_t> order = usable;
  if (opt.sample) {
    Rng rng(opt.seed);
    std::vector<std::size_t> pool = usable, drawn;
    while (!pool.empty()) {
      double mass = 0;
      for (auto i : pool) mass += hp.posterior(input[i]);
      std::size_t pick = 0;
      if (mass > 0) {
        double r = rng.uniform() * mass;
        for (std::size_t k = 0; k < pool.size(); ++k) {
          const double w = hp.posterior(input[pool[k]]);
          if (w <= 0) continue;
          pick = k;
          if (r < w) break;
          r -= w;
        }
      } else {
        pick = rng.below(pool.size());
      }
      drawn.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    order = std::move(drawn);
  } else {
    std::stable_sort(order.begin(), order.end(), before);
  }

  HeadSelection sel;
  sel.first = input[order[0]];
  sel.second = sel.first;
  for (std::size_t k = 1; k < order.size(); ++k)
    if (input[order[k]] != sel.first) {
      sel.second = input[order[k]];
      break;
    }
  if (sel.second == sel.first) sel.warning = "input has a single distinct usable character; both heads repeat it";
  sel.first_id = vocab.id(sel.first);
  sel.second_id = vocab.id(sel.second);
  return sel;
}

}  // namespace couplet
