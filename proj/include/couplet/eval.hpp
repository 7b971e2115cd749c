#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "couplet/corpus.hpp"
#include "couplet/rerank.hpp"

namespace couplet {

/// Corpus-level character BLEU with brevity penalty. An order with no
/// matches is add-one smoothed when n >= 2; orders no hypothesis is long
/// enough to contain are left out of the geometric mean.
inline double bleu(const std::vector<std::u32string>& hyps, const std::vector<std::u32string>& refs,
                   std::size_t max_n = 4) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty input");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  std::vector<std::size_t> match(max_n + 1, 0), total(max_n + 1, 0);
  std::size_t c = 0, r = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto& h = hyps[k];
    const auto& ref = refs[k];
    c += h.size();
    r += ref.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      if (h.size() < n) continue;
      std::map<std::u32string, std::size_t> ref_counts, hyp_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[ref.substr(i, n)];
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[h.substr(i, n)];
      for (const auto& [g, cnt] : hyp_counts) {
        const auto it = ref_counts.find(g);
        match[n] += std::min(cnt, it == ref_counts.end() ? 0 : it->second);
      }
      total[n] += h.size() - n + 1;
    }
  }
  if (c == 0) return 0.0;
  double log_sum = 0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (total[n] == 0) continue;
    double p = static_cast<double>(match[n]) / static_cast<double>(total[n]);
    if (match[n] == 0) {
      if (n == 1) return 0.0;
      p = 1.0 / static_cast<double>(total[n] + 1);
    }
    log_sum += std::log(p);
    ++orders;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

/// Distinct n-grams over all n-grams in a set of sequences (0 when none).
template <class Seq>
double distinct_n(const std::vector<Seq>& seqs, std::size_t n) {
  std::set<Seq> seen;
  std::size_t count = 0;
  for (const auto& s : seqs)
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      seen.insert(Seq(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n)));
      ++count;
    }
  return count ? static_cast<double>(seen.size()) / static_cast<double>(count) : 0.0;
}

inline bool length_pass(const CoupletText& c) { return c.antecedent.size() == c.subsequent.size(); }

inline bool structure_pass(const CoupletText& c) {
  const std::size_t n = std::min(c.antecedent.size(), c.subsequent.size());
  for (std::size_t i = 0; i < n; ++i)
    if (c.antecedent[i] == c.subsequent[i]) return false;
  return true;
}

/// Known and opposed ending tones; unknown counts as a failure.
inline bool tone_pass(const CoupletText& c, const ToneLexicon& tones) {
  if (c.antecedent.empty() || c.subsequent.empty()) return false;
  const Tone a = tones.tone(c.antecedent.back()), b = tones.tone(c.subsequent.back());
  return a != Tone::Unknown && b != Tone::Unknown && a != b;
}

struct StructuralRates {
  double length = 0, structure = 0, tone = 0;
};

inline StructuralRates structural_metrics(const std::vector<CoupletText>& couplets, const ToneLexicon& tones) {
  if (couplets.empty()) throw std::invalid_argument("structural_metrics: no couplets");
  StructuralRates r;
  for (const auto& c : couplets) {
    r.length += length_pass(c);
    r.structure += structure_pass(c);
    r.tone += tone_pass(c, tones);
  }
  const double n = static_cast<double>(couplets.size());
  r.length /= n;
  r.structure /= n;
  r.tone /= n;
  return r;
}

struct EvalReport {
  double length_matching = 0;
  double character_structure = 0;
  double tone_pairing = 0;
  double bleu = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::vector<std::string> failures;  // one message per skipped item

  double skip_rate() const {
    const auto all = n_evaluated + n_skipped;
    return all ? static_cast<double>(n_skipped) / static_cast<double>(all) : 0.0;
  }

  std::string summary_line() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "length=%.4f structure=%.4f tone=%.4f bleu=%.4f n=%zu", length_matching,
                  character_structure, tone_pairing, bleu, n_evaluated);
    return buf;
  }

  std::string table() const {
    char buf[256];
    std::ostringstream out;
    out << "Length Matching  Character Structure  Tone Pairing  BLEU\n";
    std::snprintf(buf, sizeof buf, "%15.4f  %19.4f  %12.4f  %6.4f\n", length_matching, character_structure,
                  tone_pairing, bleu);
    out << buf;
    std::snprintf(buf, sizeof buf, "evaluated %zu, skipped %zu (%.1f%%)\n", n_evaluated, n_skipped,
                  100.0 * skip_rate());
    out << buf;
    return out.str();
  }
};

/// Regenerates every test couplet from its own head characters and scores
/// the result. `generate(reference)` returns a couplet or throws; throwing
/// items are skipped. BLEU compares both generated clauses with the
/// corresponding reference clauses.
template <class Generate>
EvalReport evaluate_testset(Generate&& generate, const std::vector<CoupletText>& test, const ToneLexicon& tones) {
  EvalReport rep;
  std::vector<CoupletText> produced;
  std::vector<std::u32string> hyps, refs;
  for (const auto& ref : test) {
    try {
      CoupletText out = generate(ref);
      hyps.push_back(out.antecedent);
      refs.push_back(ref.antecedent);
      hyps.push_back(out.subsequent);
      refs.push_back(ref.subsequent);
      produced.push_back(std::move(out));
    } catch (const std::exception& e) {
      ++rep.n_skipped;
      rep.failures.push_back(utf8::encode(ref.antecedent) + ": " + e.what());
    }
  }
  if (produced.empty()) throw std::runtime_error("evaluation produced no couplets (" + std::to_string(rep.n_skipped) +
                                                 " items failed)");
  const auto rates = structural_metrics(produced, tones);
  rep.length_matching = rates.length;
  rep.character_structure = rates.structure;
  rep.tone_pairing = rates.tone;
  rep.bleu = bleu(hyps, refs);
  rep.n_evaluated = produced.size();
  return rep;
}

}  // namespace couplet
