#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "couplet/corpus.hpp"
#include "couplet/rerank.hpp"

namespace couplet::testing {

inline ToneLexicon fixture_tones() {
  std::istringstream in("天\tL\n风\tL\n春\tL\n花\tL\n山\tL\n地\tO\n月\tO\n草\tO\n雨\tO\n水\tO\n");
  return ToneLexicon::parse(in);
}

/// Ten couplets with hand-counted metrics:
///   length passes    8 / 10  (items 4 and 9 differ in length)
///   structure passes 7 / 10  (items 2, 6 and 9 share a character in place)
///   tone passes      6 / 10  (items 0, 1, 2, 4, 5 and 7)
inline std::vector<CoupletText> structural_fixture() {
  return {
      {U"山高天", U"水远地"},    // 0
      {U"云开月", U"日出风"},    // 1
      {U"春来花", U"春去草"},    // 2 春 in place
      {U"红花天", U"绿叶风"},    // 3 level / level
      {U"江水地", U"海风"},      // 4 3 vs 2
      {U"明月地", U"清风春"},    // 5
      {U"长江水", U"短江雨"},    // 6 江 in place, oblique / oblique
      {U"千山雨", U"万水风"},    // 7
      {U"龙虎", U"欢乐"},        // 8 unknown tones
      {U"金玉满堂", U"金银地"},  // 9 4 vs 3, 金 in place, unknown tone
  };
}

/// Character BLEU written from the textbook definition, kept deliberately
/// separate from the library scorer: clipping by consuming matched reference
/// n-grams, add-one smoothing on empty orders n >= 2.
inline double reference_bleu(const std::vector<std::u32string>& hyps, const std::vector<std::u32string>& refs) {
  double log_p = 0;
  int orders = 0;
  long hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    hyp_len += static_cast<long>(hyps[k].size());
    ref_len += static_cast<long>(refs[k].size());
  }
  for (int n = 1; n <= 4; ++n) {
    long m = 0, t = 0;
    for (std::size_t k = 0; k < hyps.size(); ++k) {
      const auto& h = hyps[k];
      const auto& r = refs[k];
      if (static_cast<int>(h.size()) < n) continue;
      std::vector<std::u32string> hg, rg;
      for (std::size_t i = 0; i + n <= h.size(); ++i) hg.push_back(h.substr(i, n));
      for (std::size_t i = 0; i + n <= r.size(); ++i) rg.push_back(r.substr(i, n));
      t += static_cast<long>(hg.size());
      for (const auto& g : hg) {
        auto it = std::find(rg.begin(), rg.end(), g);
        if (it != rg.end()) {
          ++m;
          rg.erase(it);
        }
      }
    }
    if (t == 0) continue;
    if (m == 0 && n == 1) return 0;
    const double p = m == 0 ? 1.0 / static_cast<double>(t + 1) : static_cast<double>(m) / static_cast<double>(t);
    log_p += std::log(p);
    ++orders;
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_p / orders);
}

}  // namespace couplet::testing
