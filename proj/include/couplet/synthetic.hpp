#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "couplet/corpus.hpp"

namespace couplet {

/// Level-tone characters and their oblique-tone counterparts. Every
/// subsequent clause of a synthetic couplet is the character-wise image of
/// its antecedent under this table.
inline constexpr std::array<std::pair<char32_t, char32_t>, 20> kSyntheticPairs = {{
    {U'天', U'地'}, {U'山', U'水'}, {U'风', U'月'}, {U'花', U'草'}, {U'春', U'岁'},
    {U'红', U'绿'}, {U'金', U'玉'}, {U'南', U'北'}, {U'云', U'雨'}, {U'新', U'旧'},
    {U'福', U'寿'}, {U'年', U'日'}, {U'家', U'户'}, {U'门', U'院'}, {U'龙', U'虎'},
    {U'欢', U'乐'}, {U'明', U'暗'}, {U'千', U'万'}, {U'长', U'短'}, {U'江', U'海'},
}};

inline char32_t synthetic_counterpart(char32_t c) {
  for (const auto& [l, r] : kSyntheticPairs)
    if (l == c) return r;
  throw std::invalid_argument("not a synthetic antecedent character: " + utf8::encode(c));
}

/// Deterministic toy corpus. Antecedents follow a first-order chain over the
/// 20 level-tone characters (successor +7 with probability 0.7, else +3,
/// modulo 20); lengths alternate randomly between 5 and 7.
inline std::vector<CoupletText> synthetic_couplets(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CoupletText> out;
  out.reserve(count);
  const std::size_t n = kSyntheticPairs.size();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t len = rng.uniform() < 0.5 ? 5 : 7;
    std::size_t i = rng.below(n);
    CoupletText p;
    for (std::size_t t = 0; t < len; ++t) {
      p.antecedent.push_back(kSyntheticPairs[i].first);
      p.subsequent.push_back(kSyntheticPairs[i].second);
      i = (i + (rng.uniform() < 0.7 ? 7 : 3)) % n;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace couplet
