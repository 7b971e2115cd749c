#include <sstream>

#include <gtest/gtest.h>

#include "couplet/heads.hpp"
#include "couplet/synthetic.hpp"

using namespace couplet;

namespace {

/// Vocab whose kept characters are exactly `chars` (min_freq 1).
Vocab vocab_of(const std::u32string& chars) {
  std::vector<CoupletText> pairs;
  for (char32_t c : chars) pairs.push_back({std::u32string(1, c), std::u32string(1, c)});
  return build_vocab(pairs, 1);
}

HeadPosterior table(std::map<char32_t, HeadEntry> entries) { return HeadPosterior(std::move(entries), 1.0); }

}  // namespace

TEST(FitHeadModel, HandArithmetic) {
  HeadStats stats;
  stats[U'春'] = {10, 5};
  stats[U'福'] = {100, 0};
  const auto hp = fit_head_model(stats, 1.0);
  EXPECT_DOUBLE_EQ(hp.posterior(U'春'), 0.5);
  EXPECT_DOUBLE_EQ(hp.posterior(U'福'), 1.0 / 102.0);
  EXPECT_EQ(hp.posterior(U'龙'), 0.0);
}

TEST(FitHeadModel, RejectsNegativeAlpha) { EXPECT_THROW(fit_head_model({}, -1.0), std::invalid_argument); }

TEST(FitHeadModel, MonotoneInHeadAntitoneInNonHead) {
  for (std::size_t total = 1; total < 40; ++total)
    for (std::size_t head = 0; head < total; ++head) {
      const double p = head_probability(head, total, 1.0);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      EXPECT_GT(head_probability(head + 1, total + 1, 1.0), p);  // one more head occurrence
      EXPECT_LT(head_probability(head, total + 1, 1.0), p);      // one more non-head occurrence
    }
}

TEST(HeadTable, RoundTrip) {
  const auto hp = fit_head_model(collect_head_stats(synthetic_couplets(40, 2)), 1.0);
  std::stringstream io;
  write_head_table(io, hp);
  const auto back = read_head_table(io);
  ASSERT_EQ(back.table().size(), hp.table().size());
  for (const auto& [c, e] : hp.table()) {
    EXPECT_EQ(back.posterior(c), e.p);
    EXPECT_EQ(back.total(c), e.total);
  }
}

TEST(HeadTable, RejectsMalformed) {
  std::istringstream a("春\t0.5\t3\n");
  EXPECT_THROW(read_head_table(a), FormatError);
  std::istringstream b("春\t0.5\t9\t3\n");
  EXPECT_THROW(read_head_table(b), FormatError);
}

TEST(SelectHeads, TieBrokenByCorpusFrequency) {
  const auto v = vocab_of(U"甲乙丙丁");
  const auto hp = table({{U'甲', {0.9, 9, 10}}, {U'乙', {0.5, 10, 20}}, {U'丙', {0.5, 40, 80}}, {U'丁', {0.1, 1, 10}}});
  const auto sel = select_heads(U"甲乙丙丁", hp, v);
  EXPECT_EQ(sel.first, U'甲');
  EXPECT_EQ(sel.second, U'丙');
  EXPECT_EQ(sel.first_id, v.id(U'甲'));
  EXPECT_TRUE(sel.warning.empty());
}

TEST(SelectHeads, FullTieFallsBackToInputOrder) {
  const auto v = vocab_of(U"甲乙丙丁");
  const auto hp = table({{U'甲', {0.2, 2, 10}}, {U'乙', {0.2, 2, 10}}, {U'丙', {0.2, 2, 10}}, {U'丁', {0.2, 2, 10}}});
  const auto sel = select_heads(U"丁丙乙甲", hp, v);
  EXPECT_EQ(sel.first, U'丁');
  EXPECT_EQ(sel.second, U'丙');
}

TEST(SelectHeads, OnlyInVocabularyCharactersAreEligible) {
  const auto v = vocab_of(U"甲乙");
  // 丙/丁 have higher posteriors but are not model characters.
  const auto hp = table({{U'甲', {0.1, 1, 10}}, {U'乙', {0.2, 2, 10}}, {U'丙', {0.9, 9, 10}}, {U'丁', {0.8, 8, 10}}});
  const auto sel = select_heads(U"丙甲丁乙", hp, v);
  EXPECT_EQ(sel.first, U'乙');
  EXPECT_EQ(sel.second, U'甲');
}

TEST(SelectHeads, IdenticalCharactersWarn) {
  const auto v = vocab_of(U"福");
  const auto hp = table({{U'福', {0.4, 4, 10}}});
  const auto sel = select_heads(U"福福福福", hp, v);
  EXPECT_EQ(sel.first, U'福');
  EXPECT_EQ(sel.second, U'福');
  EXPECT_FALSE(sel.warning.empty());
}

TEST(SelectHeads, DuplicateHighestStillYieldsDistinctSecond) {
  const auto v = vocab_of(U"福春");
  const auto hp = table({{U'福', {0.9, 9, 10}}, {U'春', {0.1, 1, 10}}});
  const auto sel = select_heads(U"福福福春", hp, v);
  EXPECT_EQ(sel.first, U'福');
  EXPECT_EQ(sel.second, U'春');
  EXPECT_TRUE(sel.warning.empty());
}

TEST(SelectHeads, InputLengthAndUsability) {
  const auto v = vocab_of(U"甲乙");
  const auto hp = table({});
  EXPECT_THROW(select_heads(U"甲乙丙", hp, v), std::invalid_argument);
  EXPECT_THROW(select_heads(U"甲乙丙丁戊", hp, v), std::invalid_argument);
  EXPECT_THROW(select_heads(U"甲丙丁戊", hp, v), SelectionError);
  EXPECT_NO_THROW(select_heads(U"  甲乙丙丁\n", hp, v));
}

TEST(SelectHeads, DeterministicAndAlwaysInVocabulary) {
  const auto pairs = synthetic_couplets(60, 8);
  const auto v = build_vocab(pairs, 3);
  const auto hp = fit_head_model(collect_head_stats(pairs), 1.0);
  Rng rng(4);
  const std::u32string pool = U"天地山水风月花草春岁红绿金玉南北云雨新旧福寿年日家户门院龙虎欢乐明暗千万长短江海甲乙";
  for (int i = 0; i < 200; ++i) {
    std::u32string in;
    for (int k = 0; k < 4; ++k) in += pool[rng.below(pool.size())];
    try {
      const auto a = select_heads(in, hp, v);
      const auto b = select_heads(in, hp, v);
      EXPECT_EQ(a.first, b.first);
      EXPECT_EQ(a.second, b.second);
      EXPECT_FALSE(v.is_special(a.first_id));
      EXPECT_FALSE(v.is_special(a.second_id));
      HeadOptions opt{true, static_cast<std::uint64_t>(i)};
      const auto s = select_heads(in, hp, v, opt);
      EXPECT_TRUE(v.contains(s.first) && v.contains(s.second));
      EXPECT_EQ(select_heads(in, hp, v, opt).first, s.first);
    } catch (const SelectionError&) {
      std::size_t usable = 0;
      for (char32_t c : in) usable += v.contains(c);
      EXPECT_LT(usable, 2u);
    }
  }
}
