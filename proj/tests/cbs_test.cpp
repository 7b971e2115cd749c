#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "couplet/cbs.hpp"
#include "couplet/eval.hpp"
#include "support/toy_scorers.hpp"

using namespace couplet;
using namespace couplet::cbs;
using couplet::testing::BimodalScorer;
using couplet::testing::HashScorer;

namespace {

/// Always emits token 1 with probability 1.
struct CertainScorer {
  using State = int;
  std::vector<double> emb{0.0};
  std::size_t vocab_size() const { return 4; }
  State initial_state() const { return 0; }
  std::span<const double> embedding(TokenId) const { return emb; }
  std::pair<State, std::vector<double>> advance(State s, TokenId) const {
    const double ninf = -std::numeric_limits<double>::infinity();
    return {s + 1, {ninf, 0.0, ninf, ninf}};
  }
};

/// Returns a vector that is not a distribution.
struct BrokenScorer {
  using State = int;
  std::vector<double> emb{0.0};
  std::size_t vocab_size() const { return 3; }
  State initial_state() const { return 0; }
  std::span<const double> embedding(TokenId) const { return emb; }
  std::pair<State, std::vector<double>> advance(State s, TokenId) const { return {s, {0.0, 0.0, 0.0}}; }
};

template <class S>
Hypothesis<typename S::State> root(const S& scorer, TokenId first) {
  Hypothesis<typename S::State> h;
  auto [st, lp] = scorer.advance(scorer.initial_state(), first);
  h.tokens = {first};
  h.state = st;
  h.next_logprobs = lp;
  const auto e = scorer.embedding(first);
  h.mean_emb.assign(e.begin(), e.end());
  return h;
}

}  // namespace

TEST(Extend, OneHypothesisWidthTwoGivesFourChildren) {
  HashScorer s(8, 1);
  const std::vector live{root(s, 0)};
  const LengthBounds b{1, 10, 7, 6};
  const auto pool = extend(live, s, 2, b);
  ASSERT_EQ(pool.size(), 4u);
  for (const auto& c : pool) EXPECT_LE(c.logprob, live[0].logprob);
  // Top four by probability, best first.
  for (std::size_t i = 1; i < pool.size(); ++i) EXPECT_GE(pool[i - 1].logprob, pool[i].logprob);
}

TEST(Extend, CertainScorerYieldsSingleChildAtSameLogprob) {
  CertainScorer s;
  const std::vector live{root(s, 1)};
  const auto pool = extend(live, s, 3, LengthBounds{1, 10, 3, 2});
  ASSERT_EQ(pool.size(), 1u);
  EXPECT_EQ(pool[0].token, 1u);
  EXPECT_EQ(pool[0].logprob, 0.0);
}

TEST(Extend, ChildLogprobsNeverExceedParent) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HashScorer s(9, seed);
    auto h = root(s, 2);
    h.logprob = -1.25;
    const auto pool = extend(std::vector{h}, s, 4, LengthBounds{1, 10, 8, 7});
    for (const auto& c : pool) EXPECT_LE(c.logprob, h.logprob);
  }
}

TEST(Extend, MeanEmbeddingIsRunningMean) {
  HashScorer s(6, 3, 4);
  auto h = root(s, 1);
  const auto pool = extend(std::vector{h}, s, 3, LengthBounds{1, 10, 5, 4});
  for (const auto& c : pool)
    for (std::size_t d = 0; d < 4; ++d)
      EXPECT_NEAR(c.mean_emb[d], (s.embedding(1)[d] + s.embedding(c.token)[d]) / 2, 1e-15);
}

TEST(Extend, LengthRuleMasksAndForcesEos) {
  HashScorer s(5, 4);
  auto h = root(s, 0);
  const LengthBounds b{3, 4, 4, 3};
  for (const auto& c : extend(std::vector{h}, s, 4, b)) EXPECT_NE(c.token, 4u);
  h.tokens = {0, 1, 2, 0};
  const auto forced = extend(std::vector{h}, s, 4, b);
  ASSERT_EQ(forced.size(), 1u);
  EXPECT_EQ(forced[0].token, 4u);
  EXPECT_EQ(forced[0].logprob, h.logprob);
  EXPECT_TRUE(forced[0].complete);
}

TEST(Extend, NonDistributionIsNumericError) {
  BrokenScorer s;
  EXPECT_THROW(cbs_decode({0}, s, BeamConfig{}, LengthBounds{1, 3, 2, 1}), NumericError);
}

TEST(Prune, RepeatedBigramAndUnk) {
  struct Item {
    std::vector<TokenId> tokens;
  };
  std::vector<Item> pool{{{1, 2, 1, 2}}, {{1, 2, 3, 4}}, {{1, 9, 3}}, {{5, 5, 5}}, {{1, 2, 2, 1}}};
  prune_invalid(pool, 2, 9);
  ASSERT_EQ(pool.size(), 2u);
  EXPECT_EQ(pool[0].tokens, (std::vector<TokenId>{1, 2, 3, 4}));
  EXPECT_EQ(pool[1].tokens, (std::vector<TokenId>{1, 2, 2, 1}));
}

TEST(Prune, TrigramOrder) {
  const std::vector<TokenId> a{1, 2, 1, 2};
  EXPECT_FALSE(repeats_last_ngram(a, 3));
  const std::vector<TokenId> b{1, 2, 3, 1, 2, 3};
  EXPECT_TRUE(repeats_last_ngram(b, 3));
}

TEST(KMeans, SingleClusterAndSingletons) {
  const std::vector<std::vector<double>> pts{{0, 0}, {1, 1}, {5, 5}, {0.5, 0.2}};
  for (auto a : kmeans(pts, 1, 3)) EXPECT_EQ(a, 0u);
  const auto all = kmeans(pts, 4, 3);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 4u);
  const auto fewer = kmeans({{1.0}, {2.0}}, 3, 1);
  EXPECT_EQ(fewer, (std::vector<std::size_t>{0, 1}));
}

TEST(KMeans, RecoversSeparatedBlobs) {
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::vector<std::vector<double>> pts;
    std::vector<int> truth;
    for (int i = 0; i < 30; ++i) {
      const int g = static_cast<int>(rng.below(3));
      pts.push_back({g * 100.0 + rng.uniform(-1, 1), (g == 1 ? 50.0 : 0.0) + rng.uniform(-1, 1)});
      truth.push_back(g);
    }
    const auto a = kmeans(pts, 3, seed);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = 0; j < pts.size(); ++j) EXPECT_EQ(truth[i] == truth[j], a[i] == a[j]);
  }
}

TEST(KMeans, NoEmptyClusterOnDuplicatePoints) {
  const std::vector<std::vector<double>> pts{{1, 1}, {1, 1}, {1, 1}, {1, 1}, {2, 2}};
  const auto a = kmeans(pts, 3, 0);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 3u);
}

TEST(BeamConfig, Validation) {
  BeamConfig c;
  c.beam_width = 6;
  c.clusters = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.clusters = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.clusters = 3;
  EXPECT_NO_THROW(c.validate());
  c.ngram_block = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(CbsDecode, ExhaustiveWidthFindsGlobalArgmax) {
  // Vocabulary {a, b, <eos>}; no <unk> in range; clauses of 1..3 tokens.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HashScorer s(3, seed);
    const LengthBounds b{1, 3, 2, 3};
    BeamConfig cfg;
    cfg.beam_width = 27;
    cfg.clusters = 1;
    cfg.t_max = 3;
    cfg.ngram_block = 4;
    const auto out = cbs_decode({0}, s, cfg, b);
    const auto all = couplet::testing::enumerate_all({0}, s, 3, 4, b);
    ASSERT_FALSE(all.empty());
    EXPECT_EQ(out.hypotheses.front().tokens, all.front().tokens);
    EXPECT_NEAR(out.hypotheses.front().logprob, all.front().logprob, 1e-12);
    EXPECT_EQ(out.hypotheses.size(), all.size());
  }
}

TEST(CbsDecode, SingleClusterEqualsVanillaBeam) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HashScorer s(7, 100 + seed, 3, 0.1);
    const LengthBounds b{3, 6, 6, 5};
    BeamConfig cfg;
    cfg.beam_width = 1 + seed % 5;
    cfg.clusters = 1;
    cfg.t_max = 8;
    const auto cbs = cbs_decode({static_cast<TokenId>(seed % 5)}, s, cfg, b);
    const auto ref = couplet::testing::vanilla_beam({static_cast<TokenId>(seed % 5)}, s, cfg.beam_width, cfg.t_max,
                                                    cfg.ngram_block, b);
    ASSERT_EQ(cbs.hypotheses.size(), ref.size()) << "seed " << seed;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(cbs.hypotheses[i].tokens, ref[i].tokens);
      EXPECT_NEAR(cbs.hypotheses[i].logprob, ref[i].logprob, 1e-12);
    }
  }
}

TEST(CbsDecode, BimodalFixtureCoversBothModesOnlyWithClusters) {
  BimodalScorer s;
  const LengthBounds b{4, 4, BimodalScorer::kEos, BimodalScorer::kUnk};
  auto run = [&](std::size_t K, std::uint64_t seed) {
    BeamConfig cfg;
    cfg.beam_width = 4;
    cfg.clusters = K;
    cfg.seed = seed;
    const auto out = cbs_decode({BimodalScorer::kStart}, s, cfg, b);
    std::set<int> m;
    std::vector<std::vector<TokenId>> clauses;
    for (const auto& h : out.hypotheses) {
      m.insert(BimodalScorer::mode(h.tokens[1]));
      clauses.push_back(h.clause());
    }
    return std::make_pair(m, distinct_n(clauses, 2));
  };
  const auto [one, d1] = run(1, 0);
  EXPECT_EQ(one.size(), 1u);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [four, d4] = run(4, seed);
    EXPECT_EQ(four, (std::set<int>{0, 1})) << "seed " << seed;
    EXPECT_GT(d4, d1) << "seed " << seed;
  }
}

TEST(CbsDecode, InvariantsOverRandomScorers) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    HashScorer s(9, seed, 3, 0.15);
    BeamConfig cfg;
    cfg.beam_width = 4;
    cfg.clusters = seed % 2 ? 2 : 4;
    cfg.seed = seed;
    const LengthBounds b{3, 7, 8, 7};
    const auto out = cbs_decode({1}, s, cfg, b);
    for (auto n : out.survivors) EXPECT_LE(n, cfg.beam_width);
    for (std::size_t i = 0; i < out.hypotheses.size(); ++i) {
      const auto& h = out.hypotheses[i];
      EXPECT_TRUE(h.complete);
      EXPECT_EQ(h.tokens.back(), b.eos_id);
      EXPECT_EQ(std::count(h.tokens.begin(), h.tokens.end(), b.unk_id), 0);
      EXPECT_FALSE(couplet::testing::has_repeat(h.tokens, cfg.ngram_block));
      const auto c = h.clause();
      EXPECT_GE(c.size(), b.min_len);
      EXPECT_LE(c.size(), b.max_len);
      EXPECT_LE(h.logprob, 0.0);
      if (i) EXPECT_GE(out.hypotheses[i - 1].logprob, h.logprob);
    }
    const auto again = cbs_decode({1}, s, cfg, b);
    ASSERT_EQ(again.hypotheses.size(), out.hypotheses.size());
    for (std::size_t i = 0; i < out.hypotheses.size(); ++i)
      EXPECT_EQ(again.hypotheses[i].tokens, out.hypotheses[i].tokens);
  }
}

TEST(CbsDecode, NoCompleteHypothesisIsDecodeError) {
  HashScorer s(5, 2);
  BeamConfig cfg;
  cfg.t_max = 2;
  EXPECT_THROW(cbs_decode({0}, s, cfg, LengthBounds{6, 8, 4, 3}), DecodeError);
}

TEST(CbsDecode, RejectsBadArguments) {
  HashScorer s(5, 2);
  EXPECT_THROW(cbs_decode({}, s, BeamConfig{}, LengthBounds{1, 3, 4, 3}), std::invalid_argument);
  EXPECT_THROW(cbs_decode({0}, s, BeamConfig{}, LengthBounds{4, 3, 4, 3}), std::invalid_argument);
}

TEST(CbsDecode, BackfillKeepsFullBeamAtForcedEnd) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HashScorer s(12, 300 + seed);
    const LengthBounds b{5, 5, 11, 10};
    BeamConfig cfg;
    cfg.beam_width = 4;
    cfg.clusters = 2;
    cfg.seed = seed;
    const auto out = cbs_decode({0}, s, cfg, b);
    EXPECT_EQ(out.hypotheses.size(), 4u) << "seed " << seed;
    for (auto n : out.survivors) EXPECT_EQ(n, 4u);
  }
}

TEST(CbsDecode, StrictModeNeverExceedsClusterQuota) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HashScorer s(12, 300 + seed);
    BeamConfig cfg;
    cfg.beam_width = 4;
    cfg.clusters = 2;
    cfg.backfill = false;
    cfg.seed = seed;
    const auto out = cbs_decode({0}, s, cfg, LengthBounds{5, 5, 11, 10});
    for (auto n : out.survivors) EXPECT_LE(n, 4u);
    EXPECT_LE(out.hypotheses.size(), 4u);
  }
}
