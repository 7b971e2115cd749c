#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "couplet/nn/gradcheck.hpp"
#include "couplet/s2s.hpp"
#include "couplet/synthetic.hpp"

using namespace couplet;

namespace {

S2SConfig tiny(CellKind cell, std::size_t vocab = 6, std::size_t hidden = 4) {
  S2SConfig c;
  c.cell = cell;
  c.layers = 2;
  c.hidden = hidden;
  c.embedding = 3;
  c.attention = 3;
  c.vocab = vocab;
  return c;
}

void zero_all(nn::ParamSet<double>& ps) {
  for (auto& [_, p] : ps) p.value.fill(0.0);
}

EncoderStates<double> manual_states(std::vector<std::vector<double>> s) {
  EncoderStates<double> enc;
  enc.states = std::move(s);
  return enc;
}

}  // namespace

class S2SCells : public ::testing::TestWithParam<CellKind> {};

TEST_P(S2SCells, EncodeYieldsOneStatePerPosition) {
  AttentionSeq2Seq<double> m(tiny(GetParam()), 1);
  const auto enc = m.encode({0, 1, 2, 3, 1});
  EXPECT_EQ(enc.states.size(), 5u);
  EXPECT_EQ(enc.keys.size(), 5u);
  for (const auto& s : enc.states) EXPECT_EQ(s.size(), 4u);
  EXPECT_THROW(m.encode({}), std::invalid_argument);
}

TEST_P(S2SCells, ZeroWeightsGiveZeroStates) {
  AttentionSeq2Seq<double> m(tiny(GetParam()), 1);
  zero_all(m.params());
  const auto enc = m.encode({0, 1, 2});
  for (const auto& s : enc.states)
    for (double v : s) EXPECT_EQ(v, 0.0);
  const auto ctx = m.attend(enc.final.top(), enc);
  const auto st = m.decode_step(m.decoder_initial_state(enc), 2, ctx);
  for (const auto& h : st.state.h)
    for (double v : h) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(st.logits.size(), 6u);
}

TEST_P(S2SCells, GradientMatchesFiniteDifferences) {
  AttentionSeq2Seq<double> m(tiny(GetParam()), 11);
  // Larger weights keep every gradient well above finite-difference noise.
  for (auto& [_, p] : m.params())
    for (auto& v : p.value.values) v *= 3.0;
  const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> data{
      {{0, 1, 2, 3, 1, 0}, {3, 2, 1, 0, 2, 3}}, {{2}, {1}}, {{1, 3}, {0, 0}}};
  auto& ps = m.params();
  const auto res = nn::grad_check(
      ps,
      [&] {
        double l = 0;
        for (const auto& [s, t] : data) l += m.sequence_loss(s, t);
        return l;
      },
      [&] {
        double l = 0;
        for (const auto& [s, t] : data) l += m.sequence_loss_and_grad(s, t, 1.0);
        return l;
      });
  EXPECT_LT(res.max_relative_error, 1e-3) << res.worst_parameter << "[" << res.worst_index << "]";
  EXPECT_EQ(res.checked, ps.parameter_count());
}

INSTANTIATE_TEST_SUITE_P(BothCells, S2SCells, ::testing::Values(CellKind::VanillaRnn, CellKind::Lstm),
                         [](const auto& info) { return std::string(nn::to_string(info.param)); });

TEST(Attend, SingleStateGetsAllWeight) {
  AttentionSeq2Seq<double> m(tiny(CellKind::Lstm, 6, 2), 3);
  const auto ctx = m.attend(std::vector<double>{0.3, -0.2}, manual_states({{0.5, -1.5}}));
  ASSERT_EQ(ctx.weights.size(), 1u);
  EXPECT_DOUBLE_EQ(ctx.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(ctx.context[0], 0.5);
  EXPECT_DOUBLE_EQ(ctx.context[1], -1.5);
}

TEST(Attend, ZeroScoringGivesMean) {
  AttentionSeq2Seq<double> m(tiny(CellKind::Lstm, 6, 2), 3);
  m.params().at("s2s.attn.v").value.fill(0.0);
  const auto ctx = m.attend(std::vector<double>{0.3, -0.2}, manual_states({{1, 0}, {0, 1}, {2, 2}, {-3, 1}}));
  for (double w : ctx.weights) EXPECT_DOUBLE_EQ(w, 0.25);
  EXPECT_DOUBLE_EQ(ctx.context[0], 0.0);
  EXPECT_DOUBLE_EQ(ctx.context[1], 1.0);
}

TEST(Attend, LogThreeVersusZeroGivesThreeToOne) {
  S2SConfig cfg = tiny(CellKind::Lstm, 6, 2);
  cfg.attention = 1;
  AttentionSeq2Seq<double> m(cfg, 3);
  // e_1 = v tanh(w) = ln 3 with tanh(w) = 1/2; e_2 = v tanh(0) = 0.
  m.params().at("s2s.attn.wh").value.fill(0.0);
  auto& ws = m.params().at("s2s.attn.ws").value;
  ws(0, 0) = std::atanh(0.5);
  ws(0, 1) = 0.0;
  m.params().at("s2s.attn.v").value.values[0] = 2.0 * std::log(3.0);
  const auto ctx = m.attend(std::vector<double>{0.7, 0.1}, manual_states({{1, 0}, {0, 1}}));
  EXPECT_NEAR(ctx.weights[0], 0.75, 1e-12);
  EXPECT_NEAR(ctx.weights[1], 0.25, 1e-12);
  EXPECT_NEAR(ctx.context[0], 0.75, 1e-12);
  EXPECT_NEAR(ctx.context[1], 0.25, 1e-12);
}

TEST(Attend, RejectsEmptyEncoder) {
  AttentionSeq2Seq<double> m(tiny(CellKind::Lstm), 3);
  EXPECT_THROW(m.attend(std::vector<double>(4, 0.0), EncoderStates<double>{}), std::invalid_argument);
  EXPECT_THROW(m.attend(std::vector<double>(3, 0.0), manual_states({{1, 2, 3, 4}})), ShapeError);
}

TEST(AttendProperty, WeightsOnSimplexAndContextIsConvexCombination) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    AttentionSeq2Seq<double> m(tiny(CellKind::Lstm, 6, 5), trial);
    const std::size_t n = 1 + rng.below(8);
    std::vector<std::vector<double>> states(n, std::vector<double>(5));
    for (auto& s : states)
      for (auto& v : s) v = rng.uniform(-2, 2);
    std::vector<double> q(5);
    for (auto& v : q) v = rng.uniform(-1, 1);
    const auto ctx = m.attend(q, manual_states(states));
    double sum = 0;
    for (double w : ctx.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    for (std::size_t d = 0; d < 5; ++d) {
      double expect = 0;
      for (std::size_t j = 0; j < n; ++j) expect += ctx.weights[j] * states[j][d];
      EXPECT_NEAR(ctx.context[d], expect, 1e-5);
    }
  }
}

TEST(AttendProperty, PermutationEquivariance) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionSeq2Seq<double> m(tiny(CellKind::VanillaRnn, 6, 4), trial);
    const std::size_t n = 2 + rng.below(6);
    std::vector<std::vector<double>> states(n, std::vector<double>(4));
    for (auto& s : states)
      for (auto& v : s) v = rng.uniform(-1, 1);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<std::vector<double>> permuted(n);
    for (std::size_t j = 0; j < n; ++j) permuted[j] = states[perm[j]];
    const std::vector<double> q{0.1, -0.4, 0.3, 0.8};
    const auto a = m.attend(q, manual_states(states));
    const auto b = m.attend(q, manual_states(permuted));
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(b.weights[j], a.weights[perm[j]], 1e-12);
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(a.context[d], b.context[d], 1e-12);
  }
}

TEST(S2SLoss, KeysFromEncodeMatchOnTheFlyKeys) {
  AttentionSeq2Seq<double> m(tiny(CellKind::Lstm), 4);
  auto enc = m.encode({0, 1, 2});
  const auto with = m.attend(enc.final.top(), enc);
  enc.keys.clear();
  const auto without = m.attend(enc.final.top(), enc);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(with.weights[j], without.weights[j], 1e-14);
}

TEST(S2SLoss, MatchesStepwiseDecoding) {
  AttentionSeq2Seq<double> m(tiny(CellKind::Lstm), 8);
  const std::vector<TokenId> src{0, 2, 1}, tgt{3, 1, 0};
  const auto enc = m.encode(src);
  auto state = m.decoder_initial_state(enc);
  double loss = 0;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    const auto ctx = m.attend(state.top(), enc);
    const auto st = m.decode_step(state, tgt[t], ctx);
    const auto p = nn::softmax<double>(st.logits);
    loss += nn::cross_entropy<double>(p, t + 1 < tgt.size() ? tgt[t + 1] : eos_of(6));
    state = st.state;
  }
  EXPECT_NEAR(m.sequence_loss(src, tgt), loss / 3.0, 1e-12);
}

TEST(S2SCheckpoint, LoadedModelInfersArchitecture) {
  AttentionSeq2Seq<float> m(tiny(CellKind::VanillaRnn, 7, 5), 2);
  auto copy = m.params();
  AttentionSeq2Seq<float> back(std::move(copy));
  EXPECT_EQ(back.config().cell, CellKind::VanillaRnn);
  EXPECT_EQ(back.config().hidden, 5u);
  EXPECT_EQ(back.config().attention_dim(), 3u);
  EXPECT_EQ(back.config().vocab, 7u);
  EXPECT_EQ(back.sequence_loss({0, 1}, {2, 3}), m.sequence_loss({0, 1}, {2, 3}));
}

namespace {

struct MappingData {
  Vocab vocab;
  std::vector<CoupletPair> pairs;
};

MappingData mapping_data(std::size_t n, std::uint64_t seed) {
  const auto text = synthetic_couplets(n, seed);
  MappingData d{build_vocab(text, 1), {}};
  d.pairs = encode_pairs(text, d.vocab);
  return d;
}

}  // namespace

TEST(TrainS2S, LearnsCharacterMapping) {
  const auto data = mapping_data(450, 7);
  S2SConfig cfg;
  cfg.vocab = data.vocab.size();
  cfg.hidden = 32;
  cfg.embedding = 16;
  TrainHyper hyper;
  hyper.epochs = 20;
  hyper.batch_size = 16;
  hyper.lr = 0.01;
  hyper.seed = 2;
  const std::vector<CoupletPair> train(data.pairs.begin(), data.pairs.begin() + 400);
  const std::vector<CoupletPair> held(data.pairs.begin() + 400, data.pairs.end());
  const auto res = train_s2s(train, held, cfg, hyper);
  EXPECT_GT(teacher_forced_accuracy(res.model, train), 0.95);
  EXPECT_GT(teacher_forced_accuracy(res.model, held), 0.95);
}

TEST(TrainS2S, ZeroEpochsAndDeterminism) {
  const auto data = mapping_data(12, 1);
  S2SConfig cfg;
  cfg.vocab = data.vocab.size();
  cfg.hidden = 8;
  cfg.embedding = 4;
  TrainHyper hyper;
  hyper.epochs = 0;
  hyper.seed = 4;
  const auto none = train_s2s(data.pairs, {}, cfg, hyper);
  AttentionSeq2Seq<float> fresh(cfg, 4);
  for (const auto& [name, p] : fresh.params()) EXPECT_EQ(p.value.values, none.model.params().at(name).value.values);

  hyper.epochs = 2;
  hyper.batch_size = 3;
  const auto a = train_s2s(data.pairs, data.pairs, cfg, hyper);
  const auto b = train_s2s(data.pairs, data.pairs, cfg, hyper);
  EXPECT_EQ(a.log.train_loss, b.log.train_loss);
  EXPECT_EQ(a.log.validation_loss, b.log.validation_loss);
}

namespace {

std::pair<std::vector<TokenId>, double> brute_force_fixed_length(const AttentionSeq2Seq<double>& m,
                                                                 const std::vector<TokenId>& src, TokenId head,
                                                                 std::size_t ngram) {
  const std::size_t V = m.vocab_size(), len = src.size();
  const TokenId eos = eos_of(V), unk = unk_of(V);
  const auto enc = m.encode(src);
  std::vector<TokenId> best;
  double best_lp = -std::numeric_limits<double>::infinity();
  auto repeated = [&](const std::vector<TokenId>& s) {
    for (std::size_t i = 0; i + ngram <= s.size(); ++i)
      for (std::size_t j = i + 1; j + ngram <= s.size(); ++j)
        if (std::equal(s.begin() + i, s.begin() + i + ngram, s.begin() + j)) return true;
    return false;
  };
  auto probs_after = [&](const RecurrentState<double>& st, TokenId tok) {
    const auto ctx = m.attend(st.top(), enc);
    auto out = m.decode_step(st, tok, ctx);
    return std::make_pair(out.state, nn::softmax<double>(out.logits));
  };
  std::function<void(std::vector<TokenId>&, const RecurrentState<double>&, const std::vector<double>&, double)> rec =
      [&](std::vector<TokenId>& seq, const RecurrentState<double>& st, const std::vector<double>& p, double lp) {
        if (seq.size() == len) {
          if (lp > best_lp) {
            best_lp = lp;
            best = seq;
          }
          return;
        }
        double mass = 0;
        for (TokenId t = 0; t < V; ++t)
          if (t != eos) mass += p[t];
        for (TokenId t = 0; t < V; ++t) {
          if (t == eos || t == unk) continue;
          seq.push_back(t);
          if (!repeated(seq)) {
            const auto [ns, np] = probs_after(st, t);
            rec(seq, ns, np, lp + std::log(p[t] / mass));
          }
          seq.pop_back();
        }
      };
  std::vector<TokenId> seq{head};
  const auto [s0, p0] = probs_after(m.decoder_initial_state(enc), head);
  rec(seq, s0, p0, 0.0);
  return {best, best_lp};
}

}  // namespace

TEST(GenerateSubsequent, ExhaustiveBeamMatchesFixedLengthArgmax) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    AttentionSeq2Seq<double> m(tiny(CellKind::Lstm, 5, 4), seed);
    const std::vector<TokenId> src{0, 1, 2, 1};
    cbs::BeamConfig beam;
    beam.beam_width = 64;
    beam.clusters = 1;
    const auto out = generate_subsequent(src, 2, m, beam);
    const auto [tokens, lp] = brute_force_fixed_length(m, src, 2, 2);
    ASSERT_FALSE(out.empty());
    EXPECT_EQ(out.front().tokens, tokens);
    EXPECT_NEAR(out.front().logprob, lp, 1e-9);
  }
}

TEST(GenerateSubsequent, ForcedLengthAndHeadForAllSeeds) {
  const auto data = mapping_data(30, 3);
  S2SConfig cfg;
  cfg.vocab = data.vocab.size();
  cfg.hidden = 12;
  cfg.embedding = 6;
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    AttentionSeq2Seq<float> m(cfg, seed);
    for (const auto& p : data.pairs) {
      if (rng.below(4) != 0) continue;
      const auto head = static_cast<TokenId>(rng.below(cfg.vocab - 2));
      cbs::BeamConfig beam;
      beam.seed = seed;
      const auto out = generate_subsequent(p.antecedent, head, m, beam);
      ASSERT_FALSE(out.empty());
      for (const auto& c : out) {
        EXPECT_EQ(c.tokens.size(), p.antecedent.size());
        EXPECT_EQ(c.tokens.front(), head);
      }
    }
  }
}

TEST(GenerateSubsequent, RejectsBadInput) {
  AttentionSeq2Seq<float> m(tiny(CellKind::Lstm), 1);
  EXPECT_THROW(generate_subsequent({0, 1}, unk_of(6), m, {}), std::invalid_argument);
  EXPECT_THROW(generate_subsequent({}, 0, m, {}), std::invalid_argument);
}
