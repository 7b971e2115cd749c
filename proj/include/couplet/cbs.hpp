#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "couplet/corpus.hpp"
#include "couplet/errors.hpp"
#include "couplet/rng.hpp"

namespace couplet::cbs {

/// A next-token distribution source. `advance(state, token)` consumes one
/// token and returns the new state together with log-probabilities for the
/// following token over the whole vocabulary.
template <class S>
concept Scorer = requires(const S& s, const typename S::State& st, TokenId tok) {
  { s.vocab_size() } -> std::convertible_to<std::size_t>;
  { s.initial_state() } -> std::convertible_to<typename S::State>;
  { s.advance(st, tok) } -> std::convertible_to<std::pair<typename S::State, std::vector<double>>>;
  { s.embedding(tok) };
};

struct BeamConfig {
  std::size_t beam_width = 4;
  std::size_t clusters = 2;
  std::size_t t_max = 32;
  std::size_t ngram_block = 2;
  bool length_normalize = false;
  bool backfill = true;  // refill slots left by clusters smaller than BW/K
  std::uint64_t seed = 0;

  void validate() const {
    if (beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
    if (clusters < 1 || clusters > beam_width)
      throw std::invalid_argument("cluster count must be in [1, beam width]");
    if (beam_width % clusters != 0)
      throw std::invalid_argument("beam width " + std::to_string(beam_width) + " is not a multiple of cluster count " +
                                  std::to_string(clusters));
    if (t_max < 1) throw std::invalid_argument("t_max must be >= 1");
    if (ngram_block < 2) throw std::invalid_argument("n-gram block order must be >= 2");
  }
};

/// Clause length limits, counted in tokens excluding `<eos>`. `<eos>` is
/// masked while the clause is shorter than min_len and forced once it reaches
/// max_len; masked distributions are renormalised over the allowed tokens.
struct LengthBounds {
  std::size_t min_len = 1;
  std::size_t max_len = 12;
  TokenId eos_id = 0;
  TokenId unk_id = 0;
};

template <class State>
struct Hypothesis {
  std::vector<TokenId> tokens;
  double logprob = 0;
  State state{};
  std::vector<double> next_logprobs;  // distribution after `tokens` (live hypotheses only)
  std::vector<double> mean_emb;
  bool complete = false;

  /// Clause tokens without the trailing `<eos>`.
  std::vector<TokenId> clause() const {
    return complete ? std::vector<TokenId>(tokens.begin(), tokens.end() - 1) : tokens;
  }
};

/// One child of a live hypothesis before it is materialised.
struct Candidate {
  std::size_t parent = 0;
  TokenId token = 0;
  std::vector<TokenId> tokens;
  double logprob = 0;
  std::vector<double> mean_emb;
  bool complete = false;
};

inline double sort_score(double logprob, std::size_t len, bool normalize) {
  return normalize ? logprob / static_cast<double>(std::max<std::size_t>(len, 1)) : logprob;
}

/// Strict order: higher score first, then lexicographically smaller tokens.
template <class A>
bool better(const A& a, const A& b, bool normalize) {
  const double sa = sort_score(a.logprob, a.tokens.size(), normalize);
  const double sb = sort_score(b.logprob, b.tokens.size(), normalize);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

inline void check_distribution(const std::vector<double>& logprobs, std::size_t vocab) {
  if (logprobs.size() != vocab)
    throw NumericError("scorer returned " + std::to_string(logprobs.size()) + " log-probabilities for vocab " +
                       std::to_string(vocab));
  double mass = 0;
  for (double lp : logprobs) {
    if (std::isnan(lp) || lp > 1e-9) throw NumericError("scorer returned an invalid log-probability");
    mass += std::exp(lp);
  }
  if (std::abs(mass - 1.0) > 1e-6) throw NumericError("scorer distribution sums to " + std::to_string(mass));
}

/// Applies the length rule to a raw next-token distribution for a clause of
/// `len` tokens and renormalises. Disallowed tokens get -inf.
inline std::vector<double> constrain(const std::vector<double>& logprobs, std::size_t len, const LengthBounds& b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> out(logprobs.size(), kNegInf);
  if (len >= b.max_len) {
    out[b.eos_id] = 0.0;
    return out;
  }
  double mass = 0;
  for (std::size_t i = 0; i < logprobs.size(); ++i)
    if (i != b.eos_id || len >= b.min_len) mass += std::exp(logprobs[i]);
  if (!(mass > 0)) return out;
  const double lm = std::log(mass);
  for (std::size_t i = 0; i < logprobs.size(); ++i)
    if (i != b.eos_id || len >= b.min_len) out[i] = logprobs[i] - lm;
  return out;
}

/// Expands every live hypothesis by its 2*BW most probable allowed tokens.
/// Tokens with zero probability are never proposed.
template <class S>
std::vector<Candidate> extend(const std::vector<Hypothesis<typename S::State>>& live, const S& scorer,
                              std::size_t beam_width, const LengthBounds& bounds) {
  std::vector<Candidate> pool;
  const std::size_t fan = 2 * beam_width;
  for (std::size_t h = 0; h < live.size(); ++h) {
    const auto& hyp = live[h];
    if (hyp.complete) throw std::invalid_argument("extend: hypothesis already complete");
    const auto lp = constrain(hyp.next_logprobs, hyp.tokens.size(), bounds);
    std::vector<TokenId> ids;
    for (TokenId t = 0; t < lp.size(); ++t)
      if (std::isfinite(lp[t])) ids.push_back(t);
    const std::size_t take = std::min(fan, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                      [&](TokenId a, TokenId b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
    ids.resize(take);
    const double n = static_cast<double>(hyp.tokens.size());
    for (TokenId t : ids) {
      Candidate c;
      c.parent = h;
      c.token = t;
      c.tokens = hyp.tokens;
      c.tokens.push_back(t);
      c.logprob = hyp.logprob + lp[t];
      c.complete = t == bounds.eos_id;
      const auto emb = scorer.embedding(t);
      c.mean_emb.resize(hyp.mean_emb.size());
      for (std::size_t d = 0; d < c.mean_emb.size(); ++d)
        c.mean_emb[d] = (hyp.mean_emb[d] * n + static_cast<double>(emb[d])) / (n + 1);
      pool.push_back(std::move(c));
    }
  }
  return pool;
}

/// True when the final n-gram of `tokens` also occurs earlier in `tokens`.
inline bool repeats_last_ngram(std::span<const TokenId> tokens, std::size_t n) {
  if (tokens.size() <= n) return false;
  const auto last = tokens.subspan(tokens.size() - n);
  for (std::size_t s = 0; s + n < tokens.size(); ++s)
    if (std::equal(last.begin(), last.end(), tokens.begin() + static_cast<std::ptrdiff_t>(s))) return true;
  return false;
}

/// Drops entries whose last n-gram repeats or that contain `unk_id`.
template <class Item>
void prune_invalid(std::vector<Item>& pool, std::size_t n, TokenId unk_id) {
  std::erase_if(pool, [&](const Item& it) {
    return repeats_last_ngram(it.tokens, n) || std::find(it.tokens.begin(), it.tokens.end(), unk_id) != it.tokens.end();
  });
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

/// Lloyd's k-means with k-means++ seeding. Returns a cluster index per point;
/// every cluster in [0, K) is non-empty when there are at least K points.
/// With fewer points than K each point is its own cluster.
inline std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& points, std::size_t K,
                                       std::uint64_t seed, std::size_t max_iter = 20, double tol = 1e-6) {
  const std::size_t N = points.size();
  if (K == 0) throw std::invalid_argument("kmeans: K must be positive");
  std::vector<std::size_t> assign(N, 0);
  if (N <= K) {
    std::iota(assign.begin(), assign.end(), std::size_t{0});
    return assign;
  }
  if (K == 1) return assign;

  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  std::vector<bool> chosen(N, false);
  std::size_t first = rng.below(N);
  centers.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(N);
  while (centers.size() < K) {
    double total = 0;
    for (std::size_t i = 0; i < N; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, squared_distance(points[i], c));
      d2[i] = chosen[i] ? 0.0 : best;
      total += d2[i];
    }
    std::size_t pick = N;
    if (total > 0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < N; ++i) {
        if (d2[i] <= 0) continue;
        pick = i;
        if (r < d2[i]) break;
        r -= d2[i];
      }
    } else {
      for (std::size_t i = 0; i < N && pick == N; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
  }

  const std::size_t dim = points[0].size();
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < N; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) {
        const double d = squared_distance(points[i], centers[k]);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      assign[i] = best;
    }
    std::vector<std::size_t> count(K, 0);
    for (auto a : assign) ++count[a];
    // Re-seed empty clusters with the point farthest from its centroid,
    // taken from a cluster that can spare it.
    for (std::size_t k = 0; k < K; ++k) {
      if (count[k] != 0) continue;
      std::size_t far = N;
      double fd = -1;
      for (std::size_t i = 0; i < N; ++i) {
        if (count[assign[i]] < 2) continue;
        const double d = squared_distance(points[i], centers[assign[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      --count[assign[far]];
      assign[far] = k;
      count[k] = 1;
    }
    double moved = 0;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> c(dim, 0.0);
      for (std::size_t i = 0; i < N; ++i)
        if (assign[i] == k)
          for (std::size_t d = 0; d < dim; ++d) c[d] += points[i][d];
      for (auto& v : c) v /= static_cast<double>(count[k]);
      moved = std::max(moved, std::sqrt(squared_distance(c, centers[k])));
      centers[k] = std::move(c);
    }
    if (moved < tol) break;
  }
  return assign;
}

template <class State>
struct DecodeOutput {
  std::vector<Hypothesis<State>> hypotheses;  // complete, best first
  std::size_t steps = 0;
  std::vector<std::size_t> survivors;  // live + newly completed per step
};

/// Cluster-based beam search. Each step: extend every live hypothesis by its
/// top 2*BW tokens, prune repeated n-grams and `<unk>`, cluster the pool by
/// mean token embedding into K groups and keep the best BW/K of each group.
/// With `backfill`, slots left by groups smaller than BW/K go to the best
/// remaining candidates so a step keeps min(BW, pool) survivors.
/// Completed survivors accumulate until there are BW of them, no live
/// hypotheses remain, or t_max steps have run.
template <Scorer S>
DecodeOutput<typename S::State> cbs_decode(const std::vector<TokenId>& init, const S& scorer, const BeamConfig& cfg,
                                           const LengthBounds& bounds) {
  using State = typename S::State;
  cfg.validate();
  if (init.empty()) throw std::invalid_argument("cbs_decode: empty initial sequence");
  if (bounds.min_len > bounds.max_len) throw std::invalid_argument("cbs_decode: min_len > max_len");
  if (init.size() > bounds.max_len) throw std::invalid_argument("cbs_decode: initial sequence longer than max_len");

  Hypothesis<State> root;
  root.state = scorer.initial_state();
  for (TokenId t : init) {
    if (t >= scorer.vocab_size()) throw std::invalid_argument("cbs_decode: initial token out of range");
    auto [st, lp] = scorer.advance(root.state, t);
    root.state = std::move(st);
    root.next_logprobs = std::move(lp);
    const auto emb = scorer.embedding(t);
    if (root.mean_emb.empty()) root.mean_emb.assign(emb.size(), 0.0);
    const double n = static_cast<double>(root.tokens.size());
    for (std::size_t d = 0; d < root.mean_emb.size(); ++d)
      root.mean_emb[d] = (root.mean_emb[d] * n + static_cast<double>(emb[d])) / (n + 1);
    root.tokens.push_back(t);
  }
  check_distribution(root.next_logprobs, scorer.vocab_size());

  DecodeOutput<State> out;
  std::vector<Hypothesis<State>> live{std::move(root)};
  std::vector<Hypothesis<State>>& done = out.hypotheses;
  const std::size_t per_cluster = cfg.beam_width / cfg.clusters;
  const bool norm = cfg.length_normalize;

  while (out.steps < cfg.t_max && done.size() < cfg.beam_width && !live.empty()) {
    auto pool = extend(live, scorer, cfg.beam_width, bounds);
    prune_invalid(pool, cfg.ngram_block, bounds.unk_id);
    ++out.steps;

    std::vector<std::vector<double>> points;
    points.reserve(pool.size());
    for (const auto& c : pool) points.push_back(c.mean_emb);
    const auto assign = kmeans(points, cfg.clusters, Rng::mix(cfg.seed, out.steps));
    const std::size_t groups = pool.size() <= cfg.clusters ? pool.size() : cfg.clusters;

    std::vector<const Candidate*> keep;
    std::vector<const Candidate*> spare;
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<const Candidate*> members;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (assign[i] == g) members.push_back(&pool[i]);
      std::sort(members.begin(), members.end(), [&](const Candidate* a, const Candidate* b) { return better(*a, *b, norm); });
      const auto cut = members.begin() + static_cast<std::ptrdiff_t>(std::min(per_cluster, members.size()));
      keep.insert(keep.end(), members.begin(), cut);
      spare.insert(spare.end(), cut, members.end());
    }
    if (cfg.backfill && keep.size() < cfg.beam_width && !spare.empty()) {
      std::sort(spare.begin(), spare.end(), [&](const Candidate* a, const Candidate* b) { return better(*a, *b, norm); });
      const std::size_t extra = std::min(cfg.beam_width - keep.size(), spare.size());
      keep.insert(keep.end(), spare.begin(), spare.begin() + static_cast<std::ptrdiff_t>(extra));
    }
    std::sort(keep.begin(), keep.end(), [&](const Candidate* a, const Candidate* b) { return better(*a, *b, norm); });
    out.survivors.push_back(keep.size());

    std::vector<Hypothesis<State>> next;
    for (const Candidate* c : keep) {
      Hypothesis<State> h;
      h.tokens = c->tokens;
      h.logprob = c->logprob;
      h.mean_emb = c->mean_emb;
      h.complete = c->complete;
      if (h.complete) {
        done.push_back(std::move(h));
      } else {
        auto [st, lp] = scorer.advance(live[c->parent].state, c->token);
        check_distribution(lp, scorer.vocab_size());
        h.state = std::move(st);
        h.next_logprobs = std::move(lp);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  if (done.empty()) throw DecodeError("beam search produced no complete hypothesis");
  std::sort(done.begin(), done.end(), [&](const auto& a, const auto& b) { return better(a, b, norm); });
  return out;
}

}  // namespace couplet::cbs
