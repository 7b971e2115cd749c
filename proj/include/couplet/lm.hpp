#pragma once

#include <optional>
#include <span>
#include <vector>

#include "couplet/cbs.hpp"
#include "couplet/corpus.hpp"
#include "couplet/nn/params.hpp"
#include "couplet/nn/recurrent.hpp"
#include "couplet/train.hpp"

namespace couplet {

using nn::CellKind;
using nn::RecurrentState;

/// Model ids follow the Vocab layout: the last two ids are `<unk>` and `<eos>`.
inline TokenId unk_of(std::size_t vocab_size) { return static_cast<TokenId>(vocab_size - 2); }
inline TokenId eos_of(std::size_t vocab_size) { return static_cast<TokenId>(vocab_size - 1); }

struct LMConfig {
  CellKind cell = CellKind::Lstm;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t embedding = 32;
  std::size_t vocab = 0;
  std::size_t min_len = 5;
  std::size_t max_len = 12;

  void validate() const {
    if (layers < 1) throw std::invalid_argument("LM needs at least one layer");
    if (hidden < 1 || embedding < 1) throw std::invalid_argument("LM hidden and embedding sizes must be positive");
    if (vocab < 3) throw std::invalid_argument("LM vocabulary must hold at least one character plus <unk>/<eos>");
    if (min_len < 1 || min_len > max_len) throw std::invalid_argument("LM needs 1 <= min_len <= max_len");
  }
};

template <class T>
struct ModelStep {
  RecurrentState<T> state;
  std::vector<T> logits;
};

/// Character-level recurrent LM: embed -> stacked cells -> affine -> softmax.
template <class T = float>
class LanguageModel {
 public:
  LanguageModel(const LMConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    params_.add("lm.embed", cfg.vocab, cfg.embedding);
    nn::RecurrentStack<T>::declare(params_, "lm.rnn", cfg.cell, cfg.layers, cfg.embedding, cfg.hidden);
    params_.add("lm.out.w", cfg.vocab, cfg.hidden);
    params_.add("lm.out.b", cfg.vocab, 1);
    Rng rng(seed);
    params_.init_uniform(rng);
    bind();
  }

  /// Adopts loaded parameters; architecture is read off the tensor shapes.
  LanguageModel(nn::ParamSet<T> params, std::size_t min_len = 5, std::size_t max_len = 12)
      : params_(std::move(params)) {
    bind();
    cfg_.cell = stack_->kind();
    cfg_.layers = stack_->layers();
    cfg_.hidden = stack_->hidden();
    cfg_.embedding = embed_->value.cols;
    cfg_.vocab = embed_->value.rows;
    cfg_.min_len = min_len;
    cfg_.max_len = max_len;
    cfg_.validate();
    if (stack_->input_dim() != cfg_.embedding || out_w_->value.rows != cfg_.vocab ||
        out_w_->value.cols != cfg_.hidden || out_b_->value.rows != cfg_.vocab)
      throw ShapeError("language model checkpoint has inconsistent shapes");
  }

  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;
  LanguageModel(LanguageModel&&) noexcept = default;
  LanguageModel& operator=(LanguageModel&&) noexcept = default;

  const LMConfig& config() const { return cfg_; }
  LMConfig& config() { return cfg_; }
  std::size_t vocab_size() const { return cfg_.vocab; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  RecurrentState<T> initial_state() const { return stack_->zero_state(); }

  std::span<const T> embedding(TokenId id) const { return embed_->value.row(check(id)); }

  /// s_i = f(state, emb(token)); logits from the top layer.
  ModelStep<T> step(const RecurrentState<T>& state, TokenId token) const {
    ModelStep<T> out;
    out.state = stack_->step(state, embedding(token));
    out.logits = nn::affine<T>(out.state.top(), out_w_->value, out_b_->value.values);
    return out;
  }

  /// Mean teacher-forced cross-entropy over clause[1:] + <eos>.
  double sequence_loss(const std::vector<TokenId>& clause) const { return run(clause, 0.0, false); }

  /// As sequence_loss, and accumulates scale * gradient into params().
  double sequence_loss_and_grad(const std::vector<TokenId>& clause, double scale) { return run(clause, scale, true); }

 private:
  void bind() {
    embed_ = &params_.at("lm.embed");
    out_w_ = &params_.at("lm.out.w");
    out_b_ = &params_.at("lm.out.b");
    stack_.emplace(params_, "lm.rnn");
  }

  TokenId check(TokenId id) const {
    if (id >= embed_->value.rows)
      throw std::invalid_argument("token " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(embed_->value.rows));
    return id;
  }

  double run(const std::vector<TokenId>& clause, double scale, bool grad) const {
    if (clause.empty()) throw std::invalid_argument("sequence loss: empty clause");
    const std::size_t n = clause.size();
    const TokenId eos = eos_of(cfg_.vocab);
    std::vector<nn::StepCache<T>> caches(grad ? n : 0);
    std::vector<std::vector<T>> dlogits(grad ? n : 0);
    std::vector<std::vector<T>> tops(grad ? n : 0);
    auto state = initial_state();
    double loss = 0;
    for (std::size_t t = 0; t < n; ++t) {
      state = stack_->step(state, embedding(clause[t]), grad ? &caches[t] : nullptr);
      const auto logits = nn::affine<T>(state.top(), out_w_->value, out_b_->value.values);
      const auto probs = nn::softmax<T>(logits);
      const TokenId target = t + 1 < n ? clause[t + 1] : eos;
      loss += nn::cross_entropy<T>(probs, check(target));
      if (grad) {
        dlogits[t] = probs;
        dlogits[t][target] -= T(1);
        const T s = static_cast<T>(scale / static_cast<double>(n));
        for (auto& v : dlogits[t]) v *= s;
        tops[t] = state.top();
      }
    }
    if (grad) {
      auto dstate = stack_->zero_state();
      for (std::size_t t = n; t-- > 0;) {
        nn::outer_acc<T>(out_w_->grad, dlogits[t], tops[t]);
        for (std::size_t v = 0; v < cfg_.vocab; ++v) out_b_->grad.values[v] += dlogits[t][v];
        std::vector<T> dh(cfg_.hidden, T(0));
        nn::matvec_t_acc<T>(out_w_->value, dlogits[t], dh);
        const auto dx = stack_->backward_step(caches[t], dh, dstate);
        auto row = embed_->grad.row(clause[t]);
        for (std::size_t d = 0; d < row.size(); ++d) row[d] += dx[d];
      }
    }
    return loss / static_cast<double>(n);
  }

  LMConfig cfg_;
  nn::ParamSet<T> params_;
  nn::Param<T>* embed_ = nullptr;
  nn::Param<T>* out_w_ = nullptr;
  nn::Param<T>* out_b_ = nullptr;
  std::optional<nn::RecurrentStack<T>> stack_;
};

/// Adapts a LanguageModel to the beam-search scorer interface.
template <class T>
class LmScorer {
 public:
  using State = RecurrentState<T>;
  explicit LmScorer(const LanguageModel<T>& model) : model_(model) {}

  std::size_t vocab_size() const { return model_.vocab_size(); }
  State initial_state() const { return model_.initial_state(); }
  std::span<const T> embedding(TokenId id) const { return model_.embedding(id); }
  std::pair<State, std::vector<double>> advance(const State& s, TokenId token) const {
    auto st = model_.step(s, token);
    return {std::move(st.state), nn::log_softmax<T>(st.logits)};
  }

 private:
  const LanguageModel<T>& model_;
};

template <class T>
struct LmTrainResult {
  LanguageModel<T> model;
  TrainLog log;
};

/// Trains on antecedent clauses.
template <class T = float>
LmTrainResult<T> train_lm(const std::vector<CoupletPair>& train, const std::vector<CoupletPair>& validation,
                          const LMConfig& cfg, const TrainHyper& hyper) {
  LanguageModel<T> model(cfg, hyper.seed);
  std::vector<std::vector<TokenId>> tr, va;
  for (const auto& p : train) tr.push_back(p.antecedent);
  for (const auto& p : validation) va.push_back(p.antecedent);
  auto log = run_training(
      model.params(), tr, va, hyper,
      [&](const std::vector<TokenId>& c, double scale) { return model.sequence_loss_and_grad(c, scale); },
      [&](const std::vector<TokenId>& c) { return model.sequence_loss(c); });
  return {std::move(model), std::move(log)};
}

struct ClauseCandidate {
  std::vector<TokenId> tokens;  // without <eos>
  double logprob = 0;
};

template <class State>
std::vector<ClauseCandidate> to_candidates(const std::vector<cbs::Hypothesis<State>>& hyps) {
  std::vector<ClauseCandidate> out;
  out.reserve(hyps.size());
  for (const auto& h : hyps) out.push_back({h.clause(), h.logprob});
  return out;
}

/// Beam-searches antecedent clauses that start with `head`, best first.
template <class T>
std::vector<ClauseCandidate> generate_antecedent(TokenId head, const LanguageModel<T>& model,
                                                 const cbs::BeamConfig& beam) {
  const auto& cfg = model.config();
  if (head >= model.vocab_size() || head >= unk_of(model.vocab_size()))
    throw std::invalid_argument("generate_antecedent: head must be a regular character id");
  cbs::LengthBounds bounds{cfg.min_len, cfg.max_len, eos_of(cfg.vocab), unk_of(cfg.vocab)};
  LmScorer<T> scorer(model);
  return to_candidates(cbs::cbs_decode(std::vector<TokenId>{head}, scorer, beam, bounds).hypotheses);
}

}  // namespace couplet
