#pragma once

#include <optional>
#include <span>
#include <vector>

#include "couplet/lm.hpp"

namespace couplet {

struct S2SConfig {
  CellKind cell = CellKind::Lstm;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t embedding = 32;
  std::size_t attention = 0;  // 0 = same as hidden
  std::size_t vocab = 0;

  std::size_t attention_dim() const { return attention ? attention : hidden; }

  void validate() const {
    if (layers < 1) throw std::invalid_argument("S2S needs at least one layer");
    if (hidden < 1 || embedding < 1) throw std::invalid_argument("S2S hidden and embedding sizes must be positive");
    if (vocab < 3) throw std::invalid_argument("S2S vocabulary must hold at least one character plus <unk>/<eos>");
  }
};

/// Top-layer encoder outputs s_1..s_m plus the final full state.
template <class T>
struct EncoderStates {
  std::vector<std::vector<T>> states;
  std::vector<std::vector<T>> keys;  // W_s s_j, filled by encode()
  RecurrentState<T> final;
  std::vector<TokenId> source;
};

template <class T>
struct AttnContext {
  std::vector<T> weights;
  std::vector<T> context;
};

/// Attention encoder-decoder.
///
///   e_tj = v . tanh(W_h h_{t-1} + W_s s_j),  a_t = softmax(e_t),  v_t = sum_j a_tj s_j
///   h_t  = cell(h_{t-1}, [emb(C_{t-1}); v_t])
///
/// The context enters the first decoder layer only; h_{t-1} in the score is
/// the previous top-layer output. The decoder starts from the encoder's
/// final state (all layers), so both stacks share layer count and width.
template <class T = float>
class AttentionSeq2Seq {
 public:
  AttentionSeq2Seq(const S2SConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t A = cfg.attention_dim();
    params_.add("s2s.enc.embed", cfg.vocab, cfg.embedding);
    nn::RecurrentStack<T>::declare(params_, "s2s.enc.rnn", cfg.cell, cfg.layers, cfg.embedding, cfg.hidden);
    params_.add("s2s.dec.embed", cfg.vocab, cfg.embedding);
    nn::RecurrentStack<T>::declare(params_, "s2s.dec.rnn", cfg.cell, cfg.layers, cfg.embedding + cfg.hidden,
                                   cfg.hidden);
    params_.add("s2s.attn.wh", A, cfg.hidden);
    params_.add("s2s.attn.ws", A, cfg.hidden);
    params_.add("s2s.attn.v", A, 1);
    params_.add("s2s.out.w", cfg.vocab, cfg.hidden);
    params_.add("s2s.out.b", cfg.vocab, 1);
    Rng rng(seed);
    params_.init_uniform(rng);
    bind();
  }

  explicit AttentionSeq2Seq(nn::ParamSet<T> params) : params_(std::move(params)) {
    bind();
    cfg_.cell = enc_->kind();
    cfg_.layers = enc_->layers();
    cfg_.hidden = enc_->hidden();
    cfg_.embedding = enc_embed_->value.cols;
    cfg_.vocab = enc_embed_->value.rows;
    cfg_.attention = attn_v_->value.rows;
    cfg_.validate();
    const std::size_t A = cfg_.attention, H = cfg_.hidden;
    const bool ok = dec_->kind() == cfg_.cell && dec_->layers() == cfg_.layers && dec_->hidden() == H &&
                    dec_->input_dim() == cfg_.embedding + H && enc_->input_dim() == cfg_.embedding &&
                    dec_embed_->value.rows == cfg_.vocab && dec_embed_->value.cols == cfg_.embedding &&
                    attn_wh_->value.rows == A && attn_wh_->value.cols == H && attn_ws_->value.rows == A &&
                    attn_ws_->value.cols == H && attn_v_->value.cols == 1 && out_w_->value.rows == cfg_.vocab &&
                    out_w_->value.cols == H && out_b_->value.rows == cfg_.vocab;
    if (!ok) throw ShapeError("seq2seq checkpoint has inconsistent shapes");
  }

  AttentionSeq2Seq(const AttentionSeq2Seq&) = delete;
  AttentionSeq2Seq& operator=(const AttentionSeq2Seq&) = delete;
  AttentionSeq2Seq(AttentionSeq2Seq&&) noexcept = default;
  AttentionSeq2Seq& operator=(AttentionSeq2Seq&&) noexcept = default;

  const S2SConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return cfg_.vocab; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  std::span<const T> target_embedding(TokenId id) const { return dec_embed_->value.row(check(id)); }

  EncoderStates<T> encode(const std::vector<TokenId>& source) const { return encode_impl(source, nullptr); }

  /// Attention weights and context for query h_prev (a top-layer vector).
  AttnContext<T> attend(std::span<const T> h_prev, const EncoderStates<T>& enc) const {
    if (enc.states.empty()) throw std::invalid_argument("attend: no encoder states");
    if (h_prev.size() != cfg_.hidden) throw ShapeError("attend: query has wrong dimension");
    const std::size_t A = cfg_.attention_dim(), m = enc.states.size();
    std::vector<T> q(A, T(0));
    nn::matvec_acc<T>(attn_wh_->value, h_prev, q);
    std::vector<T> e(m);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<T> key;
      if (enc.keys.size() == m) {
        key = enc.keys[j];
      } else {
        key.assign(A, T(0));
        nn::matvec_acc<T>(attn_ws_->value, enc.states[j], key);
      }
      T s = 0;
      for (std::size_t a = 0; a < A; ++a) s += attn_v_->value.values[a] * std::tanh(q[a] + key[a]);
      e[j] = s;
    }
    AttnContext<T> ctx;
    ctx.weights = nn::softmax<T>(e);
    ctx.context.assign(cfg_.hidden, T(0));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t d = 0; d < cfg_.hidden; ++d) ctx.context[d] += ctx.weights[j] * enc.states[j][d];
    return ctx;
  }

  /// h_t from h_{t-1}, the previous target token and the context.
  ModelStep<T> decode_step(const RecurrentState<T>& prev, TokenId prev_token, const AttnContext<T>& ctx) const {
    ModelStep<T> out;
    out.state = dec_->step(prev, decoder_input(prev_token, ctx.context));
    out.logits = nn::affine<T>(out.state.top(), out_w_->value, out_b_->value.values);
    return out;
  }

  RecurrentState<T> decoder_initial_state(const EncoderStates<T>& enc) const { return enc.final; }

  double sequence_loss(const std::vector<TokenId>& source, const std::vector<TokenId>& target) const {
    return run(source, target, 0.0, false, nullptr);
  }

  double sequence_loss_and_grad(const std::vector<TokenId>& source, const std::vector<TokenId>& target, double scale) {
    return run(source, target, scale, true, nullptr);
  }

  /// Fraction of teacher-forced positions (target[1:] + <eos>) whose argmax
  /// prediction is correct. Returns (correct, total).
  std::pair<std::size_t, std::size_t> teacher_forced_hits(const std::vector<TokenId>& source,
                                                          const std::vector<TokenId>& target) const {
    std::pair<std::size_t, std::size_t> hits{0, 0};
    run(source, target, 0.0, false, &hits);
    return hits;
  }

 private:
  void bind() {
    enc_embed_ = &params_.at("s2s.enc.embed");
    dec_embed_ = &params_.at("s2s.dec.embed");
    attn_wh_ = &params_.at("s2s.attn.wh");
    attn_ws_ = &params_.at("s2s.attn.ws");
    attn_v_ = &params_.at("s2s.attn.v");
    out_w_ = &params_.at("s2s.out.w");
    out_b_ = &params_.at("s2s.out.b");
    enc_.emplace(params_, "s2s.enc.rnn");
    dec_.emplace(params_, "s2s.dec.rnn");
  }

  TokenId check(TokenId id) const {
    if (id >= cfg_.vocab)
      throw std::invalid_argument("token " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg_.vocab));
    return id;
  }

  std::vector<T> decoder_input(TokenId token, std::span<const T> context) const {
    const auto emb = dec_embed_->value.row(check(token));
    std::vector<T> x(emb.begin(), emb.end());
    x.insert(x.end(), context.begin(), context.end());
    return x;
  }

  EncoderStates<T> encode_impl(const std::vector<TokenId>& source, std::vector<nn::StepCache<T>>* caches) const {
    if (source.empty()) throw std::invalid_argument("encode: empty source clause");
    EncoderStates<T> enc;
    enc.source = source;
    auto state = enc_->zero_state();
    if (caches) caches->resize(source.size());
    const std::size_t A = cfg_.attention_dim();
    for (std::size_t j = 0; j < source.size(); ++j) {
      state = enc_->step(state, enc_embed_->value.row(check(source[j])), caches ? &(*caches)[j] : nullptr);
      enc.states.push_back(state.top());
      std::vector<T> key(A, T(0));
      nn::matvec_acc<T>(attn_ws_->value, state.top(), key);
      enc.keys.push_back(std::move(key));
    }
    enc.final = std::move(state);
    return enc;
  }

  double run(const std::vector<TokenId>& source, const std::vector<TokenId>& target, double scale, bool grad,
             std::pair<std::size_t, std::size_t>* hits) const {
    if (target.empty()) throw std::invalid_argument("sequence loss: empty target clause");
    const std::size_t n = target.size(), H = cfg_.hidden, A = cfg_.attention_dim();
    const TokenId eos = eos_of(cfg_.vocab);
    std::vector<nn::StepCache<T>> enc_caches;
    const auto enc = encode_impl(source, grad ? &enc_caches : nullptr);
    const std::size_t m = enc.states.size();

    struct StepRecord {
      std::vector<T> h_prev;  // attention query
      std::vector<std::vector<T>> z;  // tanh(W_h h + W_s s_j)
      std::vector<T> weights;
      nn::StepCache<T> cache;
      std::vector<T> top;
      std::vector<T> dlogits;
    };
    std::vector<StepRecord> rec(grad ? n : 0);

    auto state = decoder_initial_state(enc);
    double loss = 0;
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<T> q(A, T(0));
      nn::matvec_acc<T>(attn_wh_->value, state.top(), q);
      std::vector<std::vector<T>> z(m, std::vector<T>(A));
      std::vector<T> e(m, T(0));
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t a = 0; a < A; ++a) {
          z[j][a] = std::tanh(q[a] + enc.keys[j][a]);
          e[j] += attn_v_->value.values[a] * z[j][a];
        }
      const auto w = nn::softmax<T>(e);
      std::vector<T> ctx(H, T(0));
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t d = 0; d < H; ++d) ctx[d] += w[j] * enc.states[j][d];
      const auto prev_state_top = state.top();
      state = dec_->step(state, decoder_input(target[t], ctx), grad ? &rec[t].cache : nullptr);
      const auto logits = nn::affine<T>(state.top(), out_w_->value, out_b_->value.values);
      const auto probs = nn::softmax<T>(logits);
      const TokenId gold = t + 1 < n ? target[t + 1] : eos;
      loss += nn::cross_entropy<T>(probs, check(gold));
      if (hits) {
        const auto best = static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        hits->first += best == gold;
        ++hits->second;
      }
      if (grad) {
        auto& r = rec[t];
        r.h_prev = prev_state_top;
        r.z = std::move(z);
        r.weights = w;
        r.top = state.top();
        r.dlogits = probs;
        r.dlogits[gold] -= T(1);
        const T s = static_cast<T>(scale / static_cast<double>(n));
        for (auto& v : r.dlogits) v *= s;
      }
    }
    if (!grad) return loss / static_cast<double>(n);

    std::vector<std::vector<T>> ds(m, std::vector<T>(H, T(0)));
    auto dstate = dec_->zero_state();
    const std::size_t E = cfg_.embedding;
    for (std::size_t t = n; t-- > 0;) {
      auto& r = rec[t];
      nn::outer_acc<T>(out_w_->grad, r.dlogits, r.top);
      for (std::size_t v = 0; v < cfg_.vocab; ++v) out_b_->grad.values[v] += r.dlogits[v];
      std::vector<T> dh(H, T(0));
      nn::matvec_t_acc<T>(out_w_->value, r.dlogits, dh);
      const auto dx = dec_->backward_step(r.cache, dh, dstate);

      auto erow = dec_embed_->grad.row(target[t]);
      for (std::size_t d = 0; d < E; ++d) erow[d] += dx[d];
      const std::span<const T> dctx(dx.data() + E, H);

      std::vector<T> da(m, T(0));
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t d = 0; d < H; ++d) {
          da[j] += dctx[d] * enc.states[j][d];
          ds[j][d] += r.weights[j] * dctx[d];
        }
      T dot = 0;
      for (std::size_t j = 0; j < m; ++j) dot += r.weights[j] * da[j];
      std::vector<T> dq(A, T(0));
      for (std::size_t j = 0; j < m; ++j) {
        const T de = r.weights[j] * (da[j] - dot);
        if (de == T(0)) continue;
        std::vector<T> du(A);
        for (std::size_t a = 0; a < A; ++a) {
          attn_v_->grad.values[a] += de * r.z[j][a];
          du[a] = de * attn_v_->value.values[a] * (T(1) - r.z[j][a] * r.z[j][a]);
          dq[a] += du[a];
        }
        nn::outer_acc<T>(attn_ws_->grad, du, enc.states[j]);
        nn::matvec_t_acc<T>(attn_ws_->value, du, ds[j]);
      }
      nn::outer_acc<T>(attn_wh_->grad, dq, r.h_prev);
      nn::matvec_t_acc<T>(attn_wh_->value, dq, dstate.h.back());
    }
    // dstate now holds the gradient on the decoder's initial state, which is
    // the encoder's final state.
    for (std::size_t j = m; j-- > 0;) {
      const auto dx = enc_->backward_step(enc_caches[j], ds[j], dstate);
      auto erow = enc_embed_->grad.row(source[j]);
      for (std::size_t d = 0; d < E; ++d) erow[d] += dx[d];
    }
    return loss / static_cast<double>(n);
  }

  S2SConfig cfg_;
  nn::ParamSet<T> params_;
  nn::Param<T>* enc_embed_ = nullptr;
  nn::Param<T>* dec_embed_ = nullptr;
  nn::Param<T>* attn_wh_ = nullptr;
  nn::Param<T>* attn_ws_ = nullptr;
  nn::Param<T>* attn_v_ = nullptr;
  nn::Param<T>* out_w_ = nullptr;
  nn::Param<T>* out_b_ = nullptr;
  std::optional<nn::RecurrentStack<T>> enc_;
  std::optional<nn::RecurrentStack<T>> dec_;
};

/// Beam-search scorer for the decoder of one encoded antecedent.
template <class T>
class S2SScorer {
 public:
  using State = RecurrentState<T>;
  S2SScorer(const AttentionSeq2Seq<T>& model, EncoderStates<T> enc) : model_(model), enc_(std::move(enc)) {}

  std::size_t vocab_size() const { return model_.vocab_size(); }
  State initial_state() const { return model_.decoder_initial_state(enc_); }
  std::span<const T> embedding(TokenId id) const { return model_.target_embedding(id); }
  std::pair<State, std::vector<double>> advance(const State& s, TokenId token) const {
    const auto ctx = model_.attend(s.top(), enc_);
    auto st = model_.decode_step(s, token, ctx);
    return {std::move(st.state), nn::log_softmax<T>(st.logits)};
  }

 private:
  const AttentionSeq2Seq<T>& model_;
  EncoderStates<T> enc_;
};

template <class T>
struct S2STrainResult {
  AttentionSeq2Seq<T> model;
  TrainLog log;
};

template <class T = float>
S2STrainResult<T> train_s2s(const std::vector<CoupletPair>& train, const std::vector<CoupletPair>& validation,
                            const S2SConfig& cfg, const TrainHyper& hyper) {
  AttentionSeq2Seq<T> model(cfg, hyper.seed);
  auto log = run_training(
      model.params(), train, validation, hyper,
      [&](const CoupletPair& p, double scale) { return model.sequence_loss_and_grad(p.antecedent, p.subsequent, scale); },
      [&](const CoupletPair& p) { return model.sequence_loss(p.antecedent, p.subsequent); });
  return {std::move(model), std::move(log)};
}

/// Teacher-forced per-character accuracy over a set of pairs.
template <class T>
double teacher_forced_accuracy(const AttentionSeq2Seq<T>& model, const std::vector<CoupletPair>& pairs) {
  std::size_t hit = 0, total = 0;
  for (const auto& p : pairs) {
    const auto [h, n] = model.teacher_forced_hits(p.antecedent, p.subsequent);
    hit += h;
    total += n;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

/// Subsequent clauses of exactly |antecedent| characters starting with `head`.
template <class T>
std::vector<ClauseCandidate> generate_subsequent(const std::vector<TokenId>& antecedent, TokenId head,
                                                 const AttentionSeq2Seq<T>& model, const cbs::BeamConfig& beam) {
  if (antecedent.empty()) throw std::invalid_argument("generate_subsequent: empty antecedent");
  const std::size_t V = model.vocab_size();
  if (head >= unk_of(V)) throw std::invalid_argument("generate_subsequent: head must be a regular character id");
  const std::size_t m = antecedent.size();
  cbs::LengthBounds bounds{m, m, eos_of(V), unk_of(V)};
  S2SScorer<T> scorer(model, model.encode(antecedent));
  return to_candidates(cbs::cbs_decode(std::vector<TokenId>{head}, scorer, beam, bounds).hypotheses);
}

}  // namespace couplet
