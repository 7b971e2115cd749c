#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "couplet/config.hpp"
#include "couplet/corpus.hpp"
#include "couplet/eval.hpp"
#include "couplet/heads.hpp"
#include "couplet/lm.hpp"
#include "couplet/nn/checkpoint.hpp"
#include "couplet/rerank.hpp"
#include "couplet/s2s.hpp"

namespace couplet {

/// FNV-1a over the file bytes, as "fnv1a:<16 hex digits>".
inline std::string checkpoint_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[32];
  std::snprintf(out, sizeof out, "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return out;
}

struct GenerationResult {
  std::string input;
  HeadSelection heads;
  std::vector<ScoredCouplet> ranked;  // best first
  std::size_t pool_size() const { return ranked.size(); }
  const ScoredCouplet& best() const { return ranked.front(); }
};

inline nlohmann::json scored_json(const ScoredCouplet& s) {
  return {{"antecedent", utf8::encode(s.pair.antecedent)},
          {"subsequent", utf8::encode(s.pair.subsequent)},
          {"logprob", s.logprob},
          {"scores",
           {{"length", s.scores.length},
            {"repeat", s.scores.repeat},
            {"tone", s.scores.tone},
            {"sentiment", s.scores.sentiment},
            {"total", s.total}}}};
}

inline nlohmann::json result_json(const GenerationResult& r) {
  nlohmann::json j;
  j["heads"] = {utf8::encode(r.heads.first), utf8::encode(r.heads.second)};
  j["best"] = scored_json(r.best());
  j["candidates"] = nlohmann::json::array();
  for (const auto& s : r.ranked) j["candidates"].push_back(scored_json(s));
  if (!r.heads.warning.empty()) j["warning"] = r.heads.warning;
  return j;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

/// Append-only JSON-lines log; one line per request, flushed immediately.
class GenerationLog {
 public:
  explicit GenerationLog(std::string path) : path_(std::move(path)) {}

  void append(const GenerationResult& r) {
    nlohmann::json rec;
    rec["timestamp"] = utc_timestamp();
    rec["input"] = r.input;
    rec["heads"] = {utf8::encode(r.heads.first), utf8::encode(r.heads.second)};
    rec["best"] = scored_json(r.best());
    rec["pool"] = nlohmann::json::array();
    for (const auto& s : r.ranked) rec["pool"].push_back(scored_json(s));
    const auto line = rec.dump() + "\n";
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to generation log '" + path_ + "'");
    out << line;
    out.flush();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::mutex mu_;
};

/// The three generation stages plus re-ranking over loaded, immutable models.
/// `generate` may be called concurrently.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Vocab vocab, LanguageModel<float> lm, AttentionSeq2Seq<float> s2s, HeadPosterior heads,
           ToneLexicon tones, SentimentLexicon sentiment)
      : cfg_(std::move(cfg)),
        vocab_(std::move(vocab)),
        lm_(std::move(lm)),
        s2s_(std::move(s2s)),
        heads_(std::move(heads)),
        tones_(std::move(tones)),
        sentiment_(std::move(sentiment)) {
    if (lm_.vocab_size() != vocab_.size())
      throw ShapeError("language model has " + std::to_string(lm_.vocab_size()) + " outputs, vocabulary has " +
                       std::to_string(vocab_.size()));
    if (s2s_.vocab_size() != vocab_.size())
      throw ShapeError("encoder-decoder has " + std::to_string(s2s_.vocab_size()) + " outputs, vocabulary has " +
                       std::to_string(vocab_.size()));
    cfg_.weights().validate();
    cfg_.beam(0).validate();
    if (cfg_.antecedents < 1 || cfg_.subsequents < 1)
      throw std::invalid_argument("antecedents and subsequents must be >= 1");
    if (!cfg_.log.empty()) log_ = std::make_unique<GenerationLog>(cfg_.log);
  }

  /// Loads every referenced file; the first missing one is named in the error.
  static Pipeline load(const PipelineConfig& cfg) {
    const std::pair<const char*, const std::string*> files[] = {
        {"vocab", &cfg.vocab}, {"lm_checkpoint", &cfg.lm_checkpoint}, {"s2s_checkpoint", &cfg.s2s_checkpoint},
        {"heads", &cfg.heads}, {"tones", &cfg.tones},                 {"sentiment", &cfg.sentiment}};
    for (const auto& [key, path] : files) {
      if (path->empty()) throw IoError(std::string("config key '") + key + "' is not set");
      if (!std::filesystem::is_regular_file(*path))
        throw IoError(std::string("missing file for '") + key + "': " + *path);
    }
    Pipeline p(cfg, load_vocab(cfg.vocab),
               LanguageModel<float>(nn::load_checkpoint<float>(cfg.lm_checkpoint), cfg.min_len, cfg.max_len),
               AttentionSeq2Seq<float>(nn::load_checkpoint<float>(cfg.s2s_checkpoint)),
               load_head_table(cfg.heads), ToneLexicon::load(cfg.tones), SentimentLexicon::load(cfg.sentiment));
    p.lm_id_ = checkpoint_id(cfg.lm_checkpoint);
    p.s2s_id_ = checkpoint_id(cfg.s2s_checkpoint);
    return p;
  }

  /// Full request: head selection from a 4-character input, then generation.
  /// Input problems throw std::invalid_argument (SelectionError included);
  /// later failures throw StageError.
  GenerationResult generate(std::string_view input_utf8) const {
    const auto text = utf8::decode(input_utf8);
    if (!text) throw std::invalid_argument("input is not valid UTF-8");
    HeadOptions opt{cfg_.head_sample, Rng::mix(cfg_.seed, 0x68)};
    auto sel = select_heads(*text, heads_, vocab_, opt);
    auto r = run(sel);
    r.input = std::string(input_utf8);
    if (log_) {
      try {
        log_->append(r);
      } catch (const std::exception& e) {
        throw StageError("log", e.what());
      }
    }
    return r;
  }

  /// Generation from given head characters, bypassing selection and the log.
  GenerationResult generate_from_heads(char32_t first, char32_t second) const {
    if (!vocab_.contains(first) || !vocab_.contains(second))
      throw SelectionError("head character outside the model vocabulary");
    HeadSelection sel;
    sel.first = first;
    sel.second = second;
    sel.first_id = vocab_.id(first);
    sel.second_id = vocab_.id(second);
    auto r = run(sel);
    r.input = utf8::encode(std::u32string{first, second});
    return r;
  }

  const PipelineConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const ToneLexicon& tones() const { return tones_; }
  const std::string& lm_id() const { return lm_id_; }
  const std::string& s2s_id() const { return s2s_id_; }

 private:
  GenerationResult run(const HeadSelection& sel) const {
    GenerationResult r;
    r.heads = sel;

    std::vector<ClauseCandidate> antecedents;
    try {
      antecedents = generate_antecedent(sel.first_id, lm_, cfg_.beam(Rng::mix(cfg_.seed, 0xa)));
    } catch (const std::exception& e) {
      throw StageError("antecedent", e.what());
    }
    if (antecedents.empty()) throw StageError("antecedent", "no antecedent clause decoded");
    if (antecedents.size() > cfg_.antecedents) antecedents.resize(cfg_.antecedents);

    std::vector<RankCandidate> pool;
    for (std::size_t i = 0; i < antecedents.size(); ++i) {
      std::vector<ClauseCandidate> subs;
      try {
        subs = generate_subsequent(antecedents[i].tokens, sel.second_id, s2s_, cfg_.beam(Rng::mix(cfg_.seed, 0xb0 + i)));
      } catch (const std::exception& e) {
        throw StageError("subsequent", e.what());
      }
      if (subs.size() > cfg_.subsequents) subs.resize(cfg_.subsequents);
      const auto first = decode_chars(antecedents[i].tokens, vocab_);
      for (const auto& s : subs)
        pool.push_back({{first, decode_chars(s.tokens, vocab_)}, antecedents[i].logprob + s.logprob});
    }
    if (pool.empty()) throw StageError("rerank", "empty candidate pool");
    try {
      r.ranked = rerank(pool, cfg_.weights(), tones_, sentiment_);
    } catch (const std::exception& e) {
      throw StageError("rerank", e.what());
    }
    return r;
  }

  PipelineConfig cfg_;
  Vocab vocab_;
  LanguageModel<float> lm_;
  AttentionSeq2Seq<float> s2s_;
  HeadPosterior heads_;
  ToneLexicon tones_;
  SentimentLexicon sentiment_;
  std::string lm_id_ = "in-memory";
  std::string s2s_id_ = "in-memory";
  std::unique_ptr<GenerationLog> log_;
};

// Training entry points. Each reads the corpus, builds the vocabulary and the
// seeded split the same way, so they can run in any order.

struct PreparedData {
  Vocab vocab;
  DatasetSplit split;
};

inline PreparedData prepare_data(const PipelineConfig& cfg) {
  if (cfg.corpus.empty()) throw IoError("config key 'corpus' is not set");
  const auto corpus = load_corpus(cfg.corpus);
  if (corpus.pairs.empty()) throw FormatError("corpus '" + cfg.corpus + "' holds no usable couplets");
  auto [val, test] = default_split_sizes(corpus.pairs.size());
  if (cfg.val_size >= 0) val = static_cast<std::size_t>(cfg.val_size);
  if (cfg.test_size >= 0) test = static_cast<std::size_t>(cfg.test_size);
  PreparedData d;
  d.split = make_splits(corpus.pairs, val, test, cfg.seed);
  d.vocab = build_vocab(d.split.train, cfg.min_freq);
  return d;
}

inline void ensure_parent_dir(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

inline void save_vocab_for(const PipelineConfig& cfg, const Vocab& v) {
  if (cfg.vocab.empty()) throw IoError("config key 'vocab' is not set");
  ensure_parent_dir(cfg.vocab);
  save_vocab(cfg.vocab, v);
}

inline TrainLog train_lm_stage(const PipelineConfig& cfg) {
  const auto d = prepare_data(cfg);
  LMConfig lc;
  lc.cell = nn::parse_cell_kind(cfg.cell);
  lc.layers = cfg.lm_layers;
  lc.hidden = cfg.hidden;
  lc.embedding = cfg.embedding;
  lc.vocab = d.vocab.size();
  lc.min_len = cfg.min_len;
  lc.max_len = cfg.max_len;
  auto r = train_lm<float>(encode_pairs(d.split.train, d.vocab), encode_pairs(d.split.validation, d.vocab), lc,
                           cfg.hyper());
  save_vocab_for(cfg, d.vocab);
  if (cfg.lm_checkpoint.empty()) throw IoError("config key 'lm_checkpoint' is not set");
  ensure_parent_dir(cfg.lm_checkpoint);
  nn::save_checkpoint(cfg.lm_checkpoint, r.model.params());
  return r.log;
}

inline TrainLog train_s2s_stage(const PipelineConfig& cfg) {
  const auto d = prepare_data(cfg);
  S2SConfig sc;
  sc.cell = nn::parse_cell_kind(cfg.cell);
  sc.layers = cfg.s2s_layers;
  sc.hidden = cfg.hidden;
  sc.embedding = cfg.embedding;
  sc.attention = cfg.attention;
  sc.vocab = d.vocab.size();
  auto r = train_s2s<float>(encode_pairs(d.split.train, d.vocab), encode_pairs(d.split.validation, d.vocab), sc,
                            cfg.hyper());
  save_vocab_for(cfg, d.vocab);
  if (cfg.s2s_checkpoint.empty()) throw IoError("config key 's2s_checkpoint' is not set");
  ensure_parent_dir(cfg.s2s_checkpoint);
  nn::save_checkpoint(cfg.s2s_checkpoint, r.model.params());
  return r.log;
}

inline HeadPosterior fit_heads_stage(const PipelineConfig& cfg) {
  const auto d = prepare_data(cfg);
  auto hp = fit_head_model(collect_head_stats(d.split.train), cfg.head_alpha);
  if (cfg.heads.empty()) throw IoError("config key 'heads' is not set");
  ensure_parent_dir(cfg.heads);
  save_head_table(cfg.heads, hp);
  return hp;
}

/// Regenerates each test couplet from its own two head characters.
inline EvalReport evaluate_pipeline(const Pipeline& p, const std::vector<CoupletText>& test) {
  return evaluate_testset(
      [&](const CoupletText& ref) {
        return p.generate_from_heads(ref.antecedent.front(), ref.subsequent.front()).best().pair;
      },
      test, p.tones());
}

inline std::vector<CoupletText> eval_items(const PipelineConfig& cfg) {
  auto test = prepare_data(cfg).split.test;
  if (cfg.eval_limit && test.size() > cfg.eval_limit) test.resize(cfg.eval_limit);
  if (test.empty()) throw std::invalid_argument("the test split is empty; set test_size");
  return test;
}

}  // namespace couplet
