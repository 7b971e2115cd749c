#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "couplet/cbs.hpp"
#include "couplet/errors.hpp"
#include "couplet/nn/recurrent.hpp"
#include "couplet/rerank.hpp"
#include "couplet/train.hpp"

namespace couplet {

/// Every tunable of the pipeline. Relative paths in a config file are
/// resolved against the file's directory.
struct PipelineConfig {
  // files
  std::string corpus;
  std::string vocab;
  std::string lm_checkpoint;
  std::string s2s_checkpoint;
  std::string heads;
  std::string tones;
  std::string sentiment;
  std::string log;  // empty: no generation log

  // data
  std::uint64_t seed = 1;
  std::size_t min_freq = 10;
  long val_size = -1;  // -1: default split sizes
  long test_size = -1;

  // models
  std::string cell = "lstm";
  std::size_t embedding = 32;
  std::size_t hidden = 64;
  std::size_t attention = 0;
  std::size_t lm_layers = 2;
  std::size_t s2s_layers = 2;
  std::size_t min_len = 5;
  std::size_t max_len = 12;

  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.001;
  double clip = 5.0;
  std::string clip_mode = "global";

  // decoding
  std::size_t beam_width = 4;
  std::size_t clusters = 2;
  std::size_t t_max = 32;
  std::size_t ngram_block = 2;
  bool length_normalize = false;
  bool backfill = true;
  std::size_t antecedents = 4;  // A
  std::size_t subsequents = 4;  // B per antecedent

  // heads and re-ranking
  double head_alpha = 1.0;
  bool head_sample = false;
  double w_length = 0.25;
  double w_repeat = 0.25;
  double w_tone = 0.25;
  double w_sentiment = 0.25;

  // eval and service
  std::size_t eval_limit = 0;  // 0: whole test split
  std::string host = "127.0.0.1";
  int port = 8080;

  cbs::BeamConfig beam(std::uint64_t stage_seed) const {
    cbs::BeamConfig b;
    b.beam_width = beam_width;
    b.clusters = clusters;
    b.t_max = t_max;
    b.ngram_block = ngram_block;
    b.length_normalize = length_normalize;
    b.backfill = backfill;
    b.seed = stage_seed;
    return b;
  }

  RankWeights weights() const { return {w_length, w_repeat, w_tone, w_sentiment}; }

  TrainHyper hyper() const {
    TrainHyper h;
    h.epochs = epochs;
    h.batch_size = batch_size;
    h.lr = lr;
    h.clip = clip;
    if (clip_mode == "global") h.clip_mode = nn::ClipMode::GlobalNorm;
    else if (clip_mode == "elementwise") h.clip_mode = nn::ClipMode::Elementwise;
    else throw std::invalid_argument("clip_mode must be 'global' or 'elementwise', got '" + clip_mode + "'");
    h.seed = seed;
    return h;
  }
};

struct ConfigKey {
  const char* name;
  const char* help;
  bool is_path;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

namespace detail {

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline long parse_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long x = 0;
  try {
    x = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x))
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

inline std::string real_str(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace detail

// clang-format off
#define COUPLET_PATH(field, help) \
  {#field, help, true, [](PipelineConfig& c, const std::string& v) { c.field = v; }, \
   [](const PipelineConfig& c) { return c.field; }}
#define COUPLET_COUNT(field, help) \
  {#field, help, false, [](PipelineConfig& c, const std::string& v) { c.field = detail::parse_count(#field, v); }, \
   [](const PipelineConfig& c) { return std::to_string(c.field); }}
#define COUPLET_REAL(field, help) \
  {#field, help, false, [](PipelineConfig& c, const std::string& v) { c.field = detail::parse_real(#field, v); }, \
   [](const PipelineConfig& c) { return detail::real_str(c.field); }}
#define COUPLET_BOOL(field, help) \
  {#field, help, false, [](PipelineConfig& c, const std::string& v) { c.field = detail::parse_bool(#field, v); }, \
   [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define COUPLET_TEXT(field, help) \
  {#field, help, false, [](PipelineConfig& c, const std::string& v) { c.field = v; }, \
   [](const PipelineConfig& c) { return c.field; }}
#define COUPLET_LONG(field, help) \
  {#field, help, false, [](PipelineConfig& c, const std::string& v) { c.field = detail::parse_long(#field, v); }, \
   [](const PipelineConfig& c) { return std::to_string(c.field); }}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      COUPLET_PATH(corpus, "couplet corpus, one `antecedent<TAB>subsequent` per line"),
      COUPLET_PATH(vocab, "vocabulary file (written by training, read by generation)"),
      COUPLET_PATH(lm_checkpoint, "antecedent language model checkpoint"),
      COUPLET_PATH(s2s_checkpoint, "attention encoder-decoder checkpoint"),
      COUPLET_PATH(heads, "head-character posterior table"),
      COUPLET_PATH(tones, "tone lexicon, `char<TAB>L|O`"),
      COUPLET_PATH(sentiment, "sentiment lexicon, `char<TAB>+1|-1`"),
      COUPLET_PATH(log, "append-only JSON-lines generation log (empty: off)"),
      {"seed", "seed for splits, initialization, shuffling and clustering", false,
       [](PipelineConfig& c, const std::string& v) { c.seed = detail::parse_count("seed", v); },
       [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      COUPLET_COUNT(min_freq, "minimum corpus frequency for a vocabulary character"),
      COUPLET_LONG(val_size, "validation pairs (-1: 5% of the corpus, at most 1000)"),
      COUPLET_LONG(test_size, "test pairs (-1: 10% of the corpus, at most 2000)"),
      COUPLET_TEXT(cell, "recurrent cell: lstm or rnn"),
      COUPLET_COUNT(embedding, "character embedding size"),
      COUPLET_COUNT(hidden, "hidden state size"),
      COUPLET_COUNT(attention, "attention size (0: same as hidden)"),
      COUPLET_COUNT(lm_layers, "language model layers"),
      COUPLET_COUNT(s2s_layers, "encoder and decoder layers"),
      COUPLET_COUNT(min_len, "shortest antecedent clause"),
      COUPLET_COUNT(max_len, "longest antecedent clause"),
      COUPLET_COUNT(epochs, "training epochs"),
      COUPLET_COUNT(batch_size, "mini-batch size"),
      COUPLET_REAL(lr, "Adam learning rate"),
      COUPLET_REAL(clip, "gradient clipping threshold"),
      COUPLET_TEXT(clip_mode, "clipping mode: global or elementwise"),
      COUPLET_COUNT(beam_width, "beam width BW"),
      COUPLET_COUNT(clusters, "clusters K per decoding step (BW must be a multiple)"),
      COUPLET_COUNT(t_max, "maximum decoding steps"),
      COUPLET_COUNT(ngram_block, "block repeated n-grams of this order"),
      COUPLET_BOOL(length_normalize, "rank hypotheses by mean instead of total log-probability"),
      COUPLET_BOOL(backfill, "refill beam slots left by small clusters"),
      COUPLET_COUNT(antecedents, "antecedent candidates A kept for re-ranking"),
      COUPLET_COUNT(subsequents, "subsequent candidates B per antecedent"),
      COUPLET_REAL(head_alpha, "additive smoothing of the head posterior"),
      COUPLET_BOOL(head_sample, "sample heads by posterior instead of taking the best two"),
      COUPLET_REAL(w_length, "re-ranking weight of length equality"),
      COUPLET_REAL(w_repeat, "re-ranking weight of the repetition score"),
      COUPLET_REAL(w_tone, "re-ranking weight of opposed ending tones"),
      COUPLET_REAL(w_sentiment, "re-ranking weight of sentiment"),
      COUPLET_COUNT(eval_limit, "evaluate at most this many test pairs (0: all)"),
      COUPLET_TEXT(host, "service bind address"),
      {"port", "service port (0: pick a free one)", false,
       [](PipelineConfig& c, const std::string& v) {
         const auto p = detail::parse_count("port", v);
         if (p > 65535) throw std::invalid_argument("port: out of range");
         c.port = static_cast<int>(p);
       },
       [](const PipelineConfig& c) { return std::to_string(c.port); }},
  };
  return keys;
}
// clang-format on

#undef COUPLET_PATH
#undef COUPLET_COUNT
#undef COUPLET_REAL
#undef COUPLET_BOOL
#undef COUPLET_TEXT
#undef COUPLET_LONG

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

/// Sets one key. Path values are resolved against `base_dir` when relative.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value,
                             const std::filesystem::path& base_dir = {}) {
  const auto* k = find_config_key(key);
  if (!k) throw std::invalid_argument("unknown config key '" + key + "'");
  if (k->is_path && !value.empty() && !base_dir.empty() && std::filesystem::path(value).is_relative())
    k->set(cfg, (base_dir / value).lexically_normal().string());
  else
    k->set(cfg, value);
}

/// `key = value` lines; `#` starts a comment.
inline PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {},
                                   PipelineConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", lineno);
    const auto key = detail::trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, detail::trim(line.substr(eq + 1)), base_dir);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what(), lineno);
    }
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  try {
    return parse_config(in, std::filesystem::absolute(path).parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Explicit path, else $COUPLET_CONFIG, else empty (built-in defaults).
inline std::string resolve_config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv("COUPLET_CONFIG"); env && *env) return env;
  return {};
}

inline void write_config(std::ostream& out, const PipelineConfig& cfg) {
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(cfg) << '\n';
}

}  // namespace couplet
