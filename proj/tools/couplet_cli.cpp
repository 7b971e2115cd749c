#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "couplet/couplet.hpp"

using namespace couplet;

namespace {

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

struct Common {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

/// Every config key becomes a flag on every subcommand.
void add_config_flags(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "config file (default: $COUPLET_CONFIG)");
  for (const auto& k : config_keys()) {
    const std::string key = k.name;
    cmd->add_option_function<std::string>(
           flag_name(key), [&common, key](const std::string& v) { common.overrides[key] = v; }, k.help)
        ->type_name(k.is_path ? "PATH" : "VALUE");
  }
}

PipelineConfig effective_config(const Common& common) {
  const auto path = resolve_config_path(common.config_path);
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_config(path);
  for (const auto& [k, v] : common.overrides) set_config_value(cfg, k, v);
  return cfg;
}

void print_log(const char* what, const TrainLog& log) {
  for (std::size_t e = 0; e < log.train_loss.size(); ++e) {
    std::printf("%s epoch %3zu  train %.4f", what, e + 1, log.train_loss[e]);
    if (!log.validation_loss.empty()) std::printf("  validation %.4f", log.validation_loss[e]);
    std::printf("\n");
  }
  if (!log.validation_loss.empty()) std::printf("%s kept epoch %zu\n", what, log.best_epoch);
}

void print_result(const GenerationResult& r) {
  std::printf("heads: %s %s\n", utf8::encode(r.heads.first).c_str(), utf8::encode(r.heads.second).c_str());
  if (!r.heads.warning.empty()) std::printf("warning: %s\n", r.heads.warning.c_str());
  const auto& b = r.best();
  std::printf("best:  %s / %s\n\n", utf8::encode(b.pair.antecedent).c_str(), utf8::encode(b.pair.subsequent).c_str());
  std::printf("%4s  %-24s  %7s  %6s  %6s  %6s  %6s  %6s\n", "rank", "couplet", "logprob", "len", "repeat", "tone",
              "sent", "total");
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    const auto& s = r.ranked[i];
    const auto text = utf8::encode(s.pair.antecedent) + " / " + utf8::encode(s.pair.subsequent);
    // CJK characters are 3 bytes and 2 columns wide; pad by display width.
    const std::size_t width = 2 * (s.pair.antecedent.size() + s.pair.subsequent.size()) + 3;
    std::printf("%4zu  %s%*s  %7.3f  %6.3f  %6.3f  %6.3f  %6.3f  %6.3f\n", i + 1, text.c_str(),
                static_cast<int>(width < 24 ? 24 - width : 0), "", s.logprob, s.scores.length, s.scores.repeat,
                s.scores.tone, s.scores.sentiment, s.total);
  }
}

CoupletService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acrostic couplet generator: train, generate, evaluate and serve."};
  app.require_subcommand(1);
  Common common;

  auto* train_lm_cmd = app.add_subcommand("train-lm", "train the antecedent language model");
  auto* train_s2s_cmd = app.add_subcommand("train-s2s", "train the attention encoder-decoder");
  auto* fit_heads_cmd = app.add_subcommand("fit-heads", "estimate head-character posteriors");
  auto* generate_cmd = app.add_subcommand("generate", "generate a couplet from a 4-character input");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate on the test split");
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  auto* synth_cmd = app.add_subcommand("synth-corpus", "write a synthetic toy corpus");

  std::string input;
  bool as_json = false;
  generate_cmd->add_option("--input", input, "four characters")->required();
  generate_cmd->add_flag("--json", as_json, "print the service response body instead of a table");

  std::size_t synth_count = 600;
  std::string synth_out;
  synth_cmd->add_option("--count", synth_count, "number of couplets");
  synth_cmd->add_option("--out", synth_out, "output file")->required();

  for (auto* cmd : {train_lm_cmd, train_s2s_cmd, fit_heads_cmd, generate_cmd, eval_cmd, serve_cmd, synth_cmd})
    add_config_flags(cmd, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = effective_config(common);
    if (*train_lm_cmd) {
      print_log("lm", train_lm_stage(cfg));
      std::printf("wrote %s and %s\n", cfg.lm_checkpoint.c_str(), cfg.vocab.c_str());
    } else if (*train_s2s_cmd) {
      print_log("s2s", train_s2s_stage(cfg));
      std::printf("wrote %s and %s\n", cfg.s2s_checkpoint.c_str(), cfg.vocab.c_str());
    } else if (*fit_heads_cmd) {
      const auto hp = fit_heads_stage(cfg);
      std::printf("wrote %zu head posteriors to %s\n", hp.table().size(), cfg.heads.c_str());
    } else if (*generate_cmd) {
      const auto p = Pipeline::load(cfg);
      const auto r = p.generate(input);
      if (as_json) std::printf("%s\n", result_json(r).dump(2).c_str());
      else print_result(r);
    } else if (*eval_cmd) {
      const auto p = Pipeline::load(cfg);
      const auto rep = evaluate_pipeline(p, eval_items(cfg));
      std::printf("%s%s\n", rep.table().c_str(), rep.summary_line().c_str());
      for (const auto& f : rep.failures) std::fprintf(stderr, "skipped: %s\n", f.c_str());
    } else if (*serve_cmd) {
      const auto p = Pipeline::load(cfg);
      CoupletService service(p);
      const int port = service.bind(cfg.host, cfg.port);
      if (port < 0) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", cfg.host.c_str(), port);
      std::fflush(stdout);
      service.run();
    } else if (*synth_cmd) {
      ensure_parent_dir(synth_out);
      std::ofstream out(synth_out, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write '" + synth_out + "'");
      write_corpus(out, synthetic_couplets(synth_count, cfg.seed));
      std::printf("wrote %zu couplets to %s\n", synth_count, synth_out.c_str());
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "error in stage '%s': %s\n", e.stage.c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
