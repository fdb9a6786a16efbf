// Command-line driver. Talks to the toolkit exclusively through the C
// interface in tsesv.h.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsesv.h"

namespace {

int finish(tsesv_ctx* ctx, int rc) {
  if (rc != 0) std::fprintf(stderr, "error: %s\n", tsesv_last_error(ctx));
  tsesv_ctx_free(ctx);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-speaker mixture simulation, target speaker extraction and "
               "i-vector/PLDA speaker verification"};
  app.require_subcommand(1);

  std::string config, corpus, mixtures, out_dir, model, log_path, variant;
  std::string backend, trials, tse, scores, report_json, det_csv;
  std::vector<std::string> manifests;

  CLI::App* synth = app.add_subcommand("synth-corpus", "Synthesize the speaker corpus");
  synth->add_option("--config", config, "Pipeline config JSON")->required();
  synth->add_option("--out-dir", out_dir, "Output directory")->required();

  CLI::App* simulate = app.add_subcommand("simulate", "Render the two-speaker mixture dataset");
  simulate->add_option("--config", config, "Pipeline config JSON")->required();
  simulate->add_option("--corpus", corpus, "Corpus manifest (corpus.jsonl)")->required();
  simulate->add_option("--out-dir", out_dir, "Output directory")->required();

  CLI::App* train_ext = app.add_subcommand("train-extractor", "Train an extraction network");
  train_ext->add_option("--config", config, "Pipeline config JSON")->required();
  train_ext->add_option("--variant", variant,
                        "Network variant: sbf-mtsal or sbf-mtsal-concat (default: config value)");
  train_ext->add_option("--mixtures", mixtures, "Mixture manifest (mixtures.jsonl)")->required();
  train_ext->add_option("--corpus", corpus, "Corpus manifest")->required();
  train_ext->add_option("--out-model", model, "Output model file")->required();
  train_ext->add_option("--out-log", log_path, "Output epoch log (JSON lines)")->required();

  CLI::App* ext = app.add_subcommand("extract", "Extract the target speaker from mixtures");
  ext->add_option("--model", model, "Extractor model file")->required();
  ext->add_option("--mixtures", mixtures, "Mixture manifest")->required();
  ext->add_option("--corpus", corpus, "Corpus manifest")->required();
  ext->add_option("--out-dir", out_dir, "Output directory")->required();

  CLI::App* train_be = app.add_subcommand("train-backend", "Train the UBM/i-vector/PLDA back-end");
  train_be->add_option("--config", config, "Pipeline config JSON")->required();
  train_be->add_option("--manifest", manifests,
                       "Corpus-schema training manifest (repeatable for pooling)")
      ->required();
  train_be->add_option("--out-model", model, "Output back-end model file")->required();

  CLI::App* score = app.add_subcommand("score", "Score a trial list");
  score->add_option("--backend", backend, "Back-end model file")->required();
  score->add_option("--trials", trials, "Trial list file")->required();
  score->add_option("--corpus", corpus, "Corpus manifest")->required();
  score->add_option("--mixtures", mixtures, "Mixture manifest (needed for mixture test sides)");
  score->add_option("--tse", tse,
                    "Extractor model applied to mixture test sides ('none' or a model path)")
      ->default_val("none");
  score->add_option("--out-scores", scores, "Output score file")->required();

  CLI::App* report = app.add_subcommand("report", "Compute EER and minDCF from scores");
  report->add_option("--scores", scores, "Score file")->required();
  report->add_option("--out-json", report_json, "Output metrics JSON")->required();
  report->add_option("--out-det", det_csv, "Output DET curve CSV (optional)");

  CLI11_PARSE(app, argc, argv);

  tsesv_ctx* ctx = tsesv_ctx_new();
  if (synth->parsed())
    return finish(ctx, tsesv_synth_corpus(ctx, config.c_str(), out_dir.c_str()));
  if (simulate->parsed())
    return finish(ctx, tsesv_simulate(ctx, config.c_str(), corpus.c_str(), out_dir.c_str()));
  if (train_ext->parsed())
    return finish(ctx, tsesv_train_extractor(ctx, config.c_str(), variant.c_str(),
                                             mixtures.c_str(), corpus.c_str(), model.c_str(),
                                             log_path.c_str()));
  if (ext->parsed())
    return finish(ctx, tsesv_extract(ctx, model.c_str(), mixtures.c_str(), corpus.c_str(),
                                     out_dir.c_str()));
  if (train_be->parsed()) {
    std::vector<const char*> ptrs;
    for (const auto& m : manifests) ptrs.push_back(m.c_str());
    return finish(ctx, tsesv_train_backend(ctx, config.c_str(), ptrs.data(),
                                           static_cast<int>(ptrs.size()), model.c_str()));
  }
  if (score->parsed()) {
    const std::string tse_path = (tse == "none") ? "" : tse;
    return finish(ctx, tsesv_score(ctx, backend.c_str(), trials.c_str(), corpus.c_str(),
                                   mixtures.c_str(), tse_path.c_str(), scores.c_str()));
  }
  if (report->parsed())
    return finish(ctx, tsesv_report(ctx, scores.c_str(), report_json.c_str(),
                                    det_csv.empty() ? nullptr : det_csv.c_str()));
  tsesv_ctx_free(ctx);
  return 2;
}
