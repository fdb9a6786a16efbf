// pipeline.hpp
// Pipeline orchestration: typed configuration and the seven subcommands
// (corpus synthesis, mixture simulation, extractor training, extraction,
// back-end training, trial scoring, metric reporting) over manifests and
// model files.

#pragma once

#include <string>
#include <vector>

#include "tsesv/backend.hpp"
#include "tsesv/extractor.hpp"
#include "tsesv/mixsim.hpp"

namespace tsesv {

struct PipelineConfig {
  std::uint64_t seed = 1;

  // corpus
  int n_speakers = 20;
  int utts_per_speaker = 8;
  int n_test_speakers = 5;

  // mixtures
  MixtureCounts mixtures{300, 50, 50};
  double snr_min_db = -5.0;
  double snr_max_db = 5.0;

  // extractor (the seed is always taken from the top-level seed)
  ExtractorConfig extractor;

  // backend
  int ubm_components = 16;
  int ubm_iters = 10;
  int tv_rank = 16;
  int tv_iters = 5;
  int lda_dim = 8;
  int plda_latent = 8;
  int plda_iters = 10;
  bool length_norm = true;

  // trials
  int nontargets_per_target = 16;

  void validate() const;
  static PipelineConfig load(const std::string& path);  // rejects unknown keys
};

// Synthesizes the speaker corpus into out_dir plus out_dir/corpus.jsonl.
void cmd_synth_corpus(const PipelineConfig& cfg, const std::string& out_dir);

// Renders the mixture plan into out_dir: mixture and target-reference
// WAVs, out_dir/mixtures.jsonl, and the two test trial lists
// (trials_mixture.txt, trials_clean.txt).
void cmd_simulate(const PipelineConfig& cfg, const std::string& corpus_manifest,
                  const std::string& out_dir);

// Trains the chosen variant on the train/dev mixtures; writes the model
// and a JSON-lines epoch log. Throws NumericError on divergence after
// writing the last good checkpoint.
void cmd_train_extractor(const PipelineConfig& cfg, const std::string& variant,
                         const std::string& mixture_manifest, const std::string& corpus_manifest,
                         const std::string& out_model, const std::string& out_log);

// Runs extraction over every mixture in the manifest. Writes one WAV per
// mixture, out_dir/extracted.jsonl (mixture schema, path = extracted
// audio) and out_dir/extracted_corpus.jsonl (corpus schema keyed by
// mix_id, speaker = target speaker) for back-end pooling.
void cmd_extract(const std::string& model_path, const std::string& mixture_manifest,
                 const std::string& corpus_manifest, const std::string& out_dir);

// Trains UBM / T / LDA / PLDA on the train-split utterances pooled from
// all given corpus-schema manifests.
void cmd_train_backend(const PipelineConfig& cfg, const std::vector<std::string>& manifests,
                       const std::string& out_model);

// Scores a trial list. tse_model == "" scores the test audio as-is;
// otherwise each mixture-test trial is extracted first, with the trial's
// enrollment utterance as the auxiliary input.
void cmd_score(const std::string& backend_path, const std::string& trials_path,
               const std::string& corpus_manifest, const std::string& mixture_manifest,
               const std::string& tse_model, const std::string& out_scores);

// Metrics JSON ({"eer","dcf08","dcf10","n_target","n_nontarget"}) plus a
// DET curve CSV (p_fa,p_miss rows).
void cmd_report(const std::string& scores_path, const std::string& out_json,
                const std::string& out_det_csv);

}  // namespace tsesv
