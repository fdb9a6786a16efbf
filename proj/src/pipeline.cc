// pipeline.cc

#include "tsesv/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tsesv/eval.hpp"
#include "tsesv/frontend.hpp"
#include "tsesv/signal.hpp"

namespace tsesv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Guards an output directory against concurrent writers.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
    fs::create_directories(dir);
    if (fs::exists(path_))
      throw InputError("output directory is locked by another process: " + dir);
    std::ofstream lock(path_);
    if (!lock) throw InputError("cannot create lock file in " + dir);
    lock << "locked\n";
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw InputError("unknown config key: " + (section.empty() ? "" : section + ".") +
                       it.key());
  }
}

template <typename T>
void read_opt(const json& j, const std::string& key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  if (n_speakers < 2 || utts_per_speaker < 2) throw InputError("corpus too small");
  if (n_test_speakers < 0 || n_test_speakers >= n_speakers)
    throw InputError("n_test_speakers must be in [0, n_speakers)");
  if (snr_min_db > snr_max_db) throw InputError("snr_min_db must be <= snr_max_db");
  if (mixtures.train < 0 || mixtures.dev < 0 || mixtures.test < 0)
    throw InputError("mixture counts must be non-negative");
  if (ubm_components < 1 || tv_rank < 1 || lda_dim < 1 || plda_latent < 0)
    throw InputError("backend sizes must be positive");
  if (nontargets_per_target < 1) throw InputError("nontargets_per_target must be >= 1");
  extractor.validate();
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config file not found: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InputError("config is not valid JSON: " + path);

  PipelineConfig cfg;
  reject_unknown_keys(j, {"seed", "corpus", "mixtures", "extractor", "backend", "trials"}, "");
  read_opt(j, "seed", cfg.seed);

  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    reject_unknown_keys(c, {"n_speakers", "utts_per_speaker", "n_test_speakers"}, "corpus");
    read_opt(c, "n_speakers", cfg.n_speakers);
    read_opt(c, "utts_per_speaker", cfg.utts_per_speaker);
    read_opt(c, "n_test_speakers", cfg.n_test_speakers);
  }
  if (j.contains("mixtures")) {
    const json& m = j.at("mixtures");
    reject_unknown_keys(m, {"n_train", "n_dev", "n_test", "snr_min_db", "snr_max_db"},
                        "mixtures");
    read_opt(m, "n_train", cfg.mixtures.train);
    read_opt(m, "n_dev", cfg.mixtures.dev);
    read_opt(m, "n_test", cfg.mixtures.test);
    read_opt(m, "snr_min_db", cfg.snr_min_db);
    read_opt(m, "snr_max_db", cfg.snr_max_db);
  }
  if (j.contains("extractor")) {
    const json& e = j.at("extractor");
    reject_unknown_keys(e,
                        {"variant", "blstm_cells", "n_sublayers", "embed_dim", "aux_hidden",
                         "ff_hidden", "lr0", "lr_decay", "batch", "min_epochs", "max_epochs",
                         "stop_rel_loss", "log_magnitude"},
                        "extractor");
    if (e.contains("variant")) cfg.extractor.variant = parse_variant(e.at("variant"));
    read_opt(e, "blstm_cells", cfg.extractor.blstm_cells);
    read_opt(e, "n_sublayers", cfg.extractor.n_sublayers);
    read_opt(e, "embed_dim", cfg.extractor.embed_dim);
    read_opt(e, "aux_hidden", cfg.extractor.aux_hidden);
    read_opt(e, "ff_hidden", cfg.extractor.ff_hidden);
    read_opt(e, "lr0", cfg.extractor.lr0);
    read_opt(e, "lr_decay", cfg.extractor.lr_decay);
    read_opt(e, "batch", cfg.extractor.batch);
    read_opt(e, "min_epochs", cfg.extractor.min_epochs);
    read_opt(e, "max_epochs", cfg.extractor.max_epochs);
    read_opt(e, "stop_rel_loss", cfg.extractor.stop_rel_loss);
    read_opt(e, "log_magnitude", cfg.extractor.log_magnitude);
  }
  if (j.contains("backend")) {
    const json& b = j.at("backend");
    reject_unknown_keys(b,
                        {"ubm_components", "ubm_iters", "tv_rank", "tv_iters", "lda_dim",
                         "plda_latent", "plda_iters", "length_norm"},
                        "backend");
    read_opt(b, "ubm_components", cfg.ubm_components);
    read_opt(b, "ubm_iters", cfg.ubm_iters);
    read_opt(b, "tv_rank", cfg.tv_rank);
    read_opt(b, "tv_iters", cfg.tv_iters);
    read_opt(b, "lda_dim", cfg.lda_dim);
    read_opt(b, "plda_latent", cfg.plda_latent);
    read_opt(b, "plda_iters", cfg.plda_iters);
    read_opt(b, "length_norm", cfg.length_norm);
  }
  if (j.contains("trials")) {
    const json& t = j.at("trials");
    reject_unknown_keys(t, {"nontargets_per_target"}, "trials");
    read_opt(t, "nontargets_per_target", cfg.nontargets_per_target);
  }
  cfg.extractor.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

void cmd_synth_corpus(const PipelineConfig& cfg, const std::string& out_dir) {
  DirLock lock(out_dir);
  CorpusManifest m = synth_corpus(cfg.n_speakers, cfg.utts_per_speaker, cfg.n_test_speakers,
                                  cfg.seed, out_dir);
  save_corpus_manifest(out_dir + "/corpus.jsonl", m);
}

void cmd_simulate(const PipelineConfig& cfg, const std::string& corpus_manifest,
                  const std::string& out_dir) {
  CorpusManifest corpus = load_corpus_manifest(corpus_manifest);
  DirLock lock(out_dir);
  std::vector<MixtureSpec> specs =
      build_dataset(corpus, cfg.mixtures, cfg.snr_min_db, cfg.snr_max_db, cfg.seed);

  for (auto& spec : specs) {
    Waveform target = load_wav(corpus.find(spec.target_utt).path);
    Waveform interferer = load_wav(corpus.find(spec.interferer_utt).path);
    MixtureResult mr = simulate_mixture(target, interferer, spec.snr_db);
    spec.path = out_dir + "/" + spec.mix_id + ".wav";
    spec.target_ref_path = out_dir + "/" + spec.mix_id + "_ref.wav";
    spec.norm_gain = mr.norm_gain;
    save_wav(spec.path, mr.mixture);
    save_wav(spec.target_ref_path, mr.target_ref);
  }
  save_mixture_manifest(out_dir + "/mixtures.jsonl", specs);

  std::vector<MixtureSpec> test_specs;
  for (const auto& s : specs)
    if (s.split == "test") test_specs.push_back(s);
  save_trials(out_dir + "/trials_mixture.txt",
              generate_trials(test_specs, corpus, cfg.nontargets_per_target, cfg.seed + 1));
  save_trials(out_dir + "/trials_clean.txt",
              generate_trials(test_specs, corpus, cfg.nontargets_per_target, cfg.seed + 1,
                              /*clean_test=*/true));
}

namespace {

std::vector<TrainExample> load_examples(const std::vector<MixtureSpec>& specs,
                                        const CorpusManifest& corpus, const std::string& split) {
  std::vector<TrainExample> out;
  for (const auto& s : specs) {
    if (s.split != split) continue;
    Waveform mixture = load_wav(s.path);
    Waveform ref = load_wav(s.target_ref_path);
    Waveform aux = load_wav(corpus.find(s.aux_utt).path);
    out.push_back(make_train_example(mixture, ref, aux));
  }
  return out;
}

}  // namespace

void cmd_train_extractor(const PipelineConfig& cfg, const std::string& variant,
                         const std::string& mixture_manifest, const std::string& corpus_manifest,
                         const std::string& out_model, const std::string& out_log) {
  ExtractorConfig ecfg = cfg.extractor;
  if (!variant.empty()) ecfg.variant = parse_variant(variant);

  CorpusManifest corpus = load_corpus_manifest(corpus_manifest);
  std::vector<MixtureSpec> specs = load_mixture_manifest(mixture_manifest);
  std::vector<TrainExample> train = load_examples(specs, corpus, "train");
  std::vector<TrainExample> dev = load_examples(specs, corpus, "dev");

  TrainResult res = train_extractor(ecfg, train, dev);
  res.model.save(out_model);
  save_training_log(out_log, res.log);
  if (res.diverged)
    throw NumericError("extractor training diverged (non-finite loss); best checkpoint kept at " +
                       out_model);
}

void cmd_extract(const std::string& model_path, const std::string& mixture_manifest,
                 const std::string& corpus_manifest, const std::string& out_dir) {
  ExtractorModel model = ExtractorModel::load(model_path);
  CorpusManifest corpus = load_corpus_manifest(corpus_manifest);
  std::vector<MixtureSpec> specs = load_mixture_manifest(mixture_manifest);
  DirLock lock(out_dir);

  CorpusManifest ext_corpus;
  for (auto& s : specs) {
    Waveform mixture = load_wav(s.path);
    Waveform aux = load_wav(corpus.find(s.aux_utt).path);
    Waveform out = extract(model, mixture, aux);
    const std::string out_path = out_dir + "/" + s.mix_id + "_ext.wav";
    save_wav(out_path, out);
    s.path = out_path;

    UttRecord rec;
    rec.utt = s.mix_id;
    rec.spk = corpus.find(s.target_utt).spk;
    rec.path = out_path;
    rec.dur_s = static_cast<double>(out.samples.size()) / 8000.0;
    rec.split = s.split;
    ext_corpus.records.push_back(rec);
  }
  save_mixture_manifest(out_dir + "/extracted.jsonl", specs);
  save_corpus_manifest(out_dir + "/extracted_corpus.jsonl", ext_corpus);
}

void cmd_train_backend(const PipelineConfig& cfg, const std::vector<std::string>& manifests,
                       const std::string& out_model) {
  if (manifests.empty()) throw InputError("train-backend: no training manifests given");
  std::vector<UttRecord> records;
  for (const auto& path : manifests) {
    CorpusManifest m = load_corpus_manifest(path);
    for (const auto& r : m.records)
      if (r.split == "train") records.push_back(r);
  }
  if (records.empty()) throw InputError("train-backend: no train-split utterances");

  std::vector<Mat> features;
  features.reserve(records.size());
  for (const auto& r : records) features.push_back(verification_features(load_wav(r.path)));

  BackendModel b;
  UbmTrainResult ubm = train_ubm(features, cfg.ubm_components, cfg.ubm_iters, cfg.seed);
  b.ubm = ubm.gmm;

  std::vector<BwStats> stats;
  stats.reserve(records.size());
  for (const auto& f : features) stats.push_back(bw_stats(b.ubm, f));
  TmatTrainResult tv = train_tmatrix(stats, b.ubm, cfg.tv_rank, cfg.tv_iters, cfg.seed + 1);
  b.tmat = tv.tmat;

  std::vector<Vec> ivectors;
  std::vector<int> labels;
  std::map<std::string, int> spk_index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ivectors.push_back(extract_ivector(b.tmat, b.ubm, stats[i]).w);
    auto it = spk_index.emplace(records[i].spk, static_cast<int>(spk_index.size()));
    labels.push_back(it.first->second);
  }

  b.lda = train_lda(ivectors, labels, cfg.lda_dim);
  std::vector<Vec> projected;
  projected.reserve(ivectors.size());
  for (const auto& w : ivectors) projected.push_back(b.lda.transpose() * w);

  PldaTrainResult plda = train_plda(projected, labels, cfg.plda_latent, cfg.plda_iters,
                                    cfg.seed + 2, cfg.length_norm);
  b.prep = plda.prep;
  b.plda = plda.model;
  b.save(out_model);
}

namespace {

Vec embedding_from_wav(const BackendModel& b, const Waveform& w) {
  Mat feats = verification_features(w);
  BwStats stats = bw_stats(b.ubm, feats);
  return b.embed(extract_ivector(b.tmat, b.ubm, stats));
}

}  // namespace

void cmd_score(const std::string& backend_path, const std::string& trials_path,
               const std::string& corpus_manifest, const std::string& mixture_manifest,
               const std::string& tse_model, const std::string& out_scores) {
  BackendModel backend = BackendModel::load(backend_path);
  std::vector<Trial> trials = load_trials(trials_path);
  CorpusManifest corpus = load_corpus_manifest(corpus_manifest);
  std::vector<MixtureSpec> mixtures;
  if (!mixture_manifest.empty()) mixtures = load_mixture_manifest(mixture_manifest);

  auto find_mixture = [&](const std::string& id) -> const MixtureSpec* {
    for (const auto& m : mixtures)
      if (m.mix_id == id) return &m;
    return nullptr;
  };
  auto is_clean_utt = [&](const std::string& id) {
    for (const auto& r : corpus.records)
      if (r.utt == id) return true;
    return false;
  };

  // Validate every reference before any work.
  std::vector<std::string> offenders;
  for (const auto& t : trials) {
    if (!is_clean_utt(t.enroll_utt)) offenders.push_back(t.enroll_utt);
    if (!is_clean_utt(t.test_utt) && find_mixture(t.test_utt) == nullptr)
      offenders.push_back(t.test_utt);
    if (offenders.size() >= 10) break;
  }
  if (!offenders.empty()) {
    std::string msg = "trials reference missing audio:";
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += " " + offenders[i];
    throw InputError(msg);
  }

  ExtractorModel tse;
  const bool use_tse = !tse_model.empty();
  if (use_tse) tse = ExtractorModel::load(tse_model);

  std::map<std::string, Vec> cache;
  auto embedding_for = [&](const std::string& key, auto&& make_wav) -> const Vec& {
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, embedding_from_wav(backend, make_wav())).first;
    return it->second;
  };

  std::vector<ScoredTrial> scored;
  scored.reserve(trials.size());
  for (const auto& t : trials) {
    const Vec& enroll = embedding_for(
        "utt:" + t.enroll_utt, [&] { return load_wav(corpus.find(t.enroll_utt).path); });

    const MixtureSpec* mix = find_mixture(t.test_utt);
    Vec test;
    if (mix == nullptr) {
      test = embedding_for("utt:" + t.test_utt,
                           [&] { return load_wav(corpus.find(t.test_utt).path); });
    } else if (use_tse) {
      // The enrollment utterance doubles as the extractor's auxiliary input.
      test = embedding_for("ext:" + t.test_utt + "|" + t.enroll_utt, [&] {
        Waveform mixture = load_wav(mix->path);
        Waveform aux = load_wav(corpus.find(t.enroll_utt).path);
        return extract(tse, mixture, aux);
      });
    } else {
      test = embedding_for("mix:" + t.test_utt, [&] { return load_wav(mix->path); });
    }

    ScoredTrial st;
    st.trial = t;
    st.score = plda_score(backend.plda, enroll, test);
    scored.push_back(st);
  }
  save_scores(out_scores, scored);
}

void cmd_report(const std::string& scores_path, const std::string& out_json,
                const std::string& out_det_csv) {
  std::vector<ScoredTrial> scored = load_scores(scores_path);
  int n_target = 0, n_nontarget = 0;
  for (const auto& s : scored) (s.trial.target ? n_target : n_nontarget)++;

  json j = {{"eer", compute_eer(scored)},
            {"dcf08", compute_min_dcf(scored, kDcf08)},
            {"dcf10", compute_min_dcf(scored, kDcf10)},
            {"n_target", n_target},
            {"n_nontarget", n_nontarget}};
  std::ofstream out(out_json, std::ios::trunc);
  if (!out) throw InputError("cannot write report: " + out_json);
  out << j.dump(2) << "\n";

  if (!out_det_csv.empty()) {
    std::ofstream det(out_det_csv, std::ios::trunc);
    if (!det) throw InputError("cannot write DET curve: " + out_det_csv);
    det << "p_fa,p_miss\n";
    det.precision(17);
    for (const auto& [p_fa, p_miss] : det_points(scored))
      det << p_fa << "," << p_miss << "\n";
  }
}

}  // namespace tsesv
