// mixsim.cc

#include "tsesv/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace tsesv {

using nlohmann::json;

const UttRecord& CorpusManifest::find(const std::string& utt) const {
  for (const auto& r : records)
    if (r.utt == utt) return r;
  throw InputError("utterance not in corpus manifest: " + utt);
}

std::vector<std::string> CorpusManifest::speakers(const std::string& split) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.split == split && seen.insert(r.spk).second) out.push_back(r.spk);
  }
  return out;
}

std::vector<const UttRecord*> CorpusManifest::utts_of(const std::string& spk) const {
  std::vector<const UttRecord*> out;
  for (const auto& r : records)
    if (r.spk == spk) out.push_back(&r);
  return out;
}

MixtureResult simulate_mixture(const Waveform& target, const Waveform& interferer, double snr_db) {
  if (!std::isfinite(snr_db)) throw InputError("snr must be finite");
  const std::size_t len = std::min(target.samples.size(), interferer.samples.size());

  // RMS on the truncated overlap so the realized SNR matches the request.
  double pt = 0.0, pi = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    pt += target.samples[i] * target.samples[i];
    pi += interferer.samples[i] * interferer.samples[i];
  }
  if (len == 0 || pt <= 0.0 || pi <= 0.0)
    throw InputError("degenerate signal: zero energy input");

  const double g = std::sqrt(pt / pi) * std::pow(10.0, -snr_db / 20.0);

  MixtureResult r;
  r.mixture.samples.resize(len);
  r.target_ref.samples.resize(len);
  r.interferer_ref.samples.resize(len);
  double peak = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    r.target_ref.samples[i] = target.samples[i];
    r.interferer_ref.samples[i] = g * interferer.samples[i];
    r.mixture.samples[i] = r.target_ref.samples[i] + r.interferer_ref.samples[i];
    peak = std::max(peak, std::abs(r.mixture.samples[i]));
  }
  if (peak > 1.0) {
    r.norm_gain = 1.0 / peak;
    for (std::size_t i = 0; i < len; ++i) {
      r.mixture.samples[i] *= r.norm_gain;
      r.target_ref.samples[i] *= r.norm_gain;
      r.interferer_ref.samples[i] *= r.norm_gain;
    }
  }
  return r;
}

namespace {

struct SplitPool {
  std::vector<std::string> speakers;
  std::map<std::string, std::vector<const UttRecord*>> utts;
};

SplitPool make_pool(const CorpusManifest& corpus, const std::string& corpus_split) {
  SplitPool pool;
  pool.speakers = corpus.speakers(corpus_split);
  for (const auto& spk : pool.speakers) pool.utts[spk] = corpus.utts_of(spk);
  return pool;
}

void check_pool(const SplitPool& pool, const std::string& what) {
  if (pool.speakers.size() < 2)
    throw InputError("corpus too small: need >= 2 speakers in " + what + " split");
  for (const auto& [spk, utts] : pool.utts) {
    if (utts.size() < 2)
      throw InputError("corpus too small: speaker " + spk + " has < 2 utterances");
  }
}

}  // namespace

std::vector<MixtureSpec> build_dataset(const CorpusManifest& corpus, const MixtureCounts& counts,
                                       double snr_min_db, double snr_max_db, std::uint64_t seed) {
  SplitPool train_pool = make_pool(corpus, "train");
  SplitPool test_pool = make_pool(corpus, "test");
  if (counts.train > 0 || counts.dev > 0) check_pool(train_pool, "train");
  if (counts.test > 0) check_pool(test_pool, "test");

  Rng rng(seed);
  std::vector<MixtureSpec> specs;
  specs.reserve(static_cast<std::size_t>(counts.train + counts.dev + counts.test));

  const std::vector<std::pair<std::string, int>> plan = {
      {"train", counts.train}, {"dev", counts.dev}, {"test", counts.test}};
  for (const auto& [split, count] : plan) {
    const SplitPool& pool = (split == "test") ? test_pool : train_pool;
    for (int i = 0; i < count; ++i) {
      const int n_spk = static_cast<int>(pool.speakers.size());
      const int ti = rng.uniform_int(n_spk);
      int ii = rng.uniform_int(n_spk - 1);
      if (ii >= ti) ++ii;
      const std::string& target_spk = pool.speakers[ti];
      const std::string& interf_spk = pool.speakers[ii];

      const auto& target_utts = pool.utts.at(target_spk);
      const auto& interf_utts = pool.utts.at(interf_spk);
      const int tu = rng.uniform_int(static_cast<int>(target_utts.size()));
      int au = rng.uniform_int(static_cast<int>(target_utts.size()) - 1);
      if (au >= tu) ++au;
      const int iu = rng.uniform_int(static_cast<int>(interf_utts.size()));

      MixtureSpec spec;
      char id[64];
      std::snprintf(id, sizeof(id), "mix_%s_%05d", split.c_str(), i);
      spec.mix_id = id;
      spec.target_utt = target_utts[tu]->utt;
      spec.interferer_utt = interf_utts[iu]->utt;
      spec.aux_utt = target_utts[au]->utt;
      spec.snr_db = rng.uniform(snr_min_db, snr_max_db);
      spec.split = split;
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

namespace {

// One 2-pole resonator section.
struct Resonator {
  double a1, a2;
  double y1 = 0.0, y2 = 0.0;
  Resonator(double freq_hz, double r) {
    a1 = 2.0 * r * std::cos(2.0 * M_PI * freq_hz / kSampleRate);
    a2 = -r * r;
  }
  double step(double x) {
    double y = x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct SpeakerVoice {
  double pitch_hz;
  double formants[3];
};

}  // namespace

CorpusManifest synth_corpus(int n_speakers, int utts_per_speaker, int n_test_speakers,
                            std::uint64_t seed, const std::string& out_dir) {
  if (n_speakers < 4) throw InputError("synth_corpus needs >= 4 speakers");
  if (n_test_speakers < 2 || n_test_speakers >= n_speakers - 1)
    throw InputError("need >= 2 test speakers and >= 2 train speakers");

  std::filesystem::create_directories(out_dir);
  Rng rng(seed);

  // Formant bands; per-speaker positions within each band.
  const double bands[3][2] = {{300.0, 900.0}, {1000.0, 2000.0}, {2200.0, 3600.0}};

  CorpusManifest manifest;
  for (int s = 0; s < n_speakers; ++s) {
    SpeakerVoice voice;
    voice.pitch_hz = rng.uniform(80.0, 240.0);
    for (int j = 0; j < 3; ++j) voice.formants[j] = rng.uniform(bands[j][0], bands[j][1]);

    char spk_id[32];
    std::snprintf(spk_id, sizeof(spk_id), "spk%03d", s);
    const std::string split = (s >= n_speakers - n_test_speakers) ? "test" : "train";

    for (int u = 0; u < utts_per_speaker; ++u) {
      const double dur_s = rng.uniform(2.0, 5.0);
      const std::size_t n = static_cast<std::size_t>(dur_s * kSampleRate);
      const double pitch = voice.pitch_hz * rng.uniform(0.97, 1.03);
      const double period = kSampleRate / pitch;

      // Slow positive amplitude envelope from two sinusoids.
      const double f_env1 = rng.uniform(0.5, 2.0), f_env2 = rng.uniform(2.0, 4.0);
      const double ph1 = rng.uniform(0.0, 2.0 * M_PI), ph2 = rng.uniform(0.0, 2.0 * M_PI);

      Resonator res[3] = {Resonator(voice.formants[0], 0.985), Resonator(voice.formants[1], 0.975),
                          Resonator(voice.formants[2], 0.965)};

      // Pseudo-phonetic segments: the resonator center frequencies stay
      // fixed per speaker, but each 0.25-0.5 s segment re-weights the
      // three resonators. Frames then differ from the utterance average
      // in a speaker-specific way, so identity survives per-utterance
      // mean normalization in the verification front-end.
      const double base_mix[3] = {1.0, 0.6, 0.4};
      double target_mix[3] = {1.0, 0.6, 0.4};
      double mix[3] = {1.0, 0.6, 0.4};
      std::size_t seg_end = 0;
      const double smooth = 0.995;  // ~25 ms one-pole gain glide

      Waveform w;
      w.samples.resize(n);
      double next_pulse = 0.0;
      double peak = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i >= seg_end) {
          seg_end = i + static_cast<std::size_t>(rng.uniform(0.25, 0.5) * kSampleRate);
          // One dominant formant per segment, the others attenuated.
          const int dominant = rng.uniform_int(3);
          for (int j = 0; j < 3; ++j)
            target_mix[j] = base_mix[j] * (j == dominant ? 1.0 : rng.uniform(0.05, 0.35));
        }
        double x = 0.0;
        if (static_cast<double>(i) >= next_pulse) {
          x = 1.0;
          next_pulse += period;
        }
        x += 0.002 * (rng.uniform() - 0.5);  // aspiration noise
        double y = 0.0;
        for (int j = 0; j < 3; ++j) {
          mix[j] = smooth * mix[j] + (1.0 - smooth) * target_mix[j];
          y += mix[j] * res[j].step(x);
        }
        const double t = static_cast<double>(i) / kSampleRate;
        const double env = 0.35 + 0.4 * (0.5 + 0.5 * std::sin(2.0 * M_PI * f_env1 * t + ph1)) +
                           0.25 * (0.5 + 0.5 * std::sin(2.0 * M_PI * f_env2 * t + ph2));
        w.samples[i] = y * env;
        peak = std::max(peak, std::abs(w.samples[i]));
      }
      if (peak > 0.0) {
        const double gain = 0.5 / peak;
        for (auto& v : w.samples) v *= gain;
      }

      char utt_id[48];
      std::snprintf(utt_id, sizeof(utt_id), "%s_u%03d", spk_id, u);
      const std::string path = out_dir + "/" + utt_id + ".wav";
      save_wav(path, w);

      UttRecord rec;
      rec.utt = utt_id;
      rec.spk = spk_id;
      rec.path = path;
      rec.dur_s = w.duration_s();
      rec.split = split;
      manifest.records.push_back(std::move(rec));
    }
  }
  return manifest;
}

void save_corpus_manifest(const std::string& path, const CorpusManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write manifest: " + path);
  for (const auto& r : m.records) {
    json j = {{"utt", r.utt}, {"spk", r.spk}, {"path", r.path}, {"dur_s", r.dur_s},
              {"split", r.split}};
    out << j.dump() << "\n";
  }
}

CorpusManifest load_corpus_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("corpus manifest not found: " + path);
  CorpusManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InputError("malformed manifest line in " + path);
    UttRecord r;
    r.utt = j.at("utt").get<std::string>();
    r.spk = j.at("spk").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.dur_s = j.at("dur_s").get<double>();
    r.split = j.value("split", "train");
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_mixture_manifest(const std::string& path, const std::vector<MixtureSpec>& specs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write manifest: " + path);
  for (const auto& s : specs) {
    json j = {{"mix_id", s.mix_id},   {"target", s.target_utt}, {"interferer", s.interferer_utt},
              {"aux", s.aux_utt},     {"snr_db", s.snr_db},     {"split", s.split},
              {"path", s.path},       {"target_ref_path", s.target_ref_path},
              {"norm_gain", s.norm_gain}};
    out << j.dump() << "\n";
  }
}

std::vector<MixtureSpec> load_mixture_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("mixture manifest not found: " + path);
  std::vector<MixtureSpec> specs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InputError("malformed manifest line in " + path);
    MixtureSpec s;
    s.mix_id = j.at("mix_id").get<std::string>();
    s.target_utt = j.at("target").get<std::string>();
    s.interferer_utt = j.at("interferer").get<std::string>();
    s.aux_utt = j.at("aux").get<std::string>();
    s.snr_db = j.at("snr_db").get<double>();
    s.split = j.at("split").get<std::string>();
    s.path = j.value("path", "");
    s.target_ref_path = j.value("target_ref_path", "");
    s.norm_gain = j.value("norm_gain", 1.0);
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace tsesv
