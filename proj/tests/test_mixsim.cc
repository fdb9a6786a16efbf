// Unit tests for mixture simulation, dataset planning and the synthetic
// corpus generator.

#include "tsesv/mixsim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "tsesv/common.hpp"
#include "tsesv/signal.hpp"

using namespace tsesv;

namespace {

Waveform tone(std::size_t n, double freq, double amp, double phase = 0.0) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / kSampleRate + phase);
  return w;
}

double measured_snr_db(const Waveform& target, const Waveform& interferer) {
  double pt = 0.0, pi = 0.0;
  for (double s : target.samples) pt += s * s;
  for (double s : interferer.samples) pi += s * s;
  return 10.0 * std::log10(pt / pi);
}

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

CorpusManifest tiny_corpus(int n_speakers = 4, int utts = 3) {
  // In-memory manifest; paths unused by build_dataset.
  CorpusManifest m;
  for (int s = 0; s < n_speakers; ++s) {
    for (int u = 0; u < utts; ++u) {
      UttRecord r;
      r.spk = "s" + std::to_string(s);
      r.utt = r.spk + "_u" + std::to_string(u);
      r.path = "";
      r.dur_s = 3.0;
      r.split = "test";
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("simulate_mixture: equal RMS at 0 dB gives unit gain") {
  Waveform t = tone(4000, 500.0, 0.3);
  Waveform i = tone(4000, 700.0, 0.3);
  // Same amplitude sinusoids have (essentially) equal RMS.
  MixtureResult r = simulate_mixture(t, i, 0.0);
  double g = r.interferer_ref.samples[100] / i.samples[100];
  CHECK(g == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("simulate_mixture: target RMS twice interferer RMS at 0 dB gives gain 2") {
  Waveform t = tone(4096, 500.0, 0.4);
  Waveform i = tone(4096, 700.0, 0.2);
  // Exact RMS ratio requires whole periods; use the formula check instead.
  const double g_expected = (rms(t) / rms(i)) * 1.0;
  MixtureResult r = simulate_mixture(t, i, 0.0);
  double g = r.interferer_ref.samples[50] / i.samples[50];
  CHECK(g == doctest::Approx(g_expected).epsilon(1e-12));
  CHECK(g == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("simulate_mixture: 5 dB at equal RMS gives gain 10^(-1/4)") {
  Waveform t = tone(4000, 500.0, 0.25);
  Waveform i = tone(4000, 700.0, 0.25);
  const double g_expected = (rms(t) / rms(i)) * std::pow(10.0, -0.25);
  MixtureResult r = simulate_mixture(t, i, 5.0);
  double g = r.interferer_ref.samples[70] / i.samples[70];
  CHECK(g == doctest::Approx(g_expected).epsilon(1e-12));
  CHECK(g == doctest::Approx(0.5623).epsilon(1e-3));
}

TEST_CASE("simulate_mixture: measured SNR matches the request to 1e-6 dB") {
  Rng rng(3);
  Waveform t, i;
  t.samples.resize(5000);
  i.samples.resize(6000);
  for (auto& s : t.samples) s = 0.4 * rng.uniform(-1.0, 1.0);
  for (auto& s : i.samples) s = 0.7 * rng.uniform(-1.0, 1.0);
  for (double snr : {0.0, 1.7, 5.0}) {
    MixtureResult r = simulate_mixture(t, i, snr);
    // target_ref is the truncated target (norm gain cancels in the ratio).
    CHECK(measured_snr_db(r.target_ref, r.interferer_ref) == doctest::Approx(snr).epsilon(1e-6));
  }
}

TEST_CASE("simulate_mixture: mixture minus scaled interferer is the truncated target") {
  Rng rng(4);
  Waveform t, i;
  t.samples.resize(4000);
  i.samples.resize(3500);
  for (auto& s : t.samples) s = 0.2 * rng.uniform(-1.0, 1.0);
  for (auto& s : i.samples) s = 0.2 * rng.uniform(-1.0, 1.0);
  MixtureResult r = simulate_mixture(t, i, 2.0);
  REQUIRE(r.mixture.samples.size() == 3500);
  CHECK(r.norm_gain == 1.0);
  for (std::size_t n = 0; n < 3500; ++n) {
    double diff = r.mixture.samples[n] - r.interferer_ref.samples[n];
    CHECK(std::abs(diff - t.samples[n]) < 1e-9);
  }
}

TEST_CASE("simulate_mixture: clipping triggers a joint normalizing gain") {
  Waveform t = tone(2000, 400.0, 0.9);
  Waveform i = tone(2000, 600.0, 0.9);
  MixtureResult r = simulate_mixture(t, i, 0.0);
  CHECK(r.norm_gain < 1.0);
  double peak = 0.0;
  for (double s : r.mixture.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak <= 1.0 + 1e-12);
  // The same gain applies to both references: mixture is still their sum.
  for (std::size_t n = 0; n < r.mixture.samples.size(); ++n)
    CHECK(std::abs(r.mixture.samples[n] - r.target_ref.samples[n] - r.interferer_ref.samples[n]) <
          1e-12);
}

TEST_CASE("simulate_mixture: zero-energy input is rejected") {
  Waveform t = tone(2000, 400.0, 0.5);
  Waveform z;
  z.samples.assign(2000, 0.0);
  CHECK_THROWS_AS(simulate_mixture(t, z, 0.0), InputError);
  CHECK_THROWS_AS(simulate_mixture(z, t, 0.0), InputError);
}

TEST_CASE("build_dataset: invariants hold on every generated spec") {
  CorpusManifest corpus = tiny_corpus(4, 3);
  MixtureCounts counts{0, 0, 10};
  auto specs = build_dataset(corpus, counts, 0.0, 5.0, 123);
  REQUIRE(specs.size() == 10);
  for (const auto& s : specs) {
    CHECK(corpus.find(s.target_utt).spk != corpus.find(s.interferer_utt).spk);
    CHECK(corpus.find(s.aux_utt).spk == corpus.find(s.target_utt).spk);
    CHECK(s.aux_utt != s.target_utt);
    CHECK(s.snr_db >= 0.0);
    CHECK(s.snr_db <= 5.0);
    CHECK(s.split == "test");
  }
}

TEST_CASE("build_dataset: deterministic for a fixed seed, different across seeds") {
  CorpusManifest corpus = tiny_corpus(6, 4);
  for (auto& r : corpus.records) r.split = (r.spk == "s4" || r.spk == "s5") ? "test" : "train";
  MixtureCounts counts{60, 20, 20};
  auto a = build_dataset(corpus, counts, 0.0, 5.0, 9);
  auto b = build_dataset(corpus, counts, 0.0, 5.0, 9);
  REQUIRE(a.size() == b.size());
  bool identical = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    identical = identical && a[k].target_utt == b[k].target_utt &&
                a[k].interferer_utt == b[k].interferer_utt && a[k].aux_utt == b[k].aux_utt &&
                a[k].snr_db == b[k].snr_db;
  }
  CHECK(identical);

  auto c = build_dataset(corpus, counts, 0.0, 5.0, 10);
  bool any_diff = false;
  for (std::size_t k = 0; k < a.size(); ++k)
    any_diff = any_diff || a[k].target_utt != c[k].target_utt ||
               a[k].interferer_utt != c[k].interferer_utt || a[k].snr_db != c[k].snr_db;
  CHECK(any_diff);
}

TEST_CASE("build_dataset: train/dev mixtures use train speakers only") {
  CorpusManifest corpus = tiny_corpus(6, 3);
  for (auto& r : corpus.records) r.split = (r.spk == "s4" || r.spk == "s5") ? "test" : "train";
  auto specs = build_dataset(corpus, MixtureCounts{30, 10, 10}, 0.0, 5.0, 17);
  for (const auto& s : specs) {
    const std::string expected = (s.split == "test") ? "test" : "train";
    CHECK(corpus.find(s.target_utt).split == expected);
    CHECK(corpus.find(s.interferer_utt).split == expected);
  }
}

TEST_CASE("build_dataset: too-small corpus is rejected") {
  CorpusManifest corpus = tiny_corpus(2, 1);  // one utt per speaker
  CHECK_THROWS_AS(build_dataset(corpus, MixtureCounts{0, 0, 5}, 0.0, 5.0, 1), InputError);
}

TEST_CASE("synth_corpus: counts, determinism and speaker separability") {
  const std::string dir_a = tmp_dir("tsesv_corpus_a");
  const std::string dir_b = tmp_dir("tsesv_corpus_b");
  CorpusManifest a = synth_corpus(8, 4, 3, 42, dir_a);
  CorpusManifest b = synth_corpus(8, 4, 3, 42, dir_b);

  REQUIRE(a.records.size() == 32);
  std::size_t wavs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir_a))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 32);

  SUBCASE("same seed gives byte-identical corpus") {
    for (std::size_t k = 0; k < a.records.size(); ++k) {
      std::ifstream fa(a.records[k].path, std::ios::binary);
      std::ifstream fb(b.records[k].path, std::ios::binary);
      std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
      std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
      CHECK(ca == cb);
    }
  }

  SUBCASE("test speakers are disjoint from train speakers") {
    auto train = a.speakers("train");
    auto test = a.speakers("test");
    CHECK(train.size() == 5);
    CHECK(test.size() == 3);
    for (const auto& t : test) CHECK(std::find(train.begin(), train.end(), t) == train.end());
  }

  SUBCASE("long-term spectra are more similar within than across speakers") {
    // Mean per-bin magnitude as the long-term spectrum.
    std::map<std::string, std::vector<Vec>> spectra;
    for (const auto& r : a.records) {
      Waveform w = load_wav(r.path);
      Mat mag = magnitude(stft(w));
      Vec lts = mag.colwise().mean().transpose();
      lts /= lts.norm();
      spectra[r.spk].push_back(lts);
    }
    double within = 0.0, across = 0.0;
    int n_within = 0, n_across = 0;
    std::vector<std::string> spks;
    for (auto& [spk, v] : spectra) spks.push_back(spk);
    for (std::size_t i = 0; i < spks.size(); ++i) {
      const auto& vi = spectra[spks[i]];
      for (std::size_t u = 0; u < vi.size(); ++u)
        for (std::size_t v = u + 1; v < vi.size(); ++v) {
          within += vi[u].dot(vi[v]);
          ++n_within;
        }
      for (std::size_t j = i + 1; j < spks.size(); ++j) {
        for (const auto& x : vi)
          for (const auto& y : spectra[spks[j]]) {
            across += x.dot(y);
            ++n_across;
          }
      }
    }
    CHECK(within / n_within > across / n_across);
  }

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("manifest round trips through JSON lines") {
  const std::string dir = tmp_dir("tsesv_manifest");
  CorpusManifest m = tiny_corpus(4, 2);
  const std::string cpath = dir + "/corpus.jsonl";
  save_corpus_manifest(cpath, m);
  CorpusManifest r = load_corpus_manifest(cpath);
  REQUIRE(r.records.size() == m.records.size());
  for (std::size_t k = 0; k < m.records.size(); ++k) {
    CHECK(r.records[k].utt == m.records[k].utt);
    CHECK(r.records[k].spk == m.records[k].spk);
    CHECK(r.records[k].split == m.records[k].split);
  }

  auto specs = build_dataset(m, MixtureCounts{0, 0, 5}, 0.0, 5.0, 3);
  const std::string mpath = dir + "/mix.jsonl";
  save_mixture_manifest(mpath, specs);
  auto rs = load_mixture_manifest(mpath);
  REQUIRE(rs.size() == specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    CHECK(rs[k].mix_id == specs[k].mix_id);
    CHECK(rs[k].target_utt == specs[k].target_utt);
    CHECK(rs[k].snr_db == specs[k].snr_db);
  }
  CHECK_THROWS_AS(load_mixture_manifest(dir + "/missing.jsonl"), InputError);
  std::filesystem::remove_all(dir);
}
