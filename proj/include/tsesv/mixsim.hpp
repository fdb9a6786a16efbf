// mixsim.hpp
// Two-speaker mixture simulation: SNR scaling, pairing plans with
// auxiliary-utterance selection, and a synthetic resonator-speaker corpus
// standing in for a licensed one.

#pragma once

#include <string>
#include <vector>

#include "tsesv/common.hpp"
#include "tsesv/wav.hpp"

namespace tsesv {

struct UttRecord {
  std::string utt;
  std::string spk;
  std::string path;
  double dur_s = 0.0;
  std::string split;  // "train" or "test"; dev mixtures draw from train speakers
};

struct CorpusManifest {
  std::vector<UttRecord> records;

  const UttRecord& find(const std::string& utt) const;
  std::vector<std::string> speakers(const std::string& split) const;
  std::vector<const UttRecord*> utts_of(const std::string& spk) const;
};

struct MixtureSpec {
  std::string mix_id;
  std::string target_utt;
  std::string interferer_utt;
  std::string aux_utt;
  double snr_db = 0.0;
  std::string split;  // train / dev / test
  // Filled in once audio is rendered:
  std::string path;             // mixture wav
  std::string target_ref_path;  // truncated (and jointly normalized) target
  double norm_gain = 1.0;       // joint gain applied on clipping, else 1
};

struct MixtureCounts {
  int train = 0;
  int dev = 0;
  int test = 0;
};

struct MixtureResult {
  Waveform mixture;
  Waveform target_ref;      // truncated target, joint gain applied
  Waveform interferer_ref;  // SNR-scaled interferer, joint gain applied
  double norm_gain = 1.0;
};

// Scales the interferer to the requested SNR (whole-utterance RMS),
// truncates both to the shorter length and sums. If the sum would clip,
// both references and the mixture get the same normalizing gain.
// mixture == target_ref + interferer_ref holds exactly.
MixtureResult simulate_mixture(const Waveform& target, const Waveform& interferer, double snr_db);

// Deterministic mixture plan. Train/dev mixtures pair train-split
// speakers, test mixtures pair test-split speakers. SNR uniform on
// [snr_min, snr_max].
std::vector<MixtureSpec> build_dataset(const CorpusManifest& corpus, const MixtureCounts& counts,
                                       double snr_min_db, double snr_max_db, std::uint64_t seed);

// Synthetic speaker corpus: each speaker is a pitch plus three resonator
// center frequencies; utterances are pulse-train-excited resonator output
// with a random amplitude envelope, 2-5 s long. WAVs go to out_dir.
// n_test_speakers of the n_speakers are assigned to the test split.
CorpusManifest synth_corpus(int n_speakers, int utts_per_speaker, int n_test_speakers,
                            std::uint64_t seed, const std::string& out_dir);

// JSON-lines manifest I/O.
void save_corpus_manifest(const std::string& path, const CorpusManifest& m);
CorpusManifest load_corpus_manifest(const std::string& path);
void save_mixture_manifest(const std::string& path, const std::vector<MixtureSpec>& specs);
std::vector<MixtureSpec> load_mixture_manifest(const std::string& path);

}  // namespace tsesv
