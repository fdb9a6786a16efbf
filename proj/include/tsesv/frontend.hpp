// frontend.hpp
// Verification features: 60-d MFCC vectors (19 cepstra + log-energy with
// deltas and double deltas), sliding cepstral mean normalization and
// energy-based voice activity detection.

#pragma once

#include <vector>

#include "tsesv/common.hpp"
#include "tsesv/wav.hpp"

namespace tsesv {

constexpr int kNumCepstra = 19;
constexpr int kFeatDim = 60;  // (19 + energy) * 3
constexpr int kMfccFrameLen = 200;  // 25 ms at 8 kHz
constexpr int kMfccHop = 80;        // 10 ms
constexpr int kNumMelFilters = 23;
constexpr double kMelLowHz = 20.0;
constexpr double kMelHighHz = 3800.0;
constexpr double kPreEmphasis = 0.97;
constexpr int kCmnWindow = 300;  // frames, 3 s

struct AcousticFeatures {
  Mat frames;      // T x 60
  Vec log_energy;  // T, pre-CMN log frame energy (for the VAD)
  int num_frames() const { return static_cast<int>(frames.rows()); }
};

using VadMask = std::vector<bool>;

// The 23 triangular mel filters over the 129-bin power spectrum.
Mat mel_filterbank();

AcousticFeatures mfcc(const Waveform& w);

// Centered 300-frame sliding mean subtraction over all 60 dims.
AcousticFeatures cmn(const AcousticFeatures& f);

// Keep a frame iff its log energy is within 3.0 (natural log) of the
// utterance maximum; at least one frame is always kept.
VadMask energy_vad(const AcousticFeatures& f);

// mfcc -> cmn -> drop VAD-rejected frames; the verification front-end.
Mat verification_features(const Waveform& w);

}  // namespace tsesv
