// wav.hpp
// RIFF/WAVE PCM16 mono I/O at 8 kHz.

#pragma once

#include <string>
#include <vector>

namespace tsesv {

constexpr int kSampleRate = 8000;

struct Waveform {
  std::vector<double> samples;  // nominal range [-1, 1)
  int sample_rate_hz = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

// Reads a mono PCM16 WAV file. Samples are scaled to [-1, 1) by dividing
// by 32768. Rejects non-mono, non-PCM16 and any sample rate other than
// 8000 Hz (no resampling).
Waveform load_wav(const std::string& path);

// Writes a mono PCM16 WAV file. Samples are clamped to [-1, 1] and
// rounded to the nearest representable PCM16 value.
void save_wav(const std::string& path, const Waveform& w);

double rms(const Waveform& w);

}  // namespace tsesv
