// signal.hpp
// STFT analysis/synthesis with a normalized square-root Hamming window
// (32 ms frames, 16 ms shift at 8 kHz), magnitude dynamics, and
// mixture-phase reconstruction.

#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "tsesv/common.hpp"
#include "tsesv/wav.hpp"

namespace tsesv {

constexpr int kFrameLen = 256;
constexpr int kHop = 128;
constexpr int kBins = 129;  // kFrameLen / 2 + 1

struct ComplexSpectrogram {
  CMat frames;  // T x 129
  int num_frames() const { return static_cast<int>(frames.rows()); }
};

// T x 129, entries >= 0.
using MagnitudeSpectrogram = Mat;

// In-place iterative radix-2 FFT; size must be a power of two. The
// inverse includes the 1/N factor.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// The analysis/synthesis window: sqrt of a periodic Hamming window,
// scaled so that squared windows overlap-added at hop 128 sum to one.
const std::vector<double>& analysis_window();

ComplexSpectrogram stft(const Waveform& w);
Waveform istft(const ComplexSpectrogram& s);

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& s);

// istft(mag .* exp(i * angle(mix)))
Waveform reconstruct_with_mixture_phase(const MagnitudeSpectrogram& mag,
                                        const ComplexSpectrogram& mix);

// Number of samples covered by the frames of an STFT of the given length
// ((T - 1) * hop + frame_len); extraction outputs are truncated to this.
std::size_t frame_aligned_length(std::size_t num_samples);

// Regression delta over time (rows), window N=2, edge replication.
Mat delta(const Mat& m);

// (delta, acceleration) where acceleration = delta(delta(m)).
std::pair<Mat, Mat> dynamics(const Mat& m);

// Accumulates the adjoint of the delta operator: out += delta^T(g).
// Needed to backpropagate through the dynamics terms of the loss.
void delta_adjoint_accumulate(const Mat& g, Mat& out);

}  // namespace tsesv
