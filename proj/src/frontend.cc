// frontend.cc

#include "tsesv/frontend.hpp"

#include <cmath>
#include <complex>

#include "tsesv/signal.hpp"

namespace tsesv {

namespace {

constexpr double kLogFloor = 1e-10;
constexpr int kFftLen = 256;
constexpr int kSpecBins = 129;

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

const std::vector<double>& mfcc_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kMfccFrameLen);
    for (int n = 0; n < kMfccFrameLen; ++n)
      w[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (kMfccFrameLen - 1));
    return w;
  }();
  return win;
}

}  // namespace

Mat mel_filterbank() {
  static const Mat bank = [] {
    Mat fb = Mat::Zero(kNumMelFilters, kSpecBins);
    const double mel_lo = hz_to_mel(kMelLowHz);
    const double mel_hi = hz_to_mel(kMelHighHz);
    std::vector<double> edges(kNumMelFilters + 2);
    for (int i = 0; i < kNumMelFilters + 2; ++i)
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kNumMelFilters + 1));
    for (int m = 0; m < kNumMelFilters; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < kSpecBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftLen;
        if (f > lo && f < mid)
          fb(m, k) = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi)
          fb(m, k) = (hi - f) / (hi - mid);
      }
    }
    return fb;
  }();
  return bank;
}

AcousticFeatures mfcc(const Waveform& w) {
  const std::size_t n = w.samples.size();
  if (n < static_cast<std::size_t>(kMfccFrameLen))
    throw InputError("waveform too short for mfcc (need >= 25 ms)");

  const int num_frames = 1 + static_cast<int>((n - kMfccFrameLen) / kMfccHop);
  const auto& win = mfcc_window();
  const Mat& fb = mel_filterbank();

  // DCT-II basis, rows c1..c19.
  static const Mat dct = [] {
    Mat d(kNumCepstra, kNumMelFilters);
    for (int k = 1; k <= kNumCepstra; ++k)
      for (int j = 0; j < kNumMelFilters; ++j)
        d(k - 1, j) = std::sqrt(2.0 / kNumMelFilters) *
                      std::cos(M_PI * k * (j + 0.5) / kNumMelFilters);
    return d;
  }();

  Mat statics(num_frames, kNumCepstra + 1);
  Vec log_e(num_frames);
  std::vector<std::complex<double>> buf(kFftLen);
  std::vector<double> frame(kMfccFrameLen);

  for (int t = 0; t < num_frames; ++t) {
    const double* seg = w.samples.data() + static_cast<std::size_t>(t) * kMfccHop;

    // Log energy from the raw frame, floored to keep silence finite.
    double energy = 0.0;
    for (int i = 0; i < kMfccFrameLen; ++i) energy += seg[i] * seg[i];
    log_e(t) = std::log(std::max(energy, kLogFloor));

    // Pre-emphasis within the frame.
    frame[0] = seg[0] - kPreEmphasis * (t > 0 ? seg[-1] : seg[0]);
    for (int i = 1; i < kMfccFrameLen; ++i) frame[i] = seg[i] - kPreEmphasis * seg[i - 1];

    for (int i = 0; i < kMfccFrameLen; ++i)
      buf[i] = std::complex<double>(win[i] * frame[i], 0.0);
    for (int i = kMfccFrameLen; i < kFftLen; ++i) buf[i] = 0.0;
    fft_inplace(buf, false);

    Vec power(kSpecBins);
    for (int k = 0; k < kSpecBins; ++k) power(k) = std::norm(buf[k]);

    Vec mel = fb * power;
    Vec log_mel = mel.array().max(kLogFloor).log();
    statics.row(t).head(kNumCepstra) = (dct * log_mel).transpose();
    statics(t, kNumCepstra) = log_e(t);
  }

  auto [d, a] = dynamics(statics);
  AcousticFeatures out;
  out.frames.resize(num_frames, kFeatDim);
  out.frames << statics, d, a;
  out.log_energy = log_e;
  return out;
}

AcousticFeatures cmn(const AcousticFeatures& f) {
  const int t_total = f.num_frames();
  if (t_total < 1) throw InputError("cmn on empty features");
  const int half = kCmnWindow / 2;

  AcousticFeatures out;
  out.frames.resizeLike(f.frames);
  out.log_energy = f.log_energy;
  for (int t = 0; t < t_total; ++t) {
    // Centered window, shifted to stay inside the utterance so short
    // utterances reduce to global mean subtraction.
    int lo = t - half;
    lo = std::min(lo, t_total - kCmnWindow);
    lo = std::max(lo, 0);
    int hi = std::min(t_total, lo + kCmnWindow);
    Eigen::RowVectorXd mean = f.frames.middleRows(lo, hi - lo).colwise().mean();
    out.frames.row(t) = f.frames.row(t) - mean;
  }
  return out;
}

VadMask energy_vad(const AcousticFeatures& f) {
  const int t_total = f.num_frames();
  if (f.log_energy.size() != t_total) throw InputError("vad needs pre-CMN log energy");
  const double threshold = f.log_energy.maxCoeff() - 3.0;
  VadMask mask(t_total);
  bool any = false;
  for (int t = 0; t < t_total; ++t) {
    mask[t] = f.log_energy(t) > threshold;
    any = any || mask[t];
  }
  if (!any) {
    // Relative threshold keeps the max frame by construction; this only
    // guards exact ties at -inf-like floors.
    int best = 0;
    f.log_energy.maxCoeff(&best);
    mask[best] = true;
  }
  return mask;
}

Mat verification_features(const Waveform& w) {
  AcousticFeatures feats = mfcc(w);
  AcousticFeatures normed = cmn(feats);
  VadMask keep = energy_vad(feats);
  int kept = 0;
  for (bool b : keep) kept += b ? 1 : 0;
  Mat out(kept, kFeatDim);
  int r = 0;
  for (int t = 0; t < normed.num_frames(); ++t)
    if (keep[t]) out.row(r++) = normed.frames.row(t);
  return out;
}

}  // namespace tsesv
