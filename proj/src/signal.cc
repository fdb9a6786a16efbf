// signal.cc

#include "tsesv/signal.hpp"

#include <cmath>

namespace tsesv {

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw InputError("fft size must be a power of two");

  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

const std::vector<double>& analysis_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kFrameLen);
    // Periodic Hamming; shifted copies at hop 128 sum to exactly 1.08,
    // so dividing the squared window by 1.08 gives OLA unity.
    for (int n = 0; n < kFrameLen; ++n) {
      double ham = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / kFrameLen);
      w[n] = std::sqrt(ham / 1.08);
    }
    return w;
  }();
  return win;
}

ComplexSpectrogram stft(const Waveform& w) {
  const std::size_t n = w.samples.size();
  if (n < static_cast<std::size_t>(kFrameLen))
    throw InputError("waveform too short for stft (need >= 256 samples)");

  const int num_frames = static_cast<int>((n - kFrameLen) / kHop) + 1;
  const std::vector<double>& win = analysis_window();

  ComplexSpectrogram out;
  out.frames.resize(num_frames, kBins);
  std::vector<std::complex<double>> buf(kFrameLen);
  for (int t = 0; t < num_frames; ++t) {
    const double* seg = w.samples.data() + static_cast<std::size_t>(t) * kHop;
    for (int i = 0; i < kFrameLen; ++i) buf[i] = std::complex<double>(win[i] * seg[i], 0.0);
    fft_inplace(buf, false);
    for (int k = 0; k < kBins; ++k) out.frames(t, k) = buf[k];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s) {
  const int num_frames = s.num_frames();
  if (num_frames < 1 || s.frames.cols() != kBins) throw InputError("malformed spectrogram");

  const std::vector<double>& win = analysis_window();
  const std::size_t out_len = static_cast<std::size_t>(num_frames - 1) * kHop + kFrameLen;

  Waveform w;
  w.samples.assign(out_len, 0.0);
  std::vector<std::complex<double>> buf(kFrameLen);
  for (int t = 0; t < num_frames; ++t) {
    for (int k = 0; k < kBins; ++k) buf[k] = s.frames(t, k);
    for (int k = kBins; k < kFrameLen; ++k) buf[k] = std::conj(s.frames(t, kFrameLen - k));
    fft_inplace(buf, true);
    double* dst = w.samples.data() + static_cast<std::size_t>(t) * kHop;
    for (int i = 0; i < kFrameLen; ++i) dst[i] += win[i] * buf[i].real();
  }
  return w;
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& s) { return s.frames.cwiseAbs(); }

Waveform reconstruct_with_mixture_phase(const MagnitudeSpectrogram& mag,
                                        const ComplexSpectrogram& mix) {
  if (mag.rows() != mix.frames.rows() || mag.cols() != mix.frames.cols())
    throw InputError("magnitude/mixture shape mismatch");

  ComplexSpectrogram s;
  s.frames.resize(mix.frames.rows(), mix.frames.cols());
  for (Eigen::Index t = 0; t < mix.frames.rows(); ++t) {
    for (Eigen::Index k = 0; k < mix.frames.cols(); ++k) {
      const std::complex<double> y = mix.frames(t, k);
      const double a = std::abs(y);
      // Zero mixture bin carries no usable phase; emit zero.
      s.frames(t, k) = (a > 0.0) ? y * (mag(t, k) / a) : std::complex<double>(0.0, 0.0);
    }
  }
  return istft(s);
}

std::size_t frame_aligned_length(std::size_t num_samples) {
  if (num_samples < static_cast<std::size_t>(kFrameLen)) return 0;
  const std::size_t t = (num_samples - kFrameLen) / kHop + 1;
  return (t - 1) * kHop + kFrameLen;
}

namespace {
// delta_t = sum_{n=1,2} n * (m_{t+n} - m_{t-n}) / 10, indices clamped.
constexpr double kDeltaDenom = 10.0;  // 2 * (1^2 + 2^2)

inline Eigen::Index clamp_index(Eigen::Index t, Eigen::Index rows) {
  if (t < 0) return 0;
  if (t >= rows) return rows - 1;
  return t;
}
}  // namespace

Mat delta(const Mat& m) {
  const Eigen::Index rows = m.rows();
  Mat d = Mat::Zero(rows, m.cols());
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int n = 1; n <= 2; ++n) {
      d.row(t) += (n / kDeltaDenom) *
                  (m.row(clamp_index(t + n, rows)) - m.row(clamp_index(t - n, rows)));
    }
  }
  return d;
}

std::pair<Mat, Mat> dynamics(const Mat& m) {
  Mat d = delta(m);
  Mat a = delta(d);
  return {std::move(d), std::move(a)};
}

void delta_adjoint_accumulate(const Mat& g, Mat& out) {
  const Eigen::Index rows = g.rows();
  if (out.rows() != rows || out.cols() != g.cols())
    throw InputError("delta adjoint shape mismatch");
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int n = 1; n <= 2; ++n) {
      out.row(clamp_index(t + n, rows)) += (n / kDeltaDenom) * g.row(t);
      out.row(clamp_index(t - n, rows)) -= (n / kDeltaDenom) * g.row(t);
    }
  }
}

}  // namespace tsesv
