// extractor.hpp
// Target-speaker extraction networks (SBF-MTSAL and SBF-MTSAL-Concat):
// auxiliary-network-conditioned BLSTM mask estimation, phase-sensitive
// mask targets, the magnitude + temporal spectrum approximation loss,
// hand-derived reverse-mode gradients and Adam training.

#pragma once

#include <string>
#include <vector>

#include "tsesv/common.hpp"
#include "tsesv/signal.hpp"
#include "tsesv/wav.hpp"

namespace tsesv {

enum class Variant { kSbfMtsal, kSbfMtsalConcat };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // "sbf-mtsal" / "sbf-mtsal-concat"

struct ExtractorConfig {
  Variant variant = Variant::kSbfMtsalConcat;
  int bins = kBins;       // mask layer width
  int blstm_cells = 64;   // per direction (paper scale: 512)
  int n_sublayers = 8;    // adaptation sub-layers M (paper scale: 30)
  int embed_dim = 16;     // concat speaker embedding (paper scale: 30)
  int aux_hidden = 64;    // aux net hidden width (paper scale: 512 / 256)
  int ff_hidden = 64;     // mask net feed-forward width (paper scale: 512)
  double lr0 = 5e-4;
  double lr_decay = 0.7;
  int batch = 4;          // mixtures per minibatch (paper scale: 16)
  int min_epochs = 30;
  int max_epochs = 100;
  double stop_rel_loss = 0.01;
  bool log_magnitude = false;  // feed log1p(magnitude) to the networks
  std::uint64_t seed = 0;

  void validate() const;
};

// Named parameter tensors with a stable iteration order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Mat> values;

  Mat& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Mat& get(const std::string& name);
  const Mat& get(const std::string& name) const;
  ParamSet zeros_like() const;
  bool all_finite() const;
};

// T x 129 phase-sensitive mask: clip(|X|/max(|Y|,eps) * cos(th_X - th_Y), 0, 1).
Mat psm_target(const ComplexSpectrogram& ref, const ComplexSpectrogram& mix);

// The loss target G = clip(|X| cos(th_X - th_Y), 0, |Y|): the magnitude a
// [0,1] mask on |Y| can realize exactly.
Mat psm_magnitude_target(const ComplexSpectrogram& ref, const ComplexSpectrogram& mix);

// Mean squared error between masked magnitude E = mask .* |Y| and G on the
// static, delta and acceleration trajectories, averaged over T*F.
double mtsal_loss(const Mat& mask, const Mat& mix_mag, const Mat& target_g);
double mtsal_loss(const Mat& mask, const Mat& mix_mag, const ComplexSpectrogram& ref,
                  const ComplexSpectrogram& mix);
// Also fills d(loss)/d(mask).
double mtsal_loss_grad(const Mat& mask, const Mat& mix_mag, const Mat& target_g, Mat* dmask);

struct TrainExample {
  Mat mix_mag;   // T x 129
  Mat aux_mag;   // Ta x 129
  Mat target_g;  // T x 129
};

class ExtractorModel {
 public:
  ExtractorConfig config;
  ParamSet params;

  static ExtractorModel init(const ExtractorConfig& cfg);

  // T x 129 mask in (0, 1) (sigmoid output layer).
  Mat forward(const Mat& mix_mag, const Mat& aux_mag) const;

  // Loss and parameter gradients for one example (grads accumulated).
  double loss_and_grad(const TrainExample& ex, ParamSet& grads) const;

  void save(const std::string& path) const;
  static ExtractorModel load(const std::string& path);

 private:
  struct Cache;
  Mat forward_impl(const Mat& mix_mag, const Mat& aux_mag, Cache* cache) const;
  void backward_impl(const Cache& cache, const Mat& dmask, ParamSet& grads) const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ExtractorModel model;  // checkpoint at best dev loss
  std::vector<EpochLog> log;
  bool diverged = false;  // a non-finite loss ended training early
};

// Adam training with the dev-loss driven learning-rate decay and
// relative-improvement stopping rule.
TrainResult train_extractor(const ExtractorConfig& cfg, const std::vector<TrainExample>& train,
                            const std::vector<TrainExample>& dev);

void save_training_log(const std::string& path, const std::vector<EpochLog>& log);

// stft -> forward -> mask .* |Y| -> mixture-phase reconstruction.
Waveform extract(const ExtractorModel& model, const Waveform& mixture, const Waveform& aux);

// Builds the (mix_mag, aux_mag, target_g) triple for one mixture.
TrainExample make_train_example(const Waveform& mixture, const Waveform& target_ref,
                                const Waveform& aux);

}  // namespace tsesv
