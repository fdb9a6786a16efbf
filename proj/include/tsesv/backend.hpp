// backend.hpp
// i-vector/PLDA verification stack: diagonal-covariance GMM-UBM via EM,
// Baum-Welch statistics, total-variability training, i-vector
// extraction, LDA, and Gaussian PLDA training and LLR scoring.

#pragma once

#include <string>
#include <vector>

#include "tsesv/common.hpp"

namespace tsesv {

struct Gmm {
  Vec weights;  // C, sums to 1
  Mat means;    // C x D
  Mat vars;     // C x D diagonal covariances, >= floor

  int num_components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }

  // Per-frame log-densities, T x C.
  Mat component_log_densities(const Mat& frames) const;
  double log_likelihood(const Mat& frames) const;
};

struct BwStats {
  Vec n;  // C zeroth-order counts
  Mat f;  // C x D first-order stats, centered on the UBM means
};

struct TMatrix {
  Mat t;  // (C*D) x R
  int rank() const { return static_cast<int>(t.cols()); }
};

struct IVector {
  Vec w;
};

// Centering + symmetric whitening + optional length normalization,
// estimated on the PLDA training set and applied to every i-vector
// before scoring.
struct PldaPreprocess {
  Vec mean;
  Mat whiten;  // d x d
  bool length_norm = true;

  Vec apply(const Vec& x) const;
};

struct PldaModel {
  Vec mu;     // d
  Mat v;      // d x q speaker subspace
  Mat sigma;  // d x d residual covariance, SPD
};

struct UbmTrainResult {
  Gmm gmm;
  std::vector<double> log_liks;  // per EM iteration, total over frames
  int reseeded = 0;              // empty components re-seeded during EM
};

struct TmatTrainResult {
  TMatrix tmat;
  std::vector<double> objectives;  // T-dependent part of the log-likelihood
};

struct PldaTrainResult {
  PldaPreprocess prep;
  PldaModel model;
  std::vector<double> log_liks;  // per EM iteration, total over speakers
};

// Binary-split initialization from the global Gaussian, then EM.
// Variance floor = 1e-3 x global variance per dimension.
UbmTrainResult train_ubm(const std::vector<Mat>& features, int num_components, int iters,
                         std::uint64_t seed);

// Zeroth/first-order sufficient statistics under the UBM posterior.
BwStats bw_stats(const Gmm& gmm, const Mat& frames);

// EM for the total-variability model f_c ~ N(n_c T_c w, n_c Sigma_c),
// w ~ N(0, I). The UBM covariances serve as the residual model.
TmatTrainResult train_tmatrix(const std::vector<BwStats>& stats, const Gmm& gmm, int rank,
                              int iters, std::uint64_t seed);

// Posterior mean w = (I + sum_c n_c T_c' Sigma_c^-1 T_c)^-1 T' Sigma^-1 f.
IVector extract_ivector(const TMatrix& tmat, const Gmm& gmm, const BwStats& stats);

// Top generalized eigenvectors of (S_between, S_within); projection is
// P' x with P of shape R x out_dim.
Mat train_lda(const std::vector<Vec>& ivectors, const std::vector<int>& labels, int out_dim);

// Preprocessing (center, whiten, length-normalize) followed by EM for
// x = mu + V y + eps with y shared across a speaker's utterances.
PldaTrainResult train_plda(const std::vector<Vec>& ivectors, const std::vector<int>& labels,
                           int num_latent, int iters, std::uint64_t seed,
                           bool length_norm = true);

// log N([e;t]; 0, [[St,Sa],[Sa,St]]) - log N(e;0,St) - log N(t;0,St)
// with Sa = VV', St = VV' + Sigma. Inputs must be preprocessed.
double plda_score(const PldaModel& model, const Vec& enroll, const Vec& test);

// The trained verification stack.
struct BackendModel {
  Gmm ubm;
  TMatrix tmat;
  Mat lda;  // R x lda_dim
  PldaPreprocess prep;
  PldaModel plda;

  // i-vector -> scoring space (LDA, then PLDA preprocessing).
  Vec embed(const IVector& iv) const;

  void save(const std::string& path) const;
  static BackendModel load(const std::string& path);
};

// i-vector archive keyed by utterance id.
struct IvectorArchive {
  std::vector<std::string> utts;
  std::vector<Vec> ivectors;

  const Vec& find(const std::string& utt) const;
  void save(const std::string& path) const;
  static IvectorArchive load(const std::string& path);
};

}  // namespace tsesv
