// backend.cc

#include "tsesv/backend.hpp"

#include <algorithm>
#include <cmath>

#include "tsesv/model_io.hpp"

namespace tsesv {

using nlohmann::json;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

// ---------------------------------------------------------------------------
// GMM-UBM.

Mat Gmm::component_log_densities(const Mat& frames) const {
  const int c_total = num_components();
  const int d = dim();
  if (frames.cols() != d) throw InputError("feature dimension does not match the GMM");
  Mat out(frames.rows(), c_total);
  Vec log_norm(c_total);
  for (int c = 0; c < c_total; ++c)
    log_norm(c) = -0.5 * (d * kLog2Pi + vars.row(c).array().log().sum());
  for (int c = 0; c < c_total; ++c) {
    Eigen::RowVectorXd inv = vars.row(c).cwiseInverse();
    Mat centered = frames.rowwise() - means.row(c);
    out.col(c) = -0.5 * (centered.array().square().matrix() * inv.transpose());
    out.col(c).array() += log_norm(c) + std::log(weights(c));
  }
  return out;
}

double Gmm::log_likelihood(const Mat& frames) const {
  Mat ld = component_log_densities(frames);
  double total = 0.0;
  for (Eigen::Index t = 0; t < ld.rows(); ++t) {
    const double m = ld.row(t).maxCoeff();
    total += m + std::log((ld.row(t).array() - m).exp().sum());
  }
  return total;
}

namespace {

// One EM pass; returns the total log-likelihood under the input model.
double ubm_em_step(Gmm& gmm, const Mat& frames, const Vec& var_floor, int& reseeded, Rng& rng) {
  const int c_total = gmm.num_components();
  const int d = gmm.dim();
  const Eigen::Index t_total = frames.rows();

  Mat ld = gmm.component_log_densities(frames);
  double total_ll = 0.0;
  Vec n = Vec::Zero(c_total);
  Mat sum_x = Mat::Zero(c_total, d);
  Mat sum_xx = Mat::Zero(c_total, d);
  for (Eigen::Index t = 0; t < t_total; ++t) {
    const double m = ld.row(t).maxCoeff();
    Vec gamma = (ld.row(t).array() - m).exp().transpose();
    const double z = gamma.sum();
    total_ll += m + std::log(z);
    gamma /= z;
    n += gamma;
    sum_x.noalias() += gamma * frames.row(t);
    sum_xx.noalias() += gamma * frames.row(t).array().square().matrix();
  }

  for (int c = 0; c < c_total; ++c) {
    if (n(c) < 1e-8) {
      // Re-seed from the heaviest component.
      int heavy = 0;
      n.maxCoeff(&heavy);
      gmm.means.row(c) = gmm.means.row(heavy);
      for (int j = 0; j < d; ++j)
        gmm.means(c, j) += 0.1 * std::sqrt(gmm.vars(heavy, j)) * rng.gaussian();
      gmm.vars.row(c) = gmm.vars.row(heavy);
      gmm.weights(c) = gmm.weights(heavy) * 0.5;
      gmm.weights(heavy) *= 0.5;
      ++reseeded;
      continue;
    }
    gmm.means.row(c) = sum_x.row(c) / n(c);
    gmm.vars.row(c) =
        (sum_xx.row(c) / n(c) - gmm.means.row(c).array().square().matrix()).cwiseMax(
            var_floor.transpose());
    gmm.weights(c) = n(c) / static_cast<double>(t_total);
  }
  gmm.weights /= gmm.weights.sum();
  return total_ll;
}

}  // namespace

UbmTrainResult train_ubm(const std::vector<Mat>& features, int num_components, int iters,
                         std::uint64_t seed) {
  if (num_components < 1 || iters < 1) throw InputError("num_components and iters must be >= 1");
  Eigen::Index t_total = 0;
  for (const auto& f : features) t_total += f.rows();
  if (features.empty() || t_total == 0) throw InputError("train_ubm: no frames");
  const int d = static_cast<int>(features.front().cols());
  if (t_total < 10 * num_components)
    throw InputError("train_ubm: need at least 10 frames per component");

  Mat frames(t_total, d);
  Eigen::Index row = 0;
  for (const auto& f : features) {
    if (f.cols() != d) throw InputError("train_ubm: inconsistent feature dimensions");
    frames.middleRows(row, f.rows()) = f;
    row += f.rows();
  }

  Vec global_mean = frames.colwise().mean().transpose();
  Vec global_var =
      ((frames.rowwise() - global_mean.transpose()).array().square().colwise().mean())
          .transpose();
  Vec var_floor = 1e-3 * global_var.cwiseMax(1e-20);

  UbmTrainResult res;
  Gmm& gmm = res.gmm;
  gmm.weights = Vec::Ones(1);
  gmm.means = global_mean.transpose();
  gmm.vars = global_var.cwiseMax(var_floor).transpose();

  Rng rng(seed);
  while (gmm.num_components() < num_components) {
    const int cur = gmm.num_components();
    const int next = std::min(2 * cur, num_components);
    Gmm split;
    split.weights = Vec(next);
    split.means = Mat(next, d);
    split.vars = Mat(next, d);
    // Split the heaviest components first when next < 2*cur.
    std::vector<int> order(cur);
    for (int c = 0; c < cur; ++c) order[c] = c;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return gmm.weights(a) > gmm.weights(b); });
    const int to_split = next - cur;
    int out = 0;
    for (int c = 0; c < cur; ++c) {
      const int src = order[c];
      if (c < to_split) {
        for (int sgn : {-1, 1}) {
          split.weights(out) = gmm.weights(src) / 2.0;
          split.means.row(out) =
              gmm.means.row(src) +
              sgn * 0.2 * gmm.vars.row(src).array().sqrt().matrix();
          split.vars.row(out) = gmm.vars.row(src);
          ++out;
        }
      } else {
        split.weights(out) = gmm.weights(src);
        split.means.row(out) = gmm.means.row(src);
        split.vars.row(out) = gmm.vars.row(src);
        ++out;
      }
    }
    gmm = split;
    // A couple of EM sweeps to settle the new components.
    for (int i = 0; i < 2; ++i) ubm_em_step(gmm, frames, var_floor, res.reseeded, rng);
  }

  for (int i = 0; i < iters; ++i)
    res.log_liks.push_back(ubm_em_step(gmm, frames, var_floor, res.reseeded, rng));
  return res;
}

BwStats bw_stats(const Gmm& gmm, const Mat& frames) {
  const int c_total = gmm.num_components();
  const int d = gmm.dim();
  Mat ld = gmm.component_log_densities(frames);
  BwStats s;
  s.n = Vec::Zero(c_total);
  s.f = Mat::Zero(c_total, d);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    const double m = ld.row(t).maxCoeff();
    Vec gamma = (ld.row(t).array() - m).exp().transpose();
    gamma /= gamma.sum();
    s.n += gamma;
    s.f.noalias() += gamma * frames.row(t);
  }
  s.f -= s.n.asDiagonal() * gmm.means;
  return s;
}

// ---------------------------------------------------------------------------
// Total-variability model.

namespace {

// Posterior precision L, mean wbar; returns the T-dependent part of the
// utterance log-likelihood, (wbar' L wbar - log det L) / 2.
double ivector_posterior(const Mat& t, const Gmm& gmm, const BwStats& stats, Mat* l_out,
                         Vec* w_out) {
  const int c_total = gmm.num_components();
  const int d = gmm.dim();
  const int r = static_cast<int>(t.cols());
  Mat l = Mat::Identity(r, r);
  Vec b = Vec::Zero(r);
  for (int c = 0; c < c_total; ++c) {
    auto tc = t.middleRows(c * d, d);
    Vec inv_var = gmm.vars.row(c).transpose().cwiseInverse();
    l.noalias() += stats.n(c) * tc.transpose() * inv_var.asDiagonal() * tc;
    b.noalias() += tc.transpose() * (stats.f.row(c).transpose().cwiseProduct(inv_var));
  }
  Eigen::LLT<Mat> llt(l);
  if (llt.info() != Eigen::Success) {
    l += 1e-6 * Mat::Identity(r, r);
    llt.compute(l);
    if (llt.info() != Eigen::Success) throw NumericError("i-vector posterior precision not PD");
  }
  Vec w = llt.solve(b);
  double log_det = 0.0;
  for (int i = 0; i < r; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  if (l_out != nullptr) *l_out = l;
  if (w_out != nullptr) *w_out = w;
  return 0.5 * (w.dot(b) - log_det);
}

}  // namespace

TmatTrainResult train_tmatrix(const std::vector<BwStats>& stats, const Gmm& gmm, int rank,
                              int iters, std::uint64_t seed) {
  if (stats.empty()) throw InputError("train_tmatrix: no statistics");
  const int c_total = gmm.num_components();
  const int d = gmm.dim();
  if (rank < 1 || rank > c_total * d) throw InputError("train_tmatrix: invalid rank");

  TmatTrainResult res;
  Mat& t = res.tmat.t;
  t.resize(c_total * d, rank);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.data()[i] = rng.gaussian() / std::sqrt(static_cast<double>(rank));

  for (int it = 0; it < iters; ++it) {
    double objective = 0.0;
    std::vector<Mat> a(c_total, Mat::Zero(rank, rank));  // sum n_c E[ww']
    Mat b = Mat::Zero(c_total * d, rank);                // sum f_c wbar'
    for (const auto& s : stats) {
      Mat l;
      Vec w;
      objective += ivector_posterior(t, gmm, s, &l, &w);
      Mat cov = l.llt().solve(Mat::Identity(rank, rank));
      Mat eww = cov + w * w.transpose();
      for (int c = 0; c < c_total; ++c) {
        a[c].noalias() += s.n(c) * eww;
        b.middleRows(c * d, d).noalias() += s.f.row(c).transpose() * w.transpose();
      }
    }
    res.objectives.push_back(objective);
    for (int c = 0; c < c_total; ++c) {
      Eigen::LLT<Mat> llt(a[c]);
      if (llt.info() != Eigen::Success) {
        a[c] += 1e-6 * Mat::Identity(rank, rank);
        llt.compute(a[c]);
        if (llt.info() != Eigen::Success)
          throw NumericError("train_tmatrix: singular normal equations");
      }
      t.middleRows(c * d, d) = llt.solve(b.middleRows(c * d, d).transpose()).transpose();
    }
  }
  return res;
}

IVector extract_ivector(const TMatrix& tmat, const Gmm& gmm, const BwStats& stats) {
  if (tmat.t.rows() != gmm.num_components() * gmm.dim())
    throw InputError("extract_ivector: T matrix does not match the UBM");
  IVector iv;
  ivector_posterior(tmat.t, gmm, stats, nullptr, &iv.w);
  return iv;
}

// ---------------------------------------------------------------------------
// LDA.

Mat train_lda(const std::vector<Vec>& ivectors, const std::vector<int>& labels, int out_dim) {
  if (ivectors.size() != labels.size() || ivectors.empty())
    throw InputError("train_lda: empty or mismatched inputs");
  const int d = static_cast<int>(ivectors.front().size());
  const int n_classes = 1 + *std::max_element(labels.begin(), labels.end());
  if (n_classes < 2) throw InputError("train_lda: need at least 2 classes");
  if (out_dim < 1 || out_dim > std::min(d, n_classes - 1))
    throw InputError("train_lda: out_dim must be in [1, min(dim, classes-1)]");

  Vec global = Vec::Zero(d);
  for (const auto& x : ivectors) global += x;
  global /= static_cast<double>(ivectors.size());

  std::vector<Vec> class_mean(n_classes, Vec::Zero(d));
  std::vector<int> class_count(n_classes, 0);
  for (std::size_t i = 0; i < ivectors.size(); ++i) {
    class_mean[labels[i]] += ivectors[i];
    ++class_count[labels[i]];
  }
  Mat sb = Mat::Zero(d, d), sw = Mat::Zero(d, d);
  for (int c = 0; c < n_classes; ++c) {
    if (class_count[c] == 0) throw InputError("train_lda: empty class");
    class_mean[c] /= static_cast<double>(class_count[c]);
    Vec diff = class_mean[c] - global;
    sb.noalias() += class_count[c] * diff * diff.transpose();
  }
  for (std::size_t i = 0; i < ivectors.size(); ++i) {
    Vec diff = ivectors[i] - class_mean[labels[i]];
    sw.noalias() += diff * diff.transpose();
  }
  sw += (1e-6 * sw.trace() / d) * Mat::Identity(d, d);

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(sb, sw);
  if (es.info() != Eigen::Success) throw NumericError("train_lda: eigensolver failed");
  // Eigenvalues come out ascending; take the trailing columns.
  Mat proj(d, out_dim);
  for (int k = 0; k < out_dim; ++k) proj.col(k) = es.eigenvectors().col(d - 1 - k);
  return proj;
}

// ---------------------------------------------------------------------------
// PLDA.

Vec PldaPreprocess::apply(const Vec& x) const {
  Vec y = whiten * (x - mean);
  if (length_norm) {
    const double norm = y.norm();
    if (norm > 0.0) y *= std::sqrt(static_cast<double>(y.size())) / norm;
  }
  return y;
}

namespace {

double plda_log_likelihood(const PldaModel& m, const std::vector<Vec>& sums,
                           const std::vector<Mat>& sq_sums, const std::vector<int>& counts) {
  const int d = static_cast<int>(m.mu.size());
  const int q = static_cast<int>(m.v.cols());
  Eigen::LLT<Mat> sig_llt(m.sigma);
  if (sig_llt.info() != Eigen::Success) throw NumericError("plda: Sigma not PD");
  double log_det_sigma = 0.0;
  for (int i = 0; i < d; ++i) log_det_sigma += 2.0 * std::log(sig_llt.matrixL()(i, i));
  Mat sig_inv = sig_llt.solve(Mat::Identity(d, d));
  Mat vt_si_v = m.v.transpose() * sig_inv * m.v;

  double ll = 0.0;
  for (std::size_t s = 0; s < sums.size(); ++s) {
    const int n = counts[s];
    Mat p = Mat::Identity(q, q) + n * vt_si_v;
    Eigen::LLT<Mat> p_llt(p);
    double log_det_p = 0.0;
    for (int i = 0; i < q; ++i) log_det_p += 2.0 * std::log(p_llt.matrixL()(i, i));
    // sum_t x' Sinv x with x centered; sq_sums holds sum_t x x'.
    const double quad_diag = (sig_inv.array() * sq_sums[s].array()).sum();
    Vec b = m.v.transpose() * (sig_inv * sums[s]);
    const double quad_lat = (q > 0) ? b.dot(p_llt.solve(b)) : 0.0;
    ll += -0.5 * (n * d * kLog2Pi + n * log_det_sigma + log_det_p + quad_diag - quad_lat);
  }
  return ll;
}

}  // namespace

PldaTrainResult train_plda(const std::vector<Vec>& ivectors, const std::vector<int>& labels,
                           int num_latent, int iters, std::uint64_t seed, bool length_norm) {
  if (ivectors.size() != labels.size() || ivectors.size() < 4)
    throw InputError("train_plda: need at least 4 labeled vectors");
  const int d = static_cast<int>(ivectors.front().size());
  const int n_spk = 1 + *std::max_element(labels.begin(), labels.end());
  if (n_spk < 2) throw InputError("train_plda: need at least 2 speakers");
  if (num_latent < 0 || num_latent > d) throw InputError("train_plda: invalid latent dimension");
  if (iters < 1) throw InputError("train_plda: iters must be >= 1");

  PldaTrainResult res;

  // Preprocessing: center, whiten by total covariance, length-normalize.
  Vec mean = Vec::Zero(d);
  for (const auto& x : ivectors) mean += x;
  mean /= static_cast<double>(ivectors.size());
  Mat total = Mat::Zero(d, d);
  for (const auto& x : ivectors) {
    Vec c = x - mean;
    total.noalias() += c * c.transpose();
  }
  total /= static_cast<double>(ivectors.size());
  Eigen::SelfAdjointEigenSolver<Mat> es(total);
  if (es.info() != Eigen::Success) throw NumericError("train_plda: covariance eigensolve failed");
  Vec ev = es.eigenvalues().cwiseMax(1e-10);
  res.prep.mean = mean;
  res.prep.whiten =
      es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  res.prep.length_norm = length_norm;

  std::vector<Vec> data(ivectors.size());
  for (std::size_t i = 0; i < ivectors.size(); ++i) data[i] = res.prep.apply(ivectors[i]);

  // Model mean over the preprocessed data; EM on centered vectors.
  Vec mu = Vec::Zero(d);
  for (const auto& x : data) mu += x;
  mu /= static_cast<double>(data.size());

  std::vector<Vec> sums(n_spk, Vec::Zero(d));
  std::vector<Mat> sq_sums(n_spk, Mat::Zero(d, d));
  std::vector<int> counts(n_spk, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vec c = data[i] - mu;
    sums[labels[i]] += c;
    sq_sums[labels[i]].noalias() += c * c.transpose();
    ++counts[labels[i]];
  }
  const int n_total = static_cast<int>(data.size());

  PldaModel& m = res.model;
  m.mu = mu;
  m.v.resize(d, num_latent);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < m.v.size(); ++i) m.v.data()[i] = 0.1 * rng.gaussian();
  m.sigma = Mat::Identity(d, d);

  const int q = num_latent;
  for (int it = 0; it < iters; ++it) {
    res.log_liks.push_back(plda_log_likelihood(m, sums, sq_sums, counts));

    Mat sig_inv = m.sigma.llt().solve(Mat::Identity(d, d));
    Mat vt_si_v = m.v.transpose() * sig_inv * m.v;
    Mat sum_fy = Mat::Zero(d, q);   // sum_s f_s E[y]'
    Mat sum_nyy = Mat::Zero(q, q);  // sum_s n_s E[yy']
    std::vector<Vec> ey(n_spk, Vec::Zero(q));
    for (int s = 0; s < n_spk; ++s) {
      Mat p = Mat::Identity(q, q) + counts[s] * vt_si_v;
      Eigen::LLT<Mat> p_llt(p);
      Vec b = m.v.transpose() * (sig_inv * sums[s]);
      Vec y = (q > 0) ? Vec(p_llt.solve(b)) : Vec(Vec::Zero(0));
      Mat cov = (q > 0) ? Mat(p_llt.solve(Mat::Identity(q, q))) : Mat(Mat::Zero(0, 0));
      ey[s] = y;
      sum_fy.noalias() += sums[s] * y.transpose();
      sum_nyy.noalias() += counts[s] * (cov + y * y.transpose());
    }
    if (q > 0) {
      Eigen::LLT<Mat> nyy_llt(sum_nyy);
      if (nyy_llt.info() != Eigen::Success) {
        sum_nyy += 1e-10 * Mat::Identity(q, q);
        nyy_llt.compute(sum_nyy);
        if (nyy_llt.info() != Eigen::Success)
          throw NumericError("train_plda: singular latent moment matrix");
      }
      m.v = nyy_llt.solve(sum_fy.transpose()).transpose();
    }
    Mat resid = Mat::Zero(d, d);
    for (int s = 0; s < n_spk; ++s) {
      Mat vy_f = m.v * ey[s] * sums[s].transpose();
      // E[yy'] per utterance is cov + yy'; reuse the pooled accumulator
      // is not possible per speaker, recompute the latent cov term.
      Mat p = Mat::Identity(q, q) + counts[s] * vt_si_v;
      Mat cov = (q > 0) ? Mat(p.llt().solve(Mat::Identity(q, q))) : Mat(Mat::Zero(0, 0));
      Mat eyy = (q > 0) ? Mat(cov + ey[s] * ey[s].transpose()) : Mat(Mat::Zero(0, 0));
      resid += sq_sums[s] - vy_f - vy_f.transpose() +
               counts[s] * m.v * eyy * m.v.transpose();
    }
    m.sigma = resid / static_cast<double>(n_total);
    m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> ses(m.sigma);
    if (ses.eigenvalues().minCoeff() < 1e-8) {
      m.sigma = ses.eigenvectors() * ses.eigenvalues().cwiseMax(1e-8).asDiagonal() *
                ses.eigenvectors().transpose();
    }
  }
  return res;
}

double plda_score(const PldaModel& m, const Vec& enroll, const Vec& test) {
  const int d = static_cast<int>(m.mu.size());
  Vec e = enroll - m.mu;
  Vec t = test - m.mu;
  Mat sa = m.v * m.v.transpose();
  Mat st = sa + m.sigma;
  Eigen::LLT<Mat> st_llt(st);
  if (st_llt.info() != Eigen::Success) throw NumericError("plda_score: total covariance not PD");
  Mat st_inv = st_llt.solve(Mat::Identity(d, d));
  Mat s = st - sa * st_inv * sa;  // Schur complement of the joint covariance
  Eigen::LLT<Mat> s_llt(s);
  if (s_llt.info() != Eigen::Success) throw NumericError("plda_score: conditional cov not PD");
  Mat s_inv = s_llt.solve(Mat::Identity(d, d));

  double log_det_st = 0.0, log_det_s = 0.0;
  for (int i = 0; i < d; ++i) {
    log_det_st += 2.0 * std::log(st_llt.matrixL()(i, i));
    log_det_s += 2.0 * std::log(s_llt.matrixL()(i, i));
  }
  Mat cross = st_inv * sa * s_inv;
  return 0.5 * (log_det_st - log_det_s) + 0.5 * e.dot((st_inv - s_inv) * e) +
         0.5 * t.dot((st_inv - s_inv) * t) + e.dot(cross * t);
}

// ---------------------------------------------------------------------------
// Container I/O.

Vec BackendModel::embed(const IVector& iv) const {
  return prep.apply(lda.transpose() * iv.w);
}

void BackendModel::save(const std::string& path) const {
  TensorContainer c;
  c.kind = "backend";
  c.meta = json{{"length_norm", prep.length_norm}};
  auto put = [&](const std::string& name, const Mat& m) {
    c.tensors.push_back({name, m, Dtype::f64});
  };
  put("ubm.weights", ubm.weights);
  put("ubm.means", ubm.means);
  put("ubm.vars", ubm.vars);
  put("tmatrix.t", tmat.t);
  put("lda.proj", lda);
  put("plda.prep.mean", prep.mean);
  put("plda.prep.whiten", prep.whiten);
  put("plda.mu", plda.mu);
  put("plda.v", plda.v);
  put("plda.sigma", plda.sigma);
  save_container(path, c);
}

BackendModel BackendModel::load(const std::string& path) {
  TensorContainer c = load_container(path);
  if (c.kind != "backend") throw InputError("not a backend model: " + path);
  BackendModel b;
  b.ubm.weights = c.find("ubm.weights").value.col(0);
  b.ubm.means = c.find("ubm.means").value;
  b.ubm.vars = c.find("ubm.vars").value;
  b.tmat.t = c.find("tmatrix.t").value;
  b.lda = c.find("lda.proj").value;
  b.prep.mean = c.find("plda.prep.mean").value.col(0);
  b.prep.whiten = c.find("plda.prep.whiten").value;
  b.prep.length_norm = c.meta.at("length_norm").get<bool>();
  b.plda.mu = c.find("plda.mu").value.col(0);
  b.plda.v = c.find("plda.v").value;
  b.plda.sigma = c.find("plda.sigma").value;
  return b;
}

const Vec& IvectorArchive::find(const std::string& utt) const {
  for (std::size_t i = 0; i < utts.size(); ++i)
    if (utts[i] == utt) return ivectors[i];
  throw InputError("no i-vector for utterance " + utt);
}

void IvectorArchive::save(const std::string& path) const {
  TensorContainer c;
  c.kind = "ivectors";
  c.meta = json::object();
  for (std::size_t i = 0; i < utts.size(); ++i)
    c.tensors.push_back({utts[i], ivectors[i], Dtype::f64});
  save_container(path, c);
}

IvectorArchive IvectorArchive::load(const std::string& path) {
  TensorContainer c = load_container(path);
  if (c.kind != "ivectors") throw InputError("not an i-vector archive: " + path);
  IvectorArchive a;
  for (const auto& t : c.tensors) {
    a.utts.push_back(t.name);
    a.ivectors.push_back(t.value.col(0));
  }
  return a;
}

}  // namespace tsesv
