// extractor.cc

#include "tsesv/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "tsesv/model_io.hpp"

namespace tsesv {

using nlohmann::json;

std::string variant_name(Variant v) {
  return v == Variant::kSbfMtsal ? "sbf-mtsal" : "sbf-mtsal-concat";
}

Variant parse_variant(const std::string& name) {
  if (name == "sbf-mtsal") return Variant::kSbfMtsal;
  if (name == "sbf-mtsal-concat") return Variant::kSbfMtsalConcat;
  throw InputError("unknown variant '" + name + "' (valid: sbf-mtsal, sbf-mtsal-concat)");
}

void ExtractorConfig::validate() const {
  if (bins != kBins) throw InputError("extractor bins must equal 129");
  if (blstm_cells < 1 || n_sublayers < 1 || embed_dim < 1 || aux_hidden < 1 || ff_hidden < 1)
    throw InputError("extractor sizes must be >= 1");
  if (lr0 <= 0.0) throw InputError("lr0 must be positive");
  if (lr_decay <= 0.0 || lr_decay >= 1.0) throw InputError("lr_decay must be in (0,1)");
  if (batch < 1 || min_epochs < 1 || max_epochs < min_epochs)
    throw InputError("invalid batch/epoch configuration");
}

Mat& ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  names.push_back(name);
  values.emplace_back(Mat::Zero(rows, cols));
  return values.back();
}

Mat& ParamSet::get(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw InputError("no such parameter tensor: " + name);
}

const Mat& ParamSet::get(const std::string& name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.names = names;
  out.values.reserve(values.size());
  for (const auto& v : values) out.values.emplace_back(Mat::Zero(v.rows(), v.cols()));
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values)
    if (!v.allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Mask targets and the MTSAL loss.

namespace {
constexpr double kMagEps = 1e-8;
}

Mat psm_target(const ComplexSpectrogram& ref, const ComplexSpectrogram& mix) {
  if (ref.frames.rows() != mix.frames.rows() || ref.frames.cols() != mix.frames.cols())
    throw InputError("psm_target shape mismatch");
  Mat m(ref.frames.rows(), ref.frames.cols());
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      const std::complex<double> x = ref.frames(t, k);
      const std::complex<double> y = mix.frames(t, k);
      const double ay = std::abs(y);
      // |X|/max(|Y|,eps) * cos(th_X - th_Y) == Re(X conj(Y)) / (max(|Y|,eps) * |Y|)
      const double raw = (ay > 0.0)
                             ? (x.real() * y.real() + x.imag() * y.imag()) /
                                   (std::max(ay, kMagEps) * ay)
                             : 0.0;
      m(t, k) = std::clamp(raw, 0.0, 1.0);
    }
  }
  return m;
}

Mat psm_magnitude_target(const ComplexSpectrogram& ref, const ComplexSpectrogram& mix) {
  if (ref.frames.rows() != mix.frames.rows() || ref.frames.cols() != mix.frames.cols())
    throw InputError("psm_magnitude_target shape mismatch");
  Mat g(ref.frames.rows(), ref.frames.cols());
  for (Eigen::Index t = 0; t < g.rows(); ++t) {
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
      const std::complex<double> x = ref.frames(t, k);
      const std::complex<double> y = mix.frames(t, k);
      const double ay = std::abs(y);
      // |X| cos(th_X - th_Y) = Re(X conj(Y)) / |Y|, clipped to [0, |Y|].
      const double raw =
          (ay > 0.0) ? (x.real() * y.real() + x.imag() * y.imag()) / std::max(ay, kMagEps) : 0.0;
      g(t, k) = std::clamp(raw, 0.0, ay);
    }
  }
  return g;
}

double mtsal_loss(const Mat& mask, const Mat& mix_mag, const Mat& target_g) {
  return mtsal_loss_grad(mask, mix_mag, target_g, nullptr);
}

double mtsal_loss(const Mat& mask, const Mat& mix_mag, const ComplexSpectrogram& ref,
                  const ComplexSpectrogram& mix) {
  return mtsal_loss(mask, mix_mag, psm_magnitude_target(ref, mix));
}

double mtsal_loss_grad(const Mat& mask, const Mat& mix_mag, const Mat& target_g, Mat* dmask) {
  if (mask.rows() != mix_mag.rows() || mask.cols() != mix_mag.cols() ||
      mask.rows() != target_g.rows() || mask.cols() != target_g.cols())
    throw InputError("mtsal_loss shape mismatch");

  const double tf = static_cast<double>(mask.rows()) * static_cast<double>(mask.cols());
  Mat e = mask.cwiseProduct(mix_mag);
  Mat r0 = e - target_g;
  Mat r1 = delta(e) - delta(target_g);
  Mat r2 = delta(delta(e)) - delta(delta(target_g));
  double loss = (r0.squaredNorm() + r1.squaredNorm() + r2.squaredNorm()) / tf;

  if (dmask != nullptr) {
    Mat de = r0;
    delta_adjoint_accumulate(r1, de);
    Mat tmp = Mat::Zero(r2.rows(), r2.cols());
    delta_adjoint_accumulate(r2, tmp);
    Mat tmp2 = Mat::Zero(r2.rows(), r2.cols());
    delta_adjoint_accumulate(tmp, tmp2);
    de += tmp2;
    *dmask = (2.0 / tf) * de.cwiseProduct(mix_mag);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Layer primitives (sequences are D x T, columns are frames).

namespace {

Vec sigmoid(const Vec& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

struct LstmCache {
  Mat x;                // D x T input copy
  Mat i, f, g, o, c, h; // H x T
};

void lstm_forward(const Mat& wx, const Mat& wh, const Mat& b, const Mat& x, LstmCache& cc) {
  const int t_total = static_cast<int>(x.cols());
  const int h_dim = static_cast<int>(wh.cols());
  cc.x = x;
  cc.i.resize(h_dim, t_total);
  cc.f.resize(h_dim, t_total);
  cc.g.resize(h_dim, t_total);
  cc.o.resize(h_dim, t_total);
  cc.c.resize(h_dim, t_total);
  cc.h.resize(h_dim, t_total);

  Vec h_prev = Vec::Zero(h_dim), c_prev = Vec::Zero(h_dim);
  for (int t = 0; t < t_total; ++t) {
    Vec z = wx * x.col(t) + wh * h_prev + b.col(0);
    Vec gi = sigmoid(z.head(h_dim));
    Vec gf = sigmoid(z.segment(h_dim, h_dim));
    Vec gg = z.segment(2 * h_dim, h_dim).array().tanh().matrix();
    Vec go = sigmoid(z.tail(h_dim));
    Vec c_t = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
    Vec h_t = go.cwiseProduct(c_t.array().tanh().matrix());
    cc.i.col(t) = gi;
    cc.f.col(t) = gf;
    cc.g.col(t) = gg;
    cc.o.col(t) = go;
    cc.c.col(t) = c_t;
    cc.h.col(t) = h_t;
    h_prev = h_t;
    c_prev = c_t;
  }
}

void lstm_backward(const Mat& wx, const Mat& wh, const LstmCache& cc, const Mat& dh_seq,
                   Mat& d_wx, Mat& d_wh, Mat& d_b, Mat* dx) {
  const int t_total = static_cast<int>(cc.h.cols());
  const int h_dim = static_cast<int>(wh.cols());

  Vec dh_next = Vec::Zero(h_dim), dc_next = Vec::Zero(h_dim);
  Vec dz(4 * h_dim);
  for (int t = t_total - 1; t >= 0; --t) {
    Vec dh = dh_seq.col(t) + dh_next;
    Vec tc = cc.c.col(t).array().tanh().matrix();
    Vec d_go = dh.cwiseProduct(tc);
    Vec dc = dc_next +
             dh.cwiseProduct(cc.o.col(t)).cwiseProduct((1.0 - tc.array().square()).matrix());
    Vec d_gi = dc.cwiseProduct(cc.g.col(t));
    Vec d_gg = dc.cwiseProduct(cc.i.col(t));
    Vec c_prev = (t > 0) ? Vec(cc.c.col(t - 1)) : Vec(Vec::Zero(h_dim));
    Vec d_gf = dc.cwiseProduct(c_prev);

    dz.head(h_dim) =
        d_gi.array() * cc.i.col(t).array() * (1.0 - cc.i.col(t).array());
    dz.segment(h_dim, h_dim) =
        d_gf.array() * cc.f.col(t).array() * (1.0 - cc.f.col(t).array());
    dz.segment(2 * h_dim, h_dim) = d_gg.array() * (1.0 - cc.g.col(t).array().square());
    dz.tail(h_dim) = d_go.array() * cc.o.col(t).array() * (1.0 - cc.o.col(t).array());

    Vec h_prev = (t > 0) ? Vec(cc.h.col(t - 1)) : Vec(Vec::Zero(h_dim));
    d_wx.noalias() += dz * cc.x.col(t).transpose();
    d_wh.noalias() += dz * h_prev.transpose();
    d_b.col(0) += dz;
    dh_next.noalias() = wh.transpose() * dz;
    dc_next = dc.cwiseProduct(cc.f.col(t));
    if (dx != nullptr) dx->col(t).noalias() += wx.transpose() * dz;
  }
}

struct BlstmCache {
  LstmCache fwd, bwd;  // bwd runs on time-reversed input
};

Mat blstm_forward(const ParamSet& p, const std::string& prefix, const Mat& x, BlstmCache& cc) {
  const Mat& fwx = p.get(prefix + ".fwd.Wx");
  lstm_forward(fwx, p.get(prefix + ".fwd.Wh"), p.get(prefix + ".fwd.b"), x, cc.fwd);
  Mat xr = x.rowwise().reverse();
  lstm_forward(p.get(prefix + ".bwd.Wx"), p.get(prefix + ".bwd.Wh"), p.get(prefix + ".bwd.b"),
               xr, cc.bwd);
  const int h_dim = static_cast<int>(cc.fwd.h.rows());
  Mat out(2 * h_dim, x.cols());
  out.topRows(h_dim) = cc.fwd.h;
  out.bottomRows(h_dim) = cc.bwd.h.rowwise().reverse();
  if (!out.allFinite()) throw NumericError("non-finite activations in layer " + prefix);
  return out;
}

// Returns d(input); pass need_dx=false to skip it at the network input.
Mat blstm_backward(const ParamSet& p, const std::string& prefix, const BlstmCache& cc,
                   const Mat& dout, ParamSet& grads, bool need_dx) {
  const int h_dim = static_cast<int>(cc.fwd.h.rows());
  Mat dx;
  Mat dxr;
  if (need_dx) {
    dx = Mat::Zero(cc.fwd.x.rows(), cc.fwd.x.cols());
    dxr = Mat::Zero(cc.fwd.x.rows(), cc.fwd.x.cols());
  }
  lstm_backward(p.get(prefix + ".fwd.Wx"), p.get(prefix + ".fwd.Wh"), cc.fwd,
                dout.topRows(h_dim), grads.get(prefix + ".fwd.Wx"),
                grads.get(prefix + ".fwd.Wh"), grads.get(prefix + ".fwd.b"),
                need_dx ? &dx : nullptr);
  Mat dh_bwd = dout.bottomRows(h_dim).rowwise().reverse();
  lstm_backward(p.get(prefix + ".bwd.Wx"), p.get(prefix + ".bwd.Wh"), cc.bwd, dh_bwd,
                grads.get(prefix + ".bwd.Wx"), grads.get(prefix + ".bwd.Wh"),
                grads.get(prefix + ".bwd.b"), need_dx ? &dxr : nullptr);
  if (need_dx) dx += dxr.rowwise().reverse();
  return dx;
}

void add_blstm_params(ParamSet& p, const std::string& prefix, int in_dim, int cells) {
  for (const char* dir : {"fwd", "bwd"}) {
    p.add(prefix + "." + dir + ".Wx", 4 * cells, in_dim);
    p.add(prefix + "." + dir + ".Wh", 4 * cells, cells);
    p.add(prefix + "." + dir + ".b", 4 * cells, 1);
  }
}

Mat dense_forward(const ParamSet& p, const std::string& prefix, const Mat& x, Mat& z_cache,
                  bool relu_act) {
  const Mat& w = p.get(prefix + ".W");
  const Mat& b = p.get(prefix + ".b");
  z_cache = (w * x).colwise() + Vec(b.col(0));
  return relu_act ? z_cache.cwiseMax(0.0) : z_cache;
}

Mat dense_backward(const ParamSet& p, const std::string& prefix, const Mat& x, const Mat& z,
                   const Mat& dout, ParamSet& grads, bool relu_act) {
  Mat dz = relu_act ? Mat((z.array() > 0.0).cast<double>() * dout.array()) : dout;
  grads.get(prefix + ".W").noalias() += dz * x.transpose();
  grads.get(prefix + ".b").col(0) += dz.rowwise().sum();
  return p.get(prefix + ".W").transpose() * dz;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model construction.

ExtractorModel ExtractorModel::init(const ExtractorConfig& cfg) {
  cfg.validate();
  ExtractorModel m;
  m.config = cfg;
  ParamSet& p = m.params;

  if (cfg.variant == Variant::kSbfMtsal) {
    // Aux net: two relu layers and a linear layer whose M-dim output,
    // frame-averaged, weights the adaptation sub-layers.
    p.add("aux.fc1.W", cfg.aux_hidden, cfg.bins);
    p.add("aux.fc1.b", cfg.aux_hidden, 1);
    p.add("aux.fc2.W", cfg.aux_hidden, cfg.aux_hidden);
    p.add("aux.fc2.b", cfg.aux_hidden, 1);
    p.add("aux.out.W", cfg.n_sublayers, cfg.aux_hidden);
    p.add("aux.out.b", cfg.n_sublayers, 1);

    add_blstm_params(p, "mask.blstm1", cfg.bins, cfg.blstm_cells);
    for (int s = 0; s < cfg.n_sublayers; ++s) {
      const std::string name = "mask.adapt.sub" + std::to_string(s);
      p.add(name + ".W", cfg.ff_hidden, 2 * cfg.blstm_cells);
      p.add(name + ".b", cfg.ff_hidden, 1);
    }
    p.add("mask.fc1.W", cfg.ff_hidden, cfg.ff_hidden);
    p.add("mask.fc1.b", cfg.ff_hidden, 1);
    p.add("mask.fc2.W", cfg.ff_hidden, cfg.ff_hidden);
    p.add("mask.fc2.b", cfg.ff_hidden, 1);
    p.add("mask.out.W", cfg.bins, cfg.ff_hidden);
    p.add("mask.out.b", cfg.bins, 1);
  } else {
    // Aux net: BLSTM + relu + linear, frame-averaged into an embedding
    // that is concatenated to every mask-net BLSTM frame.
    add_blstm_params(p, "aux.blstm", cfg.bins, cfg.aux_hidden);
    p.add("aux.fc1.W", cfg.aux_hidden, 2 * cfg.aux_hidden);
    p.add("aux.fc1.b", cfg.aux_hidden, 1);
    p.add("aux.out.W", cfg.embed_dim, cfg.aux_hidden);
    p.add("aux.out.b", cfg.embed_dim, 1);

    add_blstm_params(p, "mask.blstm1", cfg.bins, cfg.blstm_cells);
    p.add("mask.fc1.W", cfg.ff_hidden, 2 * cfg.blstm_cells + cfg.embed_dim);
    p.add("mask.fc1.b", cfg.ff_hidden, 1);
    add_blstm_params(p, "mask.blstm2", cfg.ff_hidden, cfg.blstm_cells);
    p.add("mask.fc2.W", cfg.ff_hidden, 2 * cfg.blstm_cells);
    p.add("mask.fc2.b", cfg.ff_hidden, 1);
    p.add("mask.out.W", cfg.bins, cfg.ff_hidden);
    p.add("mask.out.b", cfg.bins, 1);
  }

  Rng rng(cfg.seed);
  for (auto& v : m.params.values)
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(-0.05, 0.05);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward.

struct ExtractorModel::Cache {
  Mat mix_in, aux_in;  // 129 x T inputs after the optional log transform

  // Aux path.
  Mat aux_z1, aux_a1, aux_z2, aux_a2, aux_lin;
  BlstmCache aux_blstm;
  Mat aux_blstm_out;
  Vec cond;  // adaptation weights alpha, or the speaker embedding
  int aux_frames = 0;

  // Mask path.
  BlstmCache blstm1;
  Mat blstm1_out;
  std::vector<Mat> sub_z;  // per-sub-layer pre-activations (SBF-MTSAL)
  Mat adapt_out;
  Mat concat_in;  // (2H + E) x T (concat variant)
  Mat ff1_z, ff1_a;
  BlstmCache blstm2;
  Mat blstm2_out;
  Mat ff2_z, ff2_a;
  Mat out_z, mask;  // bins x T
};

Mat ExtractorModel::forward_impl(const Mat& mix_mag, const Mat& aux_mag, Cache* cache) const {
  if (mix_mag.cols() != config.bins || aux_mag.cols() != config.bins)
    throw InputError("magnitude width must be 129");
  if (mix_mag.rows() < 1 || aux_mag.rows() < 1) throw InputError("empty magnitude input");
  if (!params.all_finite()) throw InputError("model parameters are not finite");

  Cache local;
  Cache& c = cache ? *cache : local;
  const ParamSet& p = params;

  c.mix_in = mix_mag.transpose();
  c.aux_in = aux_mag.transpose();
  if (config.log_magnitude) {
    c.mix_in = c.mix_in.array().log1p();
    c.aux_in = c.aux_in.array().log1p();
  }
  c.aux_frames = static_cast<int>(c.aux_in.cols());

  // Auxiliary network -> frame-averaged conditioning vector.
  if (config.variant == Variant::kSbfMtsal) {
    c.aux_a1 = dense_forward(p, "aux.fc1", c.aux_in, c.aux_z1, true);
    c.aux_a2 = dense_forward(p, "aux.fc2", c.aux_a1, c.aux_z2, true);
    Mat unused;
    c.aux_lin = dense_forward(p, "aux.out", c.aux_a2, unused, false);
  } else {
    c.aux_blstm_out = blstm_forward(p, "aux.blstm", c.aux_in, c.aux_blstm);
    c.aux_a1 = dense_forward(p, "aux.fc1", c.aux_blstm_out, c.aux_z1, true);
    Mat unused;
    c.aux_lin = dense_forward(p, "aux.out", c.aux_a1, unused, false);
  }
  c.cond = c.aux_lin.rowwise().mean();

  // Mask estimation network.
  c.blstm1_out = blstm_forward(p, "mask.blstm1", c.mix_in, c.blstm1);
  const int t_total = static_cast<int>(c.mix_in.cols());

  if (config.variant == Variant::kSbfMtsal) {
    c.sub_z.resize(config.n_sublayers);
    c.adapt_out = Mat::Zero(config.ff_hidden, t_total);
    for (int s = 0; s < config.n_sublayers; ++s) {
      const std::string name = "mask.adapt.sub" + std::to_string(s);
      c.sub_z[s] = (p.get(name + ".W") * c.blstm1_out).colwise() + Vec(p.get(name + ".b").col(0));
      c.adapt_out += c.cond(s) * c.sub_z[s].cwiseMax(0.0);
    }
    c.ff1_a = dense_forward(p, "mask.fc1", c.adapt_out, c.ff1_z, true);
    c.ff2_a = dense_forward(p, "mask.fc2", c.ff1_a, c.ff2_z, true);
  } else {
    c.concat_in.resize(2 * config.blstm_cells + config.embed_dim, t_total);
    c.concat_in.topRows(2 * config.blstm_cells) = c.blstm1_out;
    c.concat_in.bottomRows(config.embed_dim).colwise() = c.cond;
    c.ff1_a = dense_forward(p, "mask.fc1", c.concat_in, c.ff1_z, true);
    c.blstm2_out = blstm_forward(p, "mask.blstm2", c.ff1_a, c.blstm2);
    c.ff2_a = dense_forward(p, "mask.fc2", c.blstm2_out, c.ff2_z, true);
  }

  c.out_z = (p.get("mask.out.W") * c.ff2_a).colwise() + Vec(p.get("mask.out.b").col(0));
  c.mask = (1.0 + (-c.out_z.array()).exp()).inverse().matrix();
  if (!c.mask.allFinite()) throw NumericError("non-finite activations in layer mask.out");
  return c.mask.transpose();
}

void ExtractorModel::backward_impl(const Cache& c, const Mat& dmask, ParamSet& grads) const {
  const ParamSet& p = params;
  // dmask arrives as bins x T (network orientation).
  Mat dz_out =
      dmask.array() * c.mask.array() * (1.0 - c.mask.array());
  grads.get("mask.out.W").noalias() += dz_out * c.ff2_a.transpose();
  grads.get("mask.out.b").col(0) += dz_out.rowwise().sum();
  Mat dff2_a = p.get("mask.out.W").transpose() * dz_out;

  Vec dcond = Vec::Zero(c.cond.size());

  if (config.variant == Variant::kSbfMtsal) {
    Mat dff1_a = dense_backward(p, "mask.fc2", c.ff1_a, c.ff2_z, dff2_a, grads, true);
    Mat dadapt = dense_backward(p, "mask.fc1", c.adapt_out, c.ff1_z, dff1_a, grads, true);

    Mat dblstm1 = Mat::Zero(c.blstm1_out.rows(), c.blstm1_out.cols());
    for (int s = 0; s < config.n_sublayers; ++s) {
      const std::string name = "mask.adapt.sub" + std::to_string(s);
      Mat relu_s = c.sub_z[s].cwiseMax(0.0);
      dcond(s) += (dadapt.array() * relu_s.array()).sum();
      Mat dz_s =
          (c.sub_z[s].array() > 0.0).cast<double>() * (c.cond(s) * dadapt.array());
      grads.get(name + ".W").noalias() += dz_s * c.blstm1_out.transpose();
      grads.get(name + ".b").col(0) += dz_s.rowwise().sum();
      dblstm1.noalias() += p.get(name + ".W").transpose() * dz_s;
    }
    blstm_backward(p, "mask.blstm1", c.blstm1, dblstm1, grads, false);
  } else {
    Mat dblstm2 = dense_backward(p, "mask.fc2", c.blstm2_out, c.ff2_z, dff2_a, grads, true);
    Mat dff1_a = blstm_backward(p, "mask.blstm2", c.blstm2, dblstm2, grads, true);
    Mat dconcat = dense_backward(p, "mask.fc1", c.concat_in, c.ff1_z, dff1_a, grads, true);
    blstm_backward(p, "mask.blstm1", c.blstm1, dconcat.topRows(2 * config.blstm_cells), grads,
                   false);
    dcond = dconcat.bottomRows(config.embed_dim).rowwise().sum();
  }

  // Through the frame average of the aux-net linear output.
  Mat daux_lin =
      (dcond / static_cast<double>(c.aux_frames)).replicate(1, c.aux_frames);
  if (config.variant == Variant::kSbfMtsal) {
    Mat daux_a2 = dense_backward(p, "aux.out", c.aux_a2, c.aux_lin, daux_lin, grads, false);
    Mat daux_a1 = dense_backward(p, "aux.fc2", c.aux_a1, c.aux_z2, daux_a2, grads, true);
    dense_backward(p, "aux.fc1", c.aux_in, c.aux_z1, daux_a1, grads, true);
  } else {
    Mat daux_a1 = dense_backward(p, "aux.out", c.aux_a1, c.aux_lin, daux_lin, grads, false);
    Mat daux_blstm =
        dense_backward(p, "aux.fc1", c.aux_blstm_out, c.aux_z1, daux_a1, grads, true);
    blstm_backward(p, "aux.blstm", c.aux_blstm, daux_blstm, grads, false);
  }
}

Mat ExtractorModel::forward(const Mat& mix_mag, const Mat& aux_mag) const {
  return forward_impl(mix_mag, aux_mag, nullptr);
}

double ExtractorModel::loss_and_grad(const TrainExample& ex, ParamSet& grads) const {
  Cache cache;
  Mat mask = forward_impl(ex.mix_mag, ex.aux_mag, &cache);  // T x bins
  Mat dmask_t;
  double loss = mtsal_loss_grad(mask, ex.mix_mag, ex.target_g, &dmask_t);
  backward_impl(cache, dmask_t.transpose(), grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {
json config_to_json(const ExtractorConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"bins", c.bins},
              {"blstm_cells", c.blstm_cells},
              {"n_sublayers", c.n_sublayers},
              {"embed_dim", c.embed_dim},
              {"aux_hidden", c.aux_hidden},
              {"ff_hidden", c.ff_hidden},
              {"lr0", c.lr0},
              {"lr_decay", c.lr_decay},
              {"batch", c.batch},
              {"min_epochs", c.min_epochs},
              {"max_epochs", c.max_epochs},
              {"stop_rel_loss", c.stop_rel_loss},
              {"log_magnitude", c.log_magnitude},
              {"seed", c.seed}};
}

ExtractorConfig config_from_json(const json& j) {
  ExtractorConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.bins = j.at("bins").get<int>();
  c.blstm_cells = j.at("blstm_cells").get<int>();
  c.n_sublayers = j.at("n_sublayers").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.aux_hidden = j.at("aux_hidden").get<int>();
  c.ff_hidden = j.at("ff_hidden").get<int>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.batch = j.at("batch").get<int>();
  c.min_epochs = j.at("min_epochs").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.stop_rel_loss = j.at("stop_rel_loss").get<double>();
  c.log_magnitude = j.at("log_magnitude").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}
}  // namespace

void ExtractorModel::save(const std::string& path) const {
  TensorContainer c;
  c.kind = "extractor";
  c.meta = config_to_json(config);
  for (std::size_t i = 0; i < params.names.size(); ++i)
    c.tensors.push_back({params.names[i], params.values[i], Dtype::f32});
  save_container(path, c);
}

ExtractorModel ExtractorModel::load(const std::string& path) {
  TensorContainer c = load_container(path);
  if (c.kind != "extractor") throw InputError("not an extractor model: " + path);
  ExtractorModel m = init(config_from_json(c.meta));
  for (std::size_t i = 0; i < m.params.names.size(); ++i) {
    const NamedTensor& t = c.find(m.params.names[i]);
    if (t.value.rows() != m.params.values[i].rows() ||
        t.value.cols() != m.params.values[i].cols())
      throw InputError("tensor shape mismatch for " + m.params.names[i] + " in " + path);
    m.params.values[i] = t.value;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

double mean_loss(const ExtractorModel& m, const std::vector<TrainExample>& set) {
  double acc = 0.0;
  for (const auto& ex : set)
    acc += mtsal_loss(m.forward(ex.mix_mag, ex.aux_mag), ex.mix_mag, ex.target_g);
  return acc / static_cast<double>(set.size());
}

struct AdamState {
  ParamSet m, v;
  long step = 0;
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  explicit AdamState(const ParamSet& params)
      : m(params.zeros_like()), v(params.zeros_like()) {}

  void update(ParamSet& params, const ParamSet& grads, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      m.values[i] = kBeta1 * m.values[i] + (1.0 - kBeta1) * grads.values[i];
      v.values[i] =
          kBeta2 * v.values[i] + (1.0 - kBeta2) * grads.values[i].array().square().matrix();
      params.values[i].array() -=
          lr * (m.values[i].array() / bc1) /
          ((v.values[i].array() / bc2).sqrt() + kEps);
    }
  }
};

}  // namespace

TrainResult train_extractor(const ExtractorConfig& cfg, const std::vector<TrainExample>& train,
                            const std::vector<TrainExample>& dev) {
  cfg.validate();
  if (train.empty()) throw InputError("training set is empty");
  if (dev.empty()) throw InputError("dev set is empty");

  ExtractorModel model = ExtractorModel::init(cfg);
  AdamState adam(model.params);
  Rng shuffle_rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ull);

  TrainResult result;
  result.model = model;
  double lr = cfg.lr0;
  double best_dev = std::numeric_limits<double>::infinity();
  double prev_dev = std::numeric_limits<double>::infinity();

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the deterministic stream.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    double train_acc = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t end = std::min(pos + static_cast<std::size_t>(cfg.batch), order.size());
      ParamSet grads = model.params.zeros_like();
      for (std::size_t k = pos; k < end; ++k)
        train_acc += model.loss_and_grad(train[order[k]], grads);
      const double inv = 1.0 / static_cast<double>(end - pos);
      for (auto& g : grads.values) g *= inv;
      adam.update(model.params, grads, lr);
      pos = end;
    }
    const double train_loss = train_acc / static_cast<double>(train.size());
    const double dev_loss = mean_loss(model, dev);

    result.log.push_back({epoch, train_loss, dev_loss, lr});

    if (!std::isfinite(dev_loss) || !std::isfinite(train_loss)) {
      // Divergence: keep the best checkpoint and report failure upstream.
      result.diverged = true;
      break;
    }

    if (dev_loss < best_dev) {
      best_dev = dev_loss;
      result.model = model;
    }
    if (std::isfinite(prev_dev) && dev_loss > prev_dev) lr *= cfg.lr_decay;

    const double rel_gain =
        std::isfinite(prev_dev) ? (prev_dev - dev_loss) / prev_dev : 1.0;
    if (epoch >= cfg.min_epochs && rel_gain < cfg.stop_rel_loss) break;
    prev_dev = dev_loss;
  }
  return result;
}

void save_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write training log: " + path);
  for (const auto& e : log) {
    json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss},
              {"lr", e.lr}};
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Inference.

Waveform extract(const ExtractorModel& model, const Waveform& mixture, const Waveform& aux) {
  ComplexSpectrogram mix = stft(mixture);
  ComplexSpectrogram aux_spec = stft(aux);
  Mat mix_mag = magnitude(mix);
  Mat aux_mag = magnitude(aux_spec);
  Mat mask = model.forward(mix_mag, aux_mag);
  Mat estimated = mask.cwiseProduct(mix_mag);
  return reconstruct_with_mixture_phase(estimated, mix);
}

TrainExample make_train_example(const Waveform& mixture, const Waveform& target_ref,
                                const Waveform& aux) {
  ComplexSpectrogram mix = stft(mixture);
  ComplexSpectrogram ref = stft(target_ref);
  TrainExample ex;
  ex.mix_mag = magnitude(mix);
  ex.aux_mag = magnitude(stft(aux));
  ex.target_g = psm_magnitude_target(ref, mix);
  return ex;
}

}  // namespace tsesv
