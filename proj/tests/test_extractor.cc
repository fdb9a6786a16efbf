#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "tsesv/extractor.hpp"
#include "tsesv/mixsim.hpp"
#include "tsesv/model_io.hpp"

using namespace tsesv;

namespace {

Mat random_mag(Rng& rng, int t, int f) {
  Mat m(t, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

ExtractorConfig toy_config(Variant v, std::uint64_t seed) {
  ExtractorConfig cfg;
  cfg.variant = v;
  cfg.blstm_cells = 4;
  cfg.n_sublayers = 3;
  cfg.embed_dim = 3;
  cfg.aux_hidden = 6;
  cfg.ff_hidden = 5;
  cfg.seed = seed;
  return cfg;
}

// Clamped-index delta computed with plain loops, independently of the
// library implementation.
Mat naive_delta(const Mat& x) {
  const Eigen::Index t_total = x.rows();
  Mat d = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < t_total; ++t) {
    for (int n = 1; n <= 2; ++n) {
      Eigen::Index hi = std::min(t + n, t_total - 1);
      Eigen::Index lo = std::max(t - n, Eigen::Index{0});
      d.row(t) += n * (x.row(hi) - x.row(lo)) / 10.0;
    }
  }
  return d;
}

double naive_mtsal_loss(const Mat& mask, const Mat& mix_mag, const Mat& g) {
  Mat e = mask.cwiseProduct(mix_mag);
  Mat de = naive_delta(e), dg = naive_delta(g);
  Mat ae = naive_delta(de), ag = naive_delta(dg);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < e.rows(); ++t)
    for (Eigen::Index k = 0; k < e.cols(); ++k) {
      const double r0 = e(t, k) - g(t, k);
      const double r1 = de(t, k) - dg(t, k);
      const double r2 = ae(t, k) - ag(t, k);
      acc += r0 * r0 + r1 * r1 + r2 * r2;
    }
  return acc / (static_cast<double>(e.rows()) * static_cast<double>(e.cols()));
}

}  // namespace

TEST_CASE("psm target: identical signals give mask one, anti-phase gives zero") {
  ComplexSpectrogram mix, ref;
  mix.frames.resize(2, 3);
  ref.frames.resize(2, 3);
  mix.frames << std::complex<double>(1.0, 0.0), std::complex<double>(0.0, 2.0),
      std::complex<double>(-1.0, 1.0), std::complex<double>(3.0, 0.0),
      std::complex<double>(0.5, -0.5), std::complex<double>(2.0, 2.0);

  ref.frames = mix.frames;
  Mat m = psm_target(ref, mix);
  CHECK((m.array() - 1.0).abs().maxCoeff() < 1e-12);

  ref.frames = -mix.frames;  // opposite phase -> clipped to 0
  m = psm_target(ref, mix);
  CHECK(m.array().abs().maxCoeff() == 0.0);

  // Half-magnitude, same phase -> 0.5.
  ref.frames = 0.5 * mix.frames;
  m = psm_target(ref, mix);
  CHECK((m.array() - 0.5).abs().maxCoeff() < 1e-12);

  // |X| > |Y| in phase -> clipped to 1.
  ref.frames = 4.0 * mix.frames;
  m = psm_target(ref, mix);
  CHECK((m.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("psm target: quadrature phase contributes nothing") {
  ComplexSpectrogram mix, ref;
  mix.frames.resize(1, 1);
  ref.frames.resize(1, 1);
  mix.frames(0, 0) = std::complex<double>(2.0, 0.0);
  ref.frames(0, 0) = std::complex<double>(0.0, 5.0);  // 90 degrees apart
  CHECK(psm_target(ref, mix)(0, 0) == 0.0);
  CHECK(psm_magnitude_target(ref, mix)(0, 0) == 0.0);
}

TEST_CASE("psm magnitude target matches |X|cos(dtheta) clipped to [0,|Y|]") {
  ComplexSpectrogram mix, ref;
  mix.frames.resize(1, 2);
  ref.frames.resize(1, 2);
  // 45-degree offset: |X| cos = 1.5 * cos(pi/4), below the |Y| = 2 clip.
  mix.frames(0, 0) = std::complex<double>(2.0, 0.0);
  ref.frames(0, 0) = 1.5 * std::polar(1.0, M_PI / 4.0);
  // In phase but larger: clipped to |Y| = 1.
  mix.frames(0, 1) = std::complex<double>(0.0, 1.0);
  ref.frames(0, 1) = std::complex<double>(0.0, 7.0);
  Mat g = psm_magnitude_target(ref, mix);
  CHECK(g(0, 0) == doctest::Approx(1.5 * std::cos(M_PI / 4.0)).epsilon(1e-12));
  CHECK(g(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mtsal loss matches an element-wise reference implementation") {
  Rng rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    const int t = 3 + rng.uniform_int(12);
    Mat mix_mag = random_mag(rng, t, 129);
    Mat mask = random_mag(rng, t, 129);
    Mat g = random_mag(rng, t, 129).cwiseProduct(mix_mag);
    const double got = mtsal_loss(mask, mix_mag, g);
    const double want = naive_mtsal_loss(mask, mix_mag, g);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("mtsal loss is zero iff the mask realizes the target exactly") {
  Rng rng(7);
  Mat mix_mag = random_mag(rng, 6, 129).array() + 0.5;
  Mat mask = random_mag(rng, 6, 129);
  Mat g = mask.cwiseProduct(mix_mag);
  CHECK(mtsal_loss(mask, mix_mag, g) < 1e-24);
  CHECK(mtsal_loss(mask, mix_mag, Mat(g.array() + 0.1)) > 1e-4);
}

TEST_CASE("loss gradient wrt mask agrees with finite differences") {
  Rng rng(11);
  Mat mix_mag = random_mag(rng, 5, 129).array() + 0.2;
  Mat mask = random_mag(rng, 5, 129);
  Mat g = random_mag(rng, 5, 129).cwiseProduct(mix_mag);
  Mat dmask;
  mtsal_loss_grad(mask, mix_mag, g, &dmask);

  const double h = 1e-6;
  double worst = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    const Eigen::Index t = rng.uniform_int(5);
    const Eigen::Index k = rng.uniform_int(129);
    Mat mp = mask, mm = mask;
    mp(t, k) += h;
    mm(t, k) -= h;
    const double fd = (mtsal_loss(mp, mix_mag, g) - mtsal_loss(mm, mix_mag, g)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - dmask(t, k)) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("forward with all-zero parameters outputs mask 0.5 everywhere") {
  Rng rng(3);
  for (Variant v : {Variant::kSbfMtsal, Variant::kSbfMtsalConcat}) {
    ExtractorModel m = ExtractorModel::init(toy_config(v, 1));
    for (auto& p : m.params.values) p.setZero();
    Mat mask = m.forward(random_mag(rng, 7, 129), random_mag(rng, 4, 129));
    CHECK(mask.rows() == 7);
    CHECK(mask.cols() == 129);
    CHECK((mask.array() - 0.5).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("forward output is a valid mask and depends on the auxiliary input") {
  Rng rng(5);
  Mat mix = random_mag(rng, 9, 129);
  Mat aux_a = random_mag(rng, 6, 129);
  Mat aux_b = random_mag(rng, 6, 129);
  for (Variant v : {Variant::kSbfMtsal, Variant::kSbfMtsalConcat}) {
    ExtractorModel m = ExtractorModel::init(toy_config(v, 42));
    // Larger-than-init weights so the conditioning path is not attenuated
    // to numerical noise by several small-weight layers.
    for (auto& p : m.params.values) p *= 5.0;
    Mat mask_a = m.forward(mix, aux_a);
    CHECK(mask_a.minCoeff() > 0.0);
    CHECK(mask_a.maxCoeff() < 1.0);
    Mat mask_b = m.forward(mix, aux_b);
    CHECK((mask_a - mask_b).cwiseAbs().maxCoeff() > 1e-8);
  }
}

TEST_CASE("frame-averaged MLP conditioning is aux-frame-permutation invariant") {
  Rng rng(9);
  Mat mix = random_mag(rng, 6, 129);
  Mat aux(5, 129);
  aux = random_mag(rng, 5, 129);
  Mat aux_perm(5, 129);
  const int perm[5] = {3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i) aux_perm.row(i) = aux.row(perm[i]);

  ExtractorModel m = ExtractorModel::init(toy_config(Variant::kSbfMtsal, 17));
  Mat a = m.forward(mix, aux);
  Mat b = m.forward(mix, aux_perm);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single-frame forward matches equations computed by hand") {
  ExtractorConfig cfg = toy_config(Variant::kSbfMtsal, 23);
  ExtractorModel m = ExtractorModel::init(cfg);
  Rng rng(77);
  Mat mix = random_mag(rng, 1, 129);
  Mat aux = random_mag(rng, 1, 129);
  Mat got = m.forward(mix, aux);

  const ParamSet& p = m.params;
  auto relu = [](const Vec& v) { return v.cwiseMax(0.0).eval(); };
  auto sig = [](const Vec& v) { return (1.0 + (-v.array()).exp()).inverse().matrix().eval(); };

  // Auxiliary net on the single aux frame; the frame average is the frame.
  Vec xa = aux.row(0).transpose();
  Vec a1 = relu(p.get("aux.fc1.W") * xa + p.get("aux.fc1.b").col(0));
  Vec a2 = relu(p.get("aux.fc2.W") * a1 + p.get("aux.fc2.b").col(0));
  Vec alpha = p.get("aux.out.W") * a2 + p.get("aux.out.b").col(0);

  // One LSTM step per direction with zero initial state.
  Vec xm = mix.row(0).transpose();
  auto lstm1 = [&](const std::string& d) {
    const int h = cfg.blstm_cells;
    Vec z = p.get("mask.blstm1." + d + ".Wx") * xm + p.get("mask.blstm1." + d + ".b").col(0);
    Vec gi = sig(z.head(h)), gf = sig(z.segment(h, h)), go = sig(z.tail(h));
    Vec gg = z.segment(2 * h, h).array().tanh().matrix();
    Vec c = gi.cwiseProduct(gg);
    (void)gf;  // forget gate multiplies the zero initial cell state
    return Vec(go.cwiseProduct(c.array().tanh().matrix()));
  };
  Vec hcat(2 * cfg.blstm_cells);
  hcat << lstm1("fwd"), lstm1("bwd");

  Vec adapt = Vec::Zero(cfg.ff_hidden);
  for (int s = 0; s < cfg.n_sublayers; ++s) {
    const std::string n = "mask.adapt.sub" + std::to_string(s);
    adapt += alpha(s) * relu(p.get(n + ".W") * hcat + p.get(n + ".b").col(0));
  }
  Vec f1 = relu(p.get("mask.fc1.W") * adapt + p.get("mask.fc1.b").col(0));
  Vec f2 = relu(p.get("mask.fc2.W") * f1 + p.get("mask.fc2.b").col(0));
  Vec want = sig(p.get("mask.out.W") * f2 + p.get("mask.out.b").col(0));

  CHECK((got.row(0).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("three-frame forward matches an unrolled recurrence oracle") {
  ExtractorConfig cfg = toy_config(Variant::kSbfMtsalConcat, 29);
  ExtractorModel m = ExtractorModel::init(cfg);
  for (auto& p : m.params.values) p *= 4.0;
  Rng rng(41);
  Mat mix = random_mag(rng, 3, 129);
  Mat aux = random_mag(rng, 2, 129);
  Mat got = m.forward(mix, aux);

  const ParamSet& p = m.params;
  auto relu = [](const Vec& v) { return v.cwiseMax(0.0).eval(); };
  auto sig = [](const Vec& v) { return (1.0 + (-v.array()).exp()).inverse().matrix().eval(); };
  // Plain unrolled LSTM over the columns of x, zero initial state.
  auto lstm_unrolled = [&](const std::string& pre, const Mat& x) {
    const Mat& wx = p.get(pre + ".Wx");
    const Mat& wh = p.get(pre + ".Wh");
    const Vec b = p.get(pre + ".b").col(0);
    const int h_dim = static_cast<int>(wh.cols());
    Mat hs(h_dim, x.cols());
    Vec h = Vec::Zero(h_dim), c = Vec::Zero(h_dim);
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      Vec z = wx * x.col(t) + wh * h + b;
      Vec gi = sig(z.head(h_dim));
      Vec gf = sig(z.segment(h_dim, h_dim));
      Vec gg = z.segment(2 * h_dim, h_dim).array().tanh().matrix();
      Vec go = sig(z.tail(h_dim));
      c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
      h = go.cwiseProduct(c.array().tanh().matrix());
      hs.col(t) = h;
    }
    return hs;
  };
  auto blstm = [&](const std::string& pre, const Mat& x) {
    Mat fwd = lstm_unrolled(pre + ".fwd", x);
    Mat bwd = lstm_unrolled(pre + ".bwd", x.rowwise().reverse()).rowwise().reverse();
    Mat out(fwd.rows() + bwd.rows(), x.cols());
    out << fwd, bwd;
    return out;
  };
  auto affine = [&](const std::string& pre, const Mat& x) {
    return Mat((p.get(pre + ".W") * x).colwise() + Vec(p.get(pre + ".b").col(0)));
  };

  // Aux net: BLSTM, relu, linear, frame average.
  Mat xa = aux.transpose();
  Mat ha = blstm("aux.blstm", xa);
  Mat a1 = affine("aux.fc1", ha).cwiseMax(0.0);
  Vec e = affine("aux.out", a1).rowwise().mean();

  // Mask net: BLSTM, concat embedding, relu, BLSTM, relu, sigmoid.
  Mat xm = mix.transpose();
  Mat h1 = blstm("mask.blstm1", xm);
  Mat cat(h1.rows() + e.size(), h1.cols());
  cat.topRows(h1.rows()) = h1;
  cat.bottomRows(e.size()).colwise() = e;
  Mat f1 = affine("mask.fc1", cat).cwiseMax(0.0);
  Mat h2 = blstm("mask.blstm2", f1);
  Mat f2 = affine("mask.fc2", h2).cwiseMax(0.0);
  Mat z = affine("mask.out", f2);
  Mat want = (1.0 + (-z.array()).exp()).inverse().matrix().transpose();

  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("extraction with a saturated mask is the identity or zero") {
  Rng rng(37);
  Waveform mixture, aux;
  mixture.samples.resize(2048);
  aux.samples.resize(1024);
  for (auto& s : mixture.samples) s = 0.1 * rng.gaussian();
  for (auto& s : aux.samples) s = 0.1 * rng.gaussian();

  ExtractorModel m = ExtractorModel::init(toy_config(Variant::kSbfMtsal, 4));
  for (auto& p : m.params.values) p.setZero();

  // An extreme output bias saturates the sigmoid to exactly 1 (or 0).
  m.params.get("mask.out.b").setConstant(1e4);
  Waveform out = extract(m, mixture, aux);
  Waveform ident = istft(stft(mixture));
  REQUIRE(out.samples.size() == ident.samples.size());
  double err = 0.0;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    err = std::max(err, std::abs(out.samples[i] - ident.samples[i]));
  CHECK(err < 1e-6);

  m.params.get("mask.out.b").setConstant(-1e4);
  out = extract(m, mixture, aux);
  for (double s : out.samples) CHECK(s == 0.0);
}

TEST_CASE("initialization is seed-deterministic and in range") {
  for (Variant v : {Variant::kSbfMtsal, Variant::kSbfMtsalConcat}) {
    ExtractorModel a = ExtractorModel::init(toy_config(v, 100));
    ExtractorModel b = ExtractorModel::init(toy_config(v, 100));
    ExtractorModel c = ExtractorModel::init(toy_config(v, 101));
    double max_abs = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.params.values.size(); ++i) {
      CHECK(a.params.values[i] == b.params.values[i]);
      max_abs = std::max(max_abs, a.params.values[i].cwiseAbs().maxCoeff());
      diff = std::max(diff, (a.params.values[i] - c.params.values[i]).cwiseAbs().maxCoeff());
    }
    CHECK(max_abs <= 0.05);
    CHECK(diff > 0.0);
  }
}

TEST_CASE("model save/load round trip") {
  const std::string path = "test_extractor_model.bin";
  ExtractorModel m = ExtractorModel::init(toy_config(Variant::kSbfMtsalConcat, 55));
  m.save(path);
  ExtractorModel r = ExtractorModel::load(path);

  CHECK(r.config.variant == m.config.variant);
  CHECK(r.config.blstm_cells == m.config.blstm_cells);
  CHECK(r.config.embed_dim == m.config.embed_dim);
  REQUIRE(r.params.names == m.params.names);
  for (std::size_t i = 0; i < m.params.values.size(); ++i) {
    // Stored as float32.
    Mat rounded = m.params.values[i].cast<float>().cast<double>();
    CHECK(r.params.values[i] == rounded);
  }

  // Serialization is byte-deterministic.
  const std::string path2 = "test_extractor_model2.bin";
  m.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("tensor container stores doubles exactly") {
  TensorContainer c;
  c.kind = "backend";
  c.meta = {{"note", "round trip"}};
  Rng rng(1);
  NamedTensor t;
  t.name = "A";
  t.value = random_mag(rng, 4, 7).array() * 3.0 - 1.5;
  t.dtype = Dtype::f64;
  c.tensors.push_back(t);

  const std::string path = "test_container.bin";
  save_container(path, c);
  TensorContainer r = load_container(path);
  CHECK(r.kind == "backend");
  CHECK(r.meta.at("note") == "round trip");
  CHECK(r.find("A").value == t.value);
  CHECK_THROWS_AS(r.find("B"), InputError);
  std::remove(path.c_str());
}

TEST_CASE("extract returns a frame-aligned waveform and a 0.5 mask halves the mixture") {
  Rng rng(13);
  Waveform mixture, aux;
  mixture.samples.resize(4000);
  aux.samples.resize(3000);
  for (auto& s : mixture.samples) s = 0.1 * rng.gaussian();
  for (auto& s : aux.samples) s = 0.1 * rng.gaussian();

  ExtractorModel m = ExtractorModel::init(toy_config(Variant::kSbfMtsal, 2));
  for (auto& p : m.params.values) p.setZero();  // mask == 0.5 everywhere
  Waveform out = extract(m, mixture, aux);
  CHECK(out.samples.size() == frame_aligned_length(mixture.samples.size()));

  // With mixture phase and a constant 0.5 mask, interior samples halve.
  Waveform ref = mixture;
  ref.samples.resize(out.samples.size());
  double err = 0.0;
  for (std::size_t i = 256; i + 256 < out.samples.size(); ++i)
    err = std::max(err, std::abs(out.samples[i] - 0.5 * ref.samples[i]));
  CHECK(err < 1e-10);
}

TEST_CASE("make_train_example shapes and target bound") {
  Rng rng(19);
  Waveform target, interf, aux;
  target.samples.resize(4096);
  interf.samples.resize(4096);
  aux.samples.resize(2048);
  for (auto& s : target.samples) s = 0.1 * rng.gaussian();
  for (auto& s : interf.samples) s = 0.1 * rng.gaussian();
  for (auto& s : aux.samples) s = 0.1 * rng.gaussian();

  MixtureResult mr = simulate_mixture(target, interf, 0.0);
  TrainExample ex = make_train_example(mr.mixture, mr.target_ref, aux);
  CHECK(ex.mix_mag.cols() == 129);
  CHECK(ex.aux_mag.cols() == 129);
  CHECK(ex.target_g.rows() == ex.mix_mag.rows());
  CHECK(ex.target_g.minCoeff() >= 0.0);
  CHECK(((ex.mix_mag - ex.target_g).array() >= -1e-12).all());
}
