// eval.cc

#include "tsesv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tsesv {

std::vector<Trial> generate_trials(const std::vector<MixtureSpec>& mixtures,
                                   const CorpusManifest& corpus, int per_target_nontargets,
                                   std::uint64_t seed, bool clean_test) {
  Rng rng(seed);
  std::vector<Trial> trials;
  std::vector<std::string> offenders;

  for (const auto& mix : mixtures) {
    const std::string target_spk = corpus.find(mix.target_utt).spk;
    const std::string split = corpus.find(mix.target_utt).split;
    const std::string test_id = clean_test ? mix.target_utt : mix.mix_id;

    // Enrollment pool for the target speaker: held out from both the
    // in-mixture utterance and the extractor's auxiliary utterance.
    std::vector<const UttRecord*> enroll_pool;
    for (const UttRecord* u : corpus.utts_of(target_spk))
      if (u->utt != mix.target_utt && u->utt != mix.aux_utt) enroll_pool.push_back(u);
    if (enroll_pool.empty()) {
      offenders.push_back(mix.mix_id);
      continue;
    }

    Trial t;
    t.enroll_utt = enroll_pool[rng.uniform_int(static_cast<int>(enroll_pool.size()))]->utt;
    t.test_utt = test_id;
    t.target = true;
    trials.push_back(t);

    // Non-target enrollments from other speakers of the same split.
    std::vector<const UttRecord*> other;
    for (const auto& r : corpus.records)
      if (r.split == split && r.spk != target_spk && r.utt != mix.interferer_utt)
        other.push_back(&r);
    if (other.empty()) {
      offenders.push_back(mix.mix_id);
      continue;
    }
    for (int k = 0; k < per_target_nontargets; ++k) {
      Trial nt;
      nt.enroll_utt = other[rng.uniform_int(static_cast<int>(other.size()))]->utt;
      nt.test_utt = test_id;
      nt.target = false;
      trials.push_back(nt);
    }
  }

  if (!offenders.empty()) {
    std::string msg = "trial generation failed; no held-out enrollment for mixtures:";
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += " " + offenders[i];
    throw InputError(msg);
  }
  return trials;
}

namespace {

struct OperatingPoints {
  // Sorted by increasing threshold; p_fa non-increasing, p_miss
  // non-decreasing. First point is (1, 0), last is (0, 1).
  std::vector<std::pair<double, double>> points;  // (p_fa, p_miss)
};

OperatingPoints operating_points(const std::vector<ScoredTrial>& scores) {
  std::vector<double> tgt, non;
  for (const auto& s : scores) (s.trial.target ? tgt : non).push_back(s.score);
  if (tgt.empty() || non.empty())
    throw InputError("insufficient trials: need at least one target and one non-target");
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());

  std::vector<double> all;
  all.reserve(tgt.size() + non.size());
  all.insert(all.end(), tgt.begin(), tgt.end());
  all.insert(all.end(), non.begin(), non.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());

  OperatingPoints op;
  op.points.emplace_back(1.0, 0.0);  // accept everything
  for (double s : all) {
    // Decision: accept iff score > s.
    double p_fa = static_cast<double>(non.end() - std::upper_bound(non.begin(), non.end(), s)) / nn;
    double p_miss = static_cast<double>(std::upper_bound(tgt.begin(), tgt.end(), s) - tgt.begin()) / nt;
    op.points.emplace_back(p_fa, p_miss);
  }
  return op;
}

}  // namespace

double compute_eer(const std::vector<ScoredTrial>& scores) {
  OperatingPoints op = operating_points(scores);
  for (std::size_t i = 1; i < op.points.size(); ++i) {
    const auto [fa_prev, miss_prev] = op.points[i - 1];
    const auto [fa_cur, miss_cur] = op.points[i];
    if (miss_cur >= fa_cur) {
      // Crossing lies on the segment between the two adjacent points;
      // interpolate both rates linearly and solve fa(s) == miss(s).
      const double dfa = fa_cur - fa_prev;
      const double dmiss = miss_cur - miss_prev;
      const double denom = dmiss - dfa;
      if (std::abs(denom) < 1e-300) return 0.5 * (fa_cur + miss_cur);
      double s = (fa_prev - miss_prev) / denom;
      s = std::clamp(s, 0.0, 1.0);
      return fa_prev + s * dfa;
    }
  }
  return 0.0;  // never crossed: perfectly separated the wrong way around
}

double compute_min_dcf(const std::vector<ScoredTrial>& scores, const DcfParams& p) {
  OperatingPoints op = operating_points(scores);
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [p_fa, p_miss] : op.points) {
    double cost = p.c_miss * p.p_target * p_miss + p.c_fa * (1.0 - p.p_target) * p_fa;
    best = std::min(best, cost / norm);
  }
  return best;
}

std::vector<std::pair<double, double>> det_points(const std::vector<ScoredTrial>& scores) {
  return operating_points(scores).points;
}

void save_trials(const std::string& path, const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write trial file: " + path);
  for (const auto& t : trials)
    out << t.enroll_utt << " " << t.test_utt << " " << (t.target ? "target" : "nontarget") << "\n";
}

std::vector<Trial> load_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("trial file not found: " + path);
  std::vector<Trial> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Trial t;
    std::string key;
    if (!(ss >> t.enroll_utt >> t.test_utt >> key) || (key != "target" && key != "nontarget"))
      throw InputError("malformed trial line in " + path + ": " + line);
    t.target = (key == "target");
    trials.push_back(t);
  }
  return trials;
}

void save_scores(const std::string& path, const std::vector<ScoredTrial>& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write score file: " + path);
  out.precision(17);
  for (const auto& s : scores)
    out << s.trial.enroll_utt << " " << s.trial.test_utt << " "
        << (s.trial.target ? "target" : "nontarget") << " " << s.score << "\n";
}

std::vector<ScoredTrial> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("score file not found: " + path);
  std::vector<ScoredTrial> scores;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoredTrial s;
    std::string key;
    if (!(ss >> s.trial.enroll_utt >> s.trial.test_utt >> key >> s.score) ||
        (key != "target" && key != "nontarget"))
      throw InputError("malformed score line in " + path + ": " + line);
    s.trial.target = (key == "target");
    scores.push_back(s);
  }
  return scores;
}

}  // namespace tsesv
