// eval.hpp
// Trial generation and detection metrics: EER, minimum DCF, DET points.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsesv/common.hpp"
#include "tsesv/mixsim.hpp"

namespace tsesv {

struct Trial {
  std::string enroll_utt;
  std::string test_utt;  // a mix_id or a clean utterance id
  bool target = false;
};

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

struct DcfParams {
  double p_target;
  double c_miss;
  double c_fa;
};

// NIST SRE conventions for the paper's two operating points.
constexpr DcfParams kDcf08{0.01, 10.0, 1.0};
constexpr DcfParams kDcf10{0.001, 1.0, 1.0};

// One target trial per test mixture (enrollment = a held-out utterance of
// the target speaker, distinct from both the in-mixture and the auxiliary
// utterance) plus per_target_nontargets non-target trials from other
// speakers' utterances. With clean_test, the test side is the mixture's
// clean target utterance instead of the mixture itself.
std::vector<Trial> generate_trials(const std::vector<MixtureSpec>& mixtures,
                                   const CorpusManifest& corpus, int per_target_nontargets,
                                   std::uint64_t seed, bool clean_test = false);

double compute_eer(const std::vector<ScoredTrial>& scores);
double compute_min_dcf(const std::vector<ScoredTrial>& scores, const DcfParams& p);

// Monotone staircase of (P_fa, P_miss) operating points, sorted by
// increasing threshold; endpoints are (1,0) and (0,1).
std::vector<std::pair<double, double>> det_points(const std::vector<ScoredTrial>& scores);

// Trial / score file I/O: "<enroll> <test> <target|nontarget> [<score>]".
void save_trials(const std::string& path, const std::vector<Trial>& trials);
std::vector<Trial> load_trials(const std::string& path);
void save_scores(const std::string& path, const std::vector<ScoredTrial>& scores);
std::vector<ScoredTrial> load_scores(const std::string& path);

}  // namespace tsesv
