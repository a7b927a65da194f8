#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvote/classifier.hpp"
#include "cvote/exemplar_store.hpp"

namespace cvote {

// Per-task candidate class, its raw logit and its normalized score.
struct CandidateSlate {
  std::vector<ClassIndex> labels;
  Vec64 raw_scores;
  Vec64 norm_scores;

  std::size_t size() const { return labels.size(); }
};

// Probability per learned task.
using PriorVector = Vec64;

enum class BetaMode { fixed, pilot };

struct VoteParams {
  double beta = 0.5;
  // Regularizer of the candidate normalization denominator.
  double eps_n = 1e-6;
  // Regularizer of the inverse distance. Caps a task's score at 1/eps_r = 100
  // when a test point coincides with one of its exemplars.
  double eps_r = 1e-2;
  BetaMode beta_mode = BetaMode::fixed;

  void validate() const;
};

enum class PredictionMode { baseline, baseline_ea, cs_pnn_only, full };

// CLI spellings: baseline, baseline-ea, cs-pnn, full.
std::string to_string(PredictionMode mode);
std::optional<PredictionMode> parse_prediction_mode(std::string_view text);

// Masked maximum per task (entries outside the mask are excluded, so negative
// logits are never displaced by zeros), then
//   s_hat_k = (s_k - min s) / (eps_n + sum_j (s_j - min s)) / |W_{y_k}|
// with |W_{y_k}| the weight norm of task k's candidate class.
CandidateSlate select_candidates(const Logits& logits, const std::vector<TaskMask>& task_masks,
                                 std::span<const double> weight_norms, double eps_n);

// w_k proportional to 1 / (eps_r + distance from f to task k's nearest exemplar).
PriorVector pnn_prior(std::span<const float> f, const ExemplarSet& set, double eps_r);

// argmax_k s_hat_k + exp(gamma - 1) w_k with gamma = (max W - min W) / beta;
// ties go to the lowest task index. Returns the winning candidate's class.
ClassIndex vote(const CandidateSlate& slate, const PriorVector& prior, const VoteParams& params);

// Mean of (max W - min W) over the pilot set (one augmented copy of every
// stored exemplar), clamped to [0.05, 1]. Fewer than two tasks returns
// default_beta.
double estimate_beta_pilot(const ExemplarSet& set, const AugmentConfig& cfg, double eps_r, RngStream& rng,
                           double default_beta = 0.5);

// Label of the globally nearest stored exemplar (first one on ties).
ClassIndex nearest_exemplar_label(std::span<const float> f, const ExemplarSet& set);

// Frozen model view with masks and weight norms computed once, shareable
// across threads for evaluation.
class Predictor {
 public:
  Predictor(const SingleHeadClassifier& clf, const ExemplarSet& set, VoteParams params);

  ClassIndex predict(std::span<const float> f, PredictionMode mode) const;
  const VoteParams& params() const { return params_; }

 private:
  const SingleHeadClassifier& clf_;
  const ExemplarSet& set_;
  VoteParams params_;
  std::vector<TaskMask> masks_;
  std::vector<double> norms_;
};

ClassIndex predict(std::span<const float> f, const SingleHeadClassifier& clf, const ExemplarSet& set,
                   const VoteParams& params, PredictionMode mode);

}  // namespace cvote
