#include "cvote/voting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvote {

void VoteParams::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::config, "beta must lie in (0, 1)");
  if (!(eps_n > 0.0) || !std::isfinite(eps_n)) fail(ErrorKind::config, "eps_n must be > 0");
  if (!(eps_r > 0.0) || !std::isfinite(eps_r)) fail(ErrorKind::config, "eps_r must be > 0");
}

std::string to_string(PredictionMode mode) {
  switch (mode) {
    case PredictionMode::baseline: return "baseline";
    case PredictionMode::baseline_ea: return "baseline-ea";
    case PredictionMode::cs_pnn_only: return "cs-pnn";
    case PredictionMode::full: return "full";
  }
  return "full";
}

std::optional<PredictionMode> parse_prediction_mode(std::string_view text) {
  if (text == "baseline") return PredictionMode::baseline;
  if (text == "baseline-ea" || text == "baseline_ea") return PredictionMode::baseline_ea;
  if (text == "cs-pnn" || text == "cs_pnn_only") return PredictionMode::cs_pnn_only;
  if (text == "full") return PredictionMode::full;
  return std::nullopt;
}

CandidateSlate select_candidates(const Logits& logits, const std::vector<TaskMask>& task_masks,
                                 std::span<const double> weight_norms, double eps_n) {
  CandidateSlate slate;
  const std::size_t n = task_masks.size();
  slate.labels.resize(n);
  slate.raw_scores.resize(n);
  slate.norm_scores.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    check_same_dim(task_masks[k].size(), logits.size(), "select_candidates");
    bool found = false;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (!task_masks[k][i]) continue;
      if (!found || logits[i] > slate.raw_scores[k]) {
        slate.raw_scores[k] = logits[i];
        slate.labels[k] = static_cast<ClassIndex>(i);
        found = true;
      }
    }
    if (!found) fail(ErrorKind::data, "select_candidates: task " + std::to_string(k) + " has an empty mask");
  }
  if (n == 0) return slate;

  const double lo = *std::min_element(slate.raw_scores.begin(), slate.raw_scores.end());
  double denom = eps_n;
  for (double s : slate.raw_scores) denom += s - lo;
  for (std::size_t k = 0; k < n; ++k) {
    const ClassIndex y = slate.labels[k];
    if (y >= weight_norms.size()) fail(ErrorKind::numeric, "select_candidates: missing weight norm");
    const double norm = weight_norms[y];
    if (!(norm > 0.0)) fail(ErrorKind::numeric, "select_candidates: zero weight norm for candidate class " + std::to_string(y));
    slate.norm_scores[k] = (slate.raw_scores[k] - lo) / denom / norm;
  }
  return slate;
}

PriorVector pnn_prior(std::span<const float> f, const ExemplarSet& set, double eps_r) {
  check_same_dim(f.size(), set.dim(), "pnn_prior");
  const std::size_t n = set.num_tasks();
  Vec64 nearest(n, std::numeric_limits<double>::infinity());
  for (const auto& [label, store] : set.stores()) {
    for (const auto& ex : store.items) {
      nearest[store.task] = std::min(nearest[store.task], euclidean_distance(f, ex.feature));
    }
  }
  PriorVector w(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(nearest[k])) fail(ErrorKind::data, "pnn_prior: task " + std::to_string(k) + " has no exemplars");
    w[k] = 1.0 / (eps_r + nearest[k]);
    total += w[k];
  }
  for (auto& x : w) x /= total;
  return w;
}

ClassIndex vote(const CandidateSlate& slate, const PriorVector& prior, const VoteParams& params) {
  check_same_dim(slate.size(), prior.size(), "vote");
  if (slate.size() == 0) fail(ErrorKind::numeric, "vote: empty slate");
  const auto [lo, hi] = std::minmax_element(prior.begin(), prior.end());
  const double gamma = (*hi - *lo) / params.beta;
  const double weight = std::exp(gamma - 1.0);
  std::size_t best = 0;
  double best_score = slate.norm_scores[0] + weight * prior[0];
  for (std::size_t k = 1; k < slate.size(); ++k) {
    const double score = slate.norm_scores[k] + weight * prior[k];
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return slate.labels[best];
}

double estimate_beta_pilot(const ExemplarSet& set, const AugmentConfig& cfg, double eps_r, RngStream& rng,
                           double default_beta) {
  if (set.num_tasks() < 2) return default_beta;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [label, store] : set.stores()) {
    for (const auto& ex : store.items) {
      const Vec32 pilot = augment(ex, set, cfg, rng);
      const PriorVector w = pnn_prior(pilot, set, eps_r);
      const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
      sum += *hi - *lo;
      ++count;
    }
  }
  if (count == 0) return default_beta;
  return std::clamp(sum / static_cast<double>(count), 0.05, 1.0);
}

ClassIndex nearest_exemplar_label(std::span<const float> f, const ExemplarSet& set) {
  check_same_dim(f.size(), set.dim(), "nearest_exemplar_label");
  double best = std::numeric_limits<double>::infinity();
  ClassIndex label = 0;
  bool any = false;
  for (const auto& [lab, store] : set.stores()) {
    for (const auto& ex : store.items) {
      const double d = euclidean_distance(f, ex.feature);
      if (d < best) {
        best = d;
        label = ex.label;
        any = true;
      }
    }
  }
  if (!any) fail(ErrorKind::data, "nearest_exemplar_label: exemplar set is empty");
  return label;
}

Predictor::Predictor(const SingleHeadClassifier& clf, const ExemplarSet& set, VoteParams params)
    : clf_(clf), set_(set), params_(params), norms_(clf.weight_norms()) {
  params_.validate();
  if (!set.empty()) masks_ = masks(set);
}

ClassIndex Predictor::predict(std::span<const float> f, PredictionMode mode) const {
  switch (mode) {
    case PredictionMode::baseline:
    case PredictionMode::baseline_ea: {
      const Logits l = clf_.logits(f);
      if (l.empty()) fail(ErrorKind::numeric, "predict: classifier has no classes");
      return static_cast<ClassIndex>(std::max_element(l.begin(), l.end()) - l.begin());
    }
    case PredictionMode::cs_pnn_only:
      return nearest_exemplar_label(f, set_);
    case PredictionMode::full: {
      if (masks_.empty()) fail(ErrorKind::data, "predict: exemplar set is empty");
      const CandidateSlate slate = select_candidates(clf_.logits(f), masks_, norms_, params_.eps_n);
      return vote(slate, pnn_prior(f, set_, params_.eps_r), params_);
    }
  }
  fail(ErrorKind::config, "predict: unknown mode");
}

ClassIndex predict(std::span<const float> f, const SingleHeadClassifier& clf, const ExemplarSet& set,
                   const VoteParams& params, PredictionMode mode) {
  return Predictor(clf, set, params).predict(f, mode);
}

}  // namespace cvote
