#pragma once

// Corrections for an unobserved confounder predicted by a preliminary
// classifier: confidence thresholding, attenuation-corrected correlation
// estimation, and greedy correlation matching over the predicted labels.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "confound/corpus.hpp"

namespace confound {

struct ThresholdResult {
  Dataset data;                    // instances with z_posterior >= epsilon, order preserved
  double retained_fraction = 0.0;
};

// Keeps instances whose confidence in the predicted confounder reaches
// epsilon. Every instance must carry z_pred/z_posterior.
ThresholdResult threshold_filter(const Dataset& data, double epsilon);

struct ErrorVariance {
  double mu_ez = 0.0;     // mean of the binary error vector
  double v_ez_hat = 0.0;  // population variance; equals mu(1-mu) for binary e
};

ErrorVariance estimate_error_variance(std::span<const int> errors);

// Population variance of the predictions on the target data minus the
// estimated error variance. May be <= 0; degeneracy is flagged downstream.
double estimate_z_variance(std::span<const int> z_pred_on_target, double v_ez_hat);

struct CorrelationEstimate {
  double r_observed = 0.0;  // phi(y, z') on the target training data
  double v_ez_hat = 0.0;
  double v_z_hat = 0.0;
  double mu_ez = 0.0;
  double r_hat = 0.0;       // corrected estimate, clamped to [-1, 1]
  bool degenerate = false;        // v_z_hat <= 0: correction skipped, r_hat = r_observed
  bool r_degenerate = false;      // constant y or z' made r_observed undefined (taken as 0)
};

// Inverts the attenuation relation: r_hat = r_observed * sqrt(1 + Vez/Vz).
CorrelationEstimate estimate_true_correlation(double r_observed, double v_ez_hat,
                                              double v_z_hat);

// Full pipeline: phi(y, z'), error variance from cross-validation errors,
// z variance on the target predictions, then the corrected estimate.
CorrelationEstimate estimate_correlation(std::span<const int> y_labels,
                                         std::span<const int> z_pred_on_target,
                                         std::span<const int> cv_errors);

// Mean posterior of the assignment minus the correlation gap |r_hat - r'|.
// z_pred/posteriors define the per-instance probability of each assignment.
double correlation_objective(std::span<const int> assignments, std::span<const int> z_pred,
                             std::span<const double> posteriors,
                             std::span<const int> y_labels, double r_hat,
                             bool* r_degenerate = nullptr);

enum class FlipOrder {
  ascending_confidence,   // most-likely-wrong first (default)
  descending_confidence,
};

struct MatchStep {
  std::size_t instance_index = 0;
  bool flipped = false;
  double gap = 0.0;  // |r_hat - r'| after the decision
};

struct MatchResult {
  std::vector<int> assignments;        // final z* over the dataset
  int flips = 0;
  std::vector<double> objective_trace; // initial gap, then the gap after each accepted flip
  double final_gap = 0.0;
  bool r_degenerate = false;           // some r' along the way was undefined (taken as 0)
  std::vector<MatchStep> steps;        // every visited instance, for the CSV trace
};

// Greedy hill climbing: start from the argmax predictions, visit instances in
// confidence order, flip a label only when that strictly shrinks the gap, and
// repeat passes until one completes without a flip (or the gap hits the
// 1e-9 floor).
MatchResult correlation_match(const Dataset& data, std::span<const int> y_labels, double r_hat,
                              FlipOrder order = FlipOrder::ascending_confidence);

void write_match_trace_csv(const MatchResult& result, const std::string& path);

}  // namespace confound
