#pragma once

// L2-regularized binary logistic regression trained with L-BFGS over the
// exact full-batch loss. The loss/gradient kernel has two implementations:
// a plain serial reference and a block-parallel one (OpenMP) whose fixed
// block decomposition makes the result bit-identical for any thread count.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "confound/corpus.hpp"

namespace confound {

struct TrainConfig {
  double l2_text = 1.0;        // ridge strength on ordinary feature weights
  double l2_confounder = 1.0;  // ridge strength on confounder-indicator weights
  int max_iters = 500;
  double tol = 1e-8;  // relative loss-change tolerance
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Target { label_y, confounder_z };

struct LogRegModel {
  std::vector<double> weights;  // sized to the feature space
  double intercept = 0.0;
  double l2_text = 1.0;
  double l2_confounder = 1.0;
  // First index of the confounder-indicator block; -1 when there is none.
  int confounder_start = -1;
  bool converged = false;
  int iterations = 0;

  int dim() const { return static_cast<int>(weights.size()); }
};

struct LossGrad {
  double loss = 0.0;
  // d(loss)/d(weights) followed by d(loss)/d(intercept) in the last slot.
  std::vector<double> grad;
};

// Regularized negative log-likelihood and its exact gradient.
LossGrad loss_and_gradient(const LogRegModel& model, const Dataset& data, Target target);
LossGrad loss_and_gradient(const LogRegModel& model, const Dataset& data,
                           std::span<const int> labels);
// Serial reference kernel, kept as the comparison oracle for the blocked one.
LossGrad loss_and_gradient_serial(const LogRegModel& model, const Dataset& data,
                                  std::span<const int> labels);

LogRegModel fit(const Dataset& data, Target target, const TrainConfig& config,
                int confounder_start = -1);
// Same, with an explicit label column (used for noisy or predicted labels).
LogRegModel fit_labels(const Dataset& data, std::span<const int> labels,
                       const TrainConfig& config, int confounder_start = -1);

double predict_posterior(const LogRegModel& model, std::span<const int> features);

struct CrossvalResult {
  std::vector<int> errors;        // e_i = |z_i - z'_i|, out-of-fold
  std::vector<int> z_pred;        // out-of-fold argmax predictions
  std::vector<double> posteriors; // confidence of z_pred, in [0.5, 1]
  double f1_z = 0.0;              // positive-class F1 of pooled out-of-fold predictions
};

// k-fold cross-validation stratified by label; folds may train in parallel,
// results are pooled by instance index.
CrossvalResult crossval_z_errors(const Dataset& data_z, int k, const TrainConfig& config);
CrossvalResult crossval_z_errors(const Dataset& data_z, std::span<const int> z_labels, int k,
                                 const TrainConfig& config);

// Versioned plain-text serialization; lossless round-trip. The stream forms
// exist so composite models can embed a LogRegModel in their own format.
void write_model(const LogRegModel& model, std::ostream& out);
LogRegModel read_model(std::istream& in, const std::string& context);
void save_model(const LogRegModel& model, const std::string& path);
LogRegModel load_model(const std::string& path);

}  // namespace confound
