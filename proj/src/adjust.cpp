#include "confound/adjust.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "confound/errors.hpp"
#include "confound/format.hpp"
#include "confound/metrics.hpp"

namespace confound {

ThresholdResult threshold_filter(const Dataset& data, double epsilon) {
  if (epsilon < 0.5 || epsilon > 1.0) {
    throw ConfigError("epsilon must lie in [0.5, 1]");
  }
  ThresholdResult result;
  result.data.vocab_size = data.vocab_size;
  for (const Instance& inst : data.instances) {
    if (!inst.z_posterior.has_value()) {
      throw DataError("threshold_filter requires z_posterior on every instance");
    }
    if (*inst.z_posterior >= epsilon) result.data.instances.push_back(inst);
  }
  if (result.data.instances.empty()) {
    throw DataError("threshold filter retained no instances at epsilon=" + fmt_double(epsilon));
  }
  result.retained_fraction =
      static_cast<double>(result.data.instances.size()) / data.instances.size();
  return result;
}

ErrorVariance estimate_error_variance(std::span<const int> errors) {
  if (errors.empty()) throw DataError("error vector is empty");
  const double n = static_cast<double>(errors.size());
  double sum = 0.0;
  for (int e : errors) sum += e != 0 ? 1.0 : 0.0;
  const double mu = sum / n;
  double ss = 0.0;
  for (int e : errors) {
    const double d = (e != 0 ? 1.0 : 0.0) - mu;
    ss += d * d;
  }
  return ErrorVariance{mu, ss / n};
}

double estimate_z_variance(std::span<const int> z_pred_on_target, double v_ez_hat) {
  if (z_pred_on_target.empty()) throw DataError("prediction vector is empty");
  const double n = static_cast<double>(z_pred_on_target.size());
  double sum = 0.0;
  for (int z : z_pred_on_target) sum += z != 0 ? 1.0 : 0.0;
  const double mu = sum / n;
  double ss = 0.0;
  for (int z : z_pred_on_target) {
    const double d = (z != 0 ? 1.0 : 0.0) - mu;
    ss += d * d;
  }
  return ss / n - v_ez_hat;
}

CorrelationEstimate estimate_true_correlation(double r_observed, double v_ez_hat,
                                              double v_z_hat) {
  CorrelationEstimate est;
  est.r_observed = r_observed;
  est.v_ez_hat = v_ez_hat;
  est.v_z_hat = v_z_hat;
  if (v_z_hat > 0.0) {
    est.r_hat = std::clamp(r_observed * std::sqrt(1.0 + v_ez_hat / v_z_hat), -1.0, 1.0);
  } else {
    est.degenerate = true;
    est.r_hat = r_observed;  // fail open: no correction
  }
  return est;
}

CorrelationEstimate estimate_correlation(std::span<const int> y_labels,
                                         std::span<const int> z_pred_on_target,
                                         std::span<const int> cv_errors) {
  bool r_degenerate = false;
  const double r_obs = phi_correlation(y_labels, z_pred_on_target, &r_degenerate);
  const ErrorVariance ev = estimate_error_variance(cv_errors);
  const double v_z = estimate_z_variance(z_pred_on_target, ev.v_ez_hat);
  CorrelationEstimate est = estimate_true_correlation(r_obs, ev.v_ez_hat, v_z);
  est.mu_ez = ev.mu_ez;
  est.r_degenerate = r_degenerate;
  return est;
}

namespace {

// 2x2 counts sufficient for phi(y, assignment), updated in O(1) per flip.
struct PhiCounts {
  long long n = 0;
  long long n_y1 = 0;
  long long n_z1 = 0;
  long long n11 = 0;

  double phi(bool* degenerate) const {
    const auto c11 = static_cast<std::size_t>(n11);
    const auto c10 = static_cast<std::size_t>(n_y1 - n11);
    const auto c01 = static_cast<std::size_t>(n_z1 - n11);
    const auto c00 = static_cast<std::size_t>(n - n_y1 - n_z1 + n11);
    return phi_from_counts(c11, c10, c01, c00, degenerate);
  }
};

}  // namespace

double correlation_objective(std::span<const int> assignments, std::span<const int> z_pred,
                             std::span<const double> posteriors,
                             std::span<const int> y_labels, double r_hat, bool* r_degenerate) {
  const std::size_t n = assignments.size();
  if (z_pred.size() != n || posteriors.size() != n || y_labels.size() != n) {
    throw std::invalid_argument("correlation_objective requires equal-length vectors");
  }
  if (n == 0) throw DataError("correlation_objective on empty vectors");
  double mean_posterior = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool agrees = (assignments[i] != 0) == (z_pred[i] != 0);
    mean_posterior += agrees ? posteriors[i] : 1.0 - posteriors[i];
  }
  mean_posterior /= static_cast<double>(n);
  bool degenerate = false;
  const double r_prime = phi_correlation(y_labels, assignments, &degenerate);
  if (r_degenerate) *r_degenerate = degenerate;
  return mean_posterior - std::abs(r_hat - r_prime);
}

MatchResult correlation_match(const Dataset& data, std::span<const int> y_labels, double r_hat,
                              FlipOrder order) {
  const std::size_t n = data.instances.size();
  if (n < 2) throw DataError("correlation_match requires at least 2 instances");
  if (y_labels.size() != n) {
    throw std::invalid_argument("label count does not match dataset size");
  }
  const std::vector<int> z_pred = data.z_pred_vector();
  const std::vector<double> posteriors = data.z_posterior_vector();

  MatchResult result;
  result.assignments = z_pred;

  PhiCounts counts;
  counts.n = static_cast<long long>(n);
  for (std::size_t i = 0; i < n; ++i) {
    counts.n_y1 += y_labels[i] != 0 ? 1 : 0;
    counts.n_z1 += z_pred[i] != 0 ? 1 : 0;
    counts.n11 += (y_labels[i] != 0 && z_pred[i] != 0) ? 1 : 0;
  }

  bool degenerate = false;
  double gap = std::abs(r_hat - counts.phi(&degenerate));
  result.r_degenerate = degenerate;
  result.objective_trace.push_back(gap);

  // Visit order: confidence of the initial argmax assignment, index-stable.
  std::vector<std::size_t> visit(n);
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  if (order == FlipOrder::ascending_confidence) {
    std::stable_sort(visit.begin(), visit.end(),
                     [&](std::size_t a, std::size_t b) { return posteriors[a] < posteriors[b]; });
  } else {
    std::stable_sort(visit.begin(), visit.end(),
                     [&](std::size_t a, std::size_t b) { return posteriors[a] > posteriors[b]; });
  }

  constexpr double kGapFloor = 1e-9;
  bool improved = true;
  while (improved && gap > kGapFloor) {
    improved = false;
    for (std::size_t idx : visit) {
      if (gap <= kGapFloor) break;
      const int cur = result.assignments[idx];
      const int delta = cur != 0 ? -1 : 1;
      PhiCounts trial = counts;
      trial.n_z1 += delta;
      if (y_labels[idx] != 0) trial.n11 += delta;
      bool trial_degenerate = false;
      const double trial_gap = std::abs(r_hat - trial.phi(&trial_degenerate));
      const bool flip = trial_gap < gap;
      if (flip) {
        counts = trial;
        gap = trial_gap;
        result.assignments[idx] = 1 - cur;
        result.flips += 1;
        result.objective_trace.push_back(gap);
        result.r_degenerate = result.r_degenerate || trial_degenerate;
        improved = true;
      }
      result.steps.push_back(MatchStep{idx, flip, gap});
    }
  }
  result.final_gap = gap;
  return result;
}

void write_match_trace_csv(const MatchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,instance_index,flipped,gap\n";
  for (std::size_t s = 0; s < result.steps.size(); ++s) {
    const MatchStep& st = result.steps[s];
    out << s << "," << st.instance_index << "," << (st.flipped ? 1 : 0) << ","
        << fmt_double(st.gap) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace confound
