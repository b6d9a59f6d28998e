#include "confound/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace confound {

double phi_from_counts(std::size_t n11, std::size_t n10, std::size_t n01, std::size_t n00,
                       bool* degenerate) {
  const double n = static_cast<double>(n11 + n10 + n01 + n00);
  const double a1 = static_cast<double>(n11 + n10);  // a == 1
  const double b1 = static_cast<double>(n11 + n01);  // b == 1
  const double denom = a1 * (n - a1) * b1 * (n - b1);
  if (denom <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return (n * static_cast<double>(n11) - a1 * b1) / std::sqrt(denom);
}

double phi_correlation(std::span<const int> a, std::span<const int> b, bool* degenerate) {
  if (a.size() != b.size()) throw std::invalid_argument("phi_correlation: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("phi_correlation: need at least 2 elements");
  std::size_t n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0) {
      if (b[i] != 0) ++n11; else ++n10;
    } else {
      if (b[i] != 0) ++n01; else ++n00;
    }
  }
  return phi_from_counts(n11, n10, n01, n00, degenerate);
}

namespace {

double f1_for_class(const std::array<std::array<std::size_t, 2>, 2>& c, int positive) {
  const int neg = 1 - positive;
  const double tp = static_cast<double>(c[positive][positive]);
  const double fp = static_cast<double>(c[neg][positive]);
  const double fn = static_cast<double>(c[positive][neg]);
  const double denom_p = tp + fp;
  const double denom_r = tp + fn;
  const double precision = denom_p > 0 ? tp / denom_p : 0.0;
  const double recall = denom_r > 0 ? tp / denom_r : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

EvalReport f1_scores(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("f1_scores: length mismatch");
  EvalReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int t = truth[i] != 0 ? 1 : 0;
    const int p = pred[i] != 0 ? 1 : 0;
    ++r.confusion[t][p];
    if (t == p) ++correct;
  }
  r.accuracy = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
  r.f1_pos = f1_for_class(r.confusion, 1);
  r.f1_macro = 0.5 * (r.f1_pos + f1_for_class(r.confusion, 0));
  return r;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double robustness_stddev(std::span<const double> f1_values) {
  if (f1_values.size() < 2) {
    throw std::invalid_argument("robustness_stddev: need at least 2 values");
  }
  const double m = mean(f1_values);
  double s = 0.0;
  for (double v : f1_values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(f1_values.size()));
}

}  // namespace confound
