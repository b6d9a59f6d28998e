#pragma once

// Binary classification metrics: F1 scores, phi correlation, and the
// standard-deviation robustness summary used by the sweep reports.

#include <array>
#include <cstddef>
#include <span>

namespace confound {

struct EvalReport {
  double f1_pos = 0.0;    // F1 of class 1
  double f1_macro = 0.0;  // mean of per-class F1
  double accuracy = 0.0;
  // confusion[truth][pred]
  std::array<std::array<std::size_t, 2>, 2> confusion{{{0, 0}, {0, 0}}};
};

// Pearson correlation of two 0/1 vectors (phi coefficient).
// A constant vector makes the correlation undefined; it is reported as 0
// and *degenerate (when given) is set.
double phi_correlation(std::span<const int> a, std::span<const int> b,
                       bool* degenerate = nullptr);

// Phi from 2x2 cell counts (n11, n10, n01, n00), same degeneracy rule.
double phi_from_counts(std::size_t n11, std::size_t n10, std::size_t n01, std::size_t n00,
                       bool* degenerate = nullptr);

EvalReport f1_scores(std::span<const int> pred, std::span<const int> truth);

// Population standard deviation; requires at least two values.
double robustness_stddev(std::span<const double> f1_values);

double mean(std::span<const double> values);

}  // namespace confound
