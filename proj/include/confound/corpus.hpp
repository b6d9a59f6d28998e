#pragma once

// Synthetic confounded corpus: pool generation with (y, z)-conditioned term
// activations, constrained biased sampling, and label-noise injection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "confound/errors.hpp"

namespace confound {

struct CorpusConfig {
  int vocab_size_y = 50;       // y-indicative terms
  int vocab_size_z = 50;       // z-indicative terms
  int vocab_size_noise = 200;  // background terms
  double p_on_indicative = 0.3;
  double p_on_background = 0.05;
  int doc_count = 8000;
  std::uint64_t seed = 7;

  int vocab_size() const { return vocab_size_y + vocab_size_z + vocab_size_noise; }
  void validate() const;  // throws ConfigError naming the violated field
};

struct Instance {
  std::vector<int> features;  // active term indices, strictly increasing
  int y = 0;
  int z_true = 0;
  std::optional<int> z_pred;
  std::optional<double> z_posterior;  // confidence of z_pred, in [0.5, 1]
};

struct Dataset {
  int vocab_size = 0;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  std::vector<int> y_vector() const;
  std::vector<int> z_true_vector() const;
  std::vector<int> z_pred_vector() const;        // throws DataError if any missing
  std::vector<double> z_posterior_vector() const;  // throws DataError if any missing
  // counts[y][z_true]
  std::array<std::array<std::size_t, 2>, 2> cell_counts() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct BiasSpec {
  double b_train = 0.8;  // p(y=1 | z=1) in the training sample
  double b_test = 0.8;
  int n_train = 1000;
  int n_test = 1000;
  double p_y = 0.5;
  double p_z = 0.5;

  void validate() const;
};

enum class Split { train, test };

// Integer cell counts implied by (b, n, p_y, p_z): marginals are rounded to
// nearest first, then the joint cell, so p(y) and p(z) hold exactly at the
// count level. Order: {n11, n10, n01, n00} indexed by (y, z).
struct CellCounts {
  std::size_t n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  std::size_t total() const { return n11 + n10 + n01 + n00; }
};
CellCounts implied_cell_counts(double b, int n, double p_y, double p_z);

// doc_count instances, (y, z) assigned round-robin over the four cells,
// term activations Bernoulli conditioned on the matching label.
Dataset generate_pool(const CorpusConfig& config);

// Sample without replacement from `pool` meeting p(y=1|z=1)=b, p(y)=p_y,
// p(z)=p_z exactly at the count level. Indices in `exclusion` are skipped and
// the indices drawn are added to it, so consecutive draws are disjoint.
Dataset biased_sample(const Dataset& pool, const BiasSpec& spec, Split which, std::uint64_t seed,
                      std::unordered_set<std::size_t>* exclusion = nullptr);

// Each label independently flipped with probability p_flip in [0, 0.5].
std::vector<int> inject_noise(std::span<const int> z_labels, double p_flip, std::uint64_t seed);

// TSV round-trip: header "#vocab=<N>", then per instance
// y<TAB>z_true<TAB>[z_pred<TAB>z_posterior<TAB>]i1,i2,...
void write_dataset(const Dataset& data, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace confound
