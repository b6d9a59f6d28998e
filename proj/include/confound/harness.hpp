#pragma once

// Experiment orchestration: the noise sweep (observed z with injected flips),
// the umbrella sweep (fixed preliminary quality across the bias grid), and
// the heatmap sweep (preliminary quality varied through label noise in D_z).
// Grid cells run in parallel; rows are sorted before emission so output files
// are byte-identical across runs and thread counts.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "confound/adjust.hpp"
#include "confound/corpus.hpp"
#include "confound/learner.hpp"

namespace confound {

enum class Method { lr, ba_observed, ba_raw, ba_epsilon, ba_corrmatch };

const std::vector<Method>& all_methods();
std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct ExperimentConfig {
  CorpusConfig corpus;
  TrainConfig train;
  // (b_train, b_test) pairs; b is p(y=1|z=1), so r = 2b-1 under the default
  // uniform marginals.
  std::vector<std::pair<double, double>> bias_grid;
  std::vector<double> noise_grid;
  double epsilon = 0.75;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  int n_train = 1000;
  int n_test = 1000;
  int n_dz = 1000;    // preliminary-study sample size, drawn disjointly
  int cv_folds = 10;
  FlipOrder flip_order = FlipOrder::ascending_confidence;

  void validate() const;
};

// Defaults: r_train fixed at 0.6 with r_test swept over {-0.8..0.8} step 0.2
// plus the mirrored direction, noise grid {0..0.35} step 0.05, ten seeds.
ExperimentConfig default_experiment_config();
// JSON file mirroring ExperimentConfig; unknown keys are rejected.
ExperimentConfig load_experiment_config(const std::string& path);

struct SweepRow {
  Method method = Method::lr;
  std::uint64_t seed = 0;
  double noise = 0.0;
  double b_train = 0.5;
  double b_test = 0.5;
  double delta_yz = 0.0;
  double f1_z = 0.0;     // preliminary quality against true z on the target training data
  double f1_z_cv = 0.0;  // pooled cross-validation F1 on D_z (against its noisy labels)
  double f1_y = 0.0;
  double f1_y_macro = 0.0;
  double r_true = 0.0;
  double r_observed = 0.0;
  double r_hat = 0.0;
  double r_matched = 0.0;  // phi(y, z*) after matching; nan for other methods
  int flips = 0;
  double retained_fraction = 1.0;
  bool degenerate = false;
};

struct DeltaSummary {
  Method method = Method::lr;
  double noise = 0.0;
  double delta_yz = 0.0;
  double f1_y_mean = 0.0;
  double f1_y_stddev = 0.0;
  int cells = 0;
};

struct RobustnessSummary {
  Method method = Method::lr;
  double noise = 0.0;
  double f1_z_mean = 0.0;
  double f1_y_mean = 0.0;
  // Mean over seeds of the per-seed std dev of F1_y across the bias grid.
  double stddev_mean_per_seed = 0.0;
  // Std dev across bias-grid cells of the per-cell seed means.
  double stddev_of_seed_means = 0.0;
};

struct SweepResult {
  std::string mode;  // noise | umbrella | heatmap
  std::vector<SweepRow> rows;
  std::vector<DeltaSummary> per_delta;
  std::vector<RobustnessSummary> robustness;
};

// Observed-z regime: flips are injected directly into the training z column.
// Runs methods {lr, ba_observed}; both must be configured.
SweepResult run_noise_sweep(const ExperimentConfig& config);

// Unobserved-z regime at one preliminary quality level: the z-classifier is
// trained once per seed on a disjoint D_z whose labels carry dz_noise flips
// (0 keeps the corpus-default quality), then applied across the bias grid.
SweepResult run_umbrella(const ExperimentConfig& config, double dz_noise = 0.0);

// Umbrella repeated over noise_grid to vary preliminary quality.
SweepResult run_heatmap(const ExperimentConfig& config);

// Recomputes per_delta and robustness from rows.
void summarize(SweepResult& result);

// Deterministic CSV with a `# key=value` metadata header recording the
// config. emit_plotdata writes the per-figure companions
// (<prefix>.delta.csv, <prefix>.robustness.csv, <prefix>.recovery.csv).
void emit_csv(const SweepResult& result, const ExperimentConfig& config,
              const std::string& path);
void emit_plotdata(const SweepResult& result, const ExperimentConfig& config,
                   const std::string& prefix);

// Reads an emit_csv file back; summaries are recomputed from the rows.
SweepResult read_csv_rows(const std::string& path);

}  // namespace confound
