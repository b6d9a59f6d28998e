// Command-line front end: pool generation, preliminary z-classifier studies,
// correlation-matched adjustment of a predicted z column, the three sweep
// modes, and summary reports over previously emitted row files.
//
// Exit codes: 0 success, 2 configuration, 3 sampling infeasible, 4 I/O,
// 5 unusable data, 1 anything else.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confound/adjust.hpp"
#include "confound/backdoor.hpp"
#include "confound/corpus.hpp"
#include "confound/errors.hpp"
#include "confound/format.hpp"
#include "confound/harness.hpp"
#include "confound/learner.hpp"
#include "confound/metrics.hpp"

namespace {

using namespace confound;

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return default_experiment_config();
  return load_experiment_config(path);
}

void write_errors_csv(const CrossvalResult& cv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "index,error,z_pred,z_posterior\n";
  for (std::size_t i = 0; i < cv.errors.size(); ++i) {
    out << i << "," << cv.errors[i] << "," << cv.z_pred[i] << ","
        << fmt_double(cv.posteriors[i]) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_summary_csv(const SweepResult& result, const std::string& source,
                       const std::string& prefix) {
  {
    std::ofstream out(prefix + ".delta.csv");
    if (!out) throw IoError("cannot open for writing: " + prefix + ".delta.csv");
    out << "# format=confound_report v1\n# mode=" << result.mode << "\n# source=" << source
        << "\n";
    out << "method,noise,delta_yz,f1_y_mean,f1_y_stddev,cells\n";
    for (const DeltaSummary& s : result.per_delta) {
      out << method_name(s.method) << "," << fmt_double(s.noise) << "," << fmt_double(s.delta_yz)
          << "," << fmt_double(s.f1_y_mean) << "," << fmt_double(s.f1_y_stddev) << "," << s.cells
          << "\n";
    }
  }
  std::ofstream out(prefix + ".robustness.csv");
  if (!out) throw IoError("cannot open for writing: " + prefix + ".robustness.csv");
  out << "# format=confound_report v1\n# mode=" << result.mode << "\n# source=" << source
      << "\n";
  out << "method,noise,f1_z_mean,f1_y_mean,f1_y_stddev_per_seed,f1_y_stddev_of_means\n";
  for (const RobustnessSummary& s : result.robustness) {
    out << method_name(s.method) << "," << fmt_double(s.noise) << "," << fmt_double(s.f1_z_mean)
        << "," << fmt_double(s.f1_y_mean) << "," << fmt_double(s.stddev_mean_per_seed) << ","
        << fmt_double(s.stddev_of_seed_means) << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Back-door-adjusted classification under confounding shift"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON experiment config (defaults used when absent)");

  auto* generate = app.add_subcommand("generate", "Generate a synthetic pool to a TSV file");
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  generate->add_option("--out", gen_out, "Output TSV path")->required();
  generate->add_option("--seed", gen_seed, "Override the corpus seed");

  auto* preliminary = app.add_subcommand(
      "preliminary", "Cross-validate a z-classifier on a dataset; optionally apply it");
  std::string pre_data, pre_errors, pre_apply, pre_apply_out, pre_model;
  double pre_noise = 0.0;
  std::optional<std::uint64_t> pre_seed;
  preliminary->add_option("--data", pre_data, "Training dataset (TSV)")->required();
  preliminary->add_option("--noise", pre_noise, "Flip probability for the z labels")
      ->check(CLI::Range(0.0, 0.5));
  preliminary->add_option("--errors", pre_errors, "Out-of-fold error/posterior CSV path");
  preliminary->add_option("--apply", pre_apply, "Dataset to annotate with z_pred/z_posterior");
  preliminary->add_option("--apply-out", pre_apply_out, "Annotated dataset output path");
  preliminary->add_option("--model", pre_model, "Save the fitted classifier here");
  preliminary->add_option("--seed", pre_seed, "Override the training seed");

  auto* match = app.add_subcommand(
      "match", "Adjust a predicted z column by correlation matching or thresholding");
  std::string match_data, match_out, match_trace, match_method = "corrmatch";
  std::optional<double> match_r_hat, match_epsilon;
  match->add_option("--data", match_data, "Dataset with z_pred/z_posterior (TSV)")->required();
  match->add_option("--method", match_method, "corrmatch or epsilon")
      ->check(CLI::IsMember({"corrmatch", "epsilon"}));
  match->add_option("--r-hat", match_r_hat, "Target correlation for matching")
      ->check(CLI::Range(-1.0, 1.0));
  match->add_option("--epsilon", match_epsilon, "Confidence threshold (default from config)")
      ->check(CLI::Range(0.5, 1.0));
  match->add_option("--out", match_out, "Adjusted dataset output path")->required();
  match->add_option("--trace", match_trace, "Matching trace CSV path");

  auto* sweep = app.add_subcommand("sweep", "Run a full experiment grid");
  std::string sweep_mode, sweep_out, sweep_plot;
  double sweep_dz_noise = 0.0;
  std::optional<std::uint64_t> sweep_seed;
  sweep->add_option("--mode", sweep_mode, "noise, umbrella, or heatmap")
      ->required()
      ->check(CLI::IsMember({"noise", "umbrella", "heatmap"}));
  sweep->add_option("--out", sweep_out, "Row CSV output path")->required();
  sweep->add_option("--plot", sweep_plot, "Also emit plot-ready summaries under this prefix");
  sweep->add_option("--dz-noise", sweep_dz_noise,
                    "Umbrella only: flip probability for the preliminary labels")
      ->check(CLI::Range(0.0, 0.5));
  sweep->add_option("--seed", sweep_seed, "Run a single seed instead of the configured list");

  auto* report = app.add_subcommand("report", "Summarize an emitted row CSV");
  std::string report_rows, report_out;
  report->add_option("--rows", report_rows, "Row CSV from a sweep")->required();
  report->add_option("--out", report_out, "Summary output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  if (generate->parsed()) {
    ExperimentConfig cfg = load_config(config_path);
    if (gen_seed) cfg.corpus.seed = *gen_seed;
    const Dataset pool = generate_pool(cfg.corpus);
    write_dataset(pool, gen_out);
    std::printf("wrote %zu instances (vocab %d) to %s\n", pool.size(), pool.vocab_size,
                gen_out.c_str());
    return 0;
  }

  if (preliminary->parsed()) {
    ExperimentConfig cfg = load_config(config_path);
    if (pre_seed) cfg.train.seed = *pre_seed;
    const Dataset data = read_dataset(pre_data);
    const std::vector<int> labels =
        inject_noise(data.z_true_vector(), pre_noise, cfg.train.seed ^ 0x707265ULL);
    const CrossvalResult cv = crossval_z_errors(data, labels, cfg.cv_folds, cfg.train);
    const ErrorVariance ev = estimate_error_variance(cv.errors);
    std::printf("cv f1_z=%s mu_ez=%s v_ez_hat=%s (%d folds, n=%zu)\n",
                fmt_double(cv.f1_z).c_str(), fmt_double(ev.mu_ez).c_str(),
                fmt_double(ev.v_ez_hat).c_str(), cfg.cv_folds, data.size());
    if (!pre_errors.empty()) write_errors_csv(cv, pre_errors);
    const LogRegModel model = fit_labels(data, labels, cfg.train);
    if (!pre_model.empty()) save_model(model, pre_model);
    if (!pre_apply.empty()) {
      if (pre_apply_out.empty()) throw ConfigError("--apply requires --apply-out");
      Dataset target = read_dataset(pre_apply);
      for (Instance& inst : target.instances) {
        const double p1 = predict_posterior(model, inst.features);
        inst.z_pred = p1 >= 0.5 ? 1 : 0;
        inst.z_posterior = *inst.z_pred == 1 ? p1 : 1.0 - p1;
      }
      write_dataset(target, pre_apply_out);
      std::printf("annotated %zu instances to %s\n", target.size(), pre_apply_out.c_str());
    }
    return 0;
  }

  if (match->parsed()) {
    ExperimentConfig cfg = load_config(config_path);
    Dataset data = read_dataset(match_data);
    if (match_method == "epsilon") {
      const double eps = match_epsilon ? *match_epsilon : cfg.epsilon;
      const ThresholdResult thr = threshold_filter(data, eps);
      write_dataset(thr.data, match_out);
      std::printf("retained %zu of %zu instances (%s) at epsilon=%s\n",
                  thr.data.size(), data.size(), fmt_double(thr.retained_fraction).c_str(),
                  fmt_double(eps).c_str());
      return 0;
    }
    if (!match_r_hat) throw ConfigError("corrmatch requires --r-hat");
    const std::vector<int> y = data.y_vector();
    const MatchResult result = correlation_match(data, y, *match_r_hat, cfg.flip_order);
    for (std::size_t i = 0; i < data.instances.size(); ++i) {
      data.instances[i].z_pred = result.assignments[i];
    }
    write_dataset(data, match_out);
    if (!match_trace.empty()) write_match_trace_csv(result, match_trace);
    std::printf("flips=%d final_gap=%s r_matched=%s%s\n", result.flips,
                fmt_double(result.final_gap).c_str(),
                fmt_double(phi_correlation(y, result.assignments)).c_str(),
                result.r_degenerate ? " (degenerate correlation encountered)" : "");
    return 0;
  }

  if (sweep->parsed()) {
    ExperimentConfig cfg = load_config(config_path);
    if (sweep_seed) cfg.seeds = {*sweep_seed};
    SweepResult result;
    if (sweep_mode == "noise") {
      result = run_noise_sweep(cfg);
    } else if (sweep_mode == "umbrella") {
      result = run_umbrella(cfg, sweep_dz_noise);
    } else {
      result = run_heatmap(cfg);
    }
    emit_csv(result, cfg, sweep_out);
    if (!sweep_plot.empty()) emit_plotdata(result, cfg, sweep_plot);
    std::printf("%s sweep: %zu rows to %s\n", sweep_mode.c_str(), result.rows.size(),
                sweep_out.c_str());
    return 0;
  }

  // report
  const SweepResult rows = read_csv_rows(report_rows);
  write_summary_csv(rows, report_rows, report_out);
  std::printf("%zu rows -> %zu delta groups, %zu robustness groups\n", rows.rows.size(),
              rows.per_delta.size(), rows.robustness.size());
  for (const RobustnessSummary& s : rows.robustness) {
    std::printf("  %-13s noise=%-5s f1_z=%.3f f1_y=%.3f std_per_seed=%.3f std_of_means=%.3f\n",
                method_name(s.method).c_str(), fmt_double(s.noise).c_str(), s.f1_z_mean,
                s.f1_y_mean, s.stddev_mean_per_seed, s.stddev_of_seed_means);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const SamplingError& e) {
    std::fprintf(stderr, "sampling error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
