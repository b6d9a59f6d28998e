#include "confound/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <unordered_set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "confound/backdoor.hpp"
#include "confound/errors.hpp"
#include "confound/format.hpp"
#include "confound/metrics.hpp"
#include "confound/rng.hpp"

namespace confound {

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::lr, Method::ba_observed, Method::ba_raw,
                                              Method::ba_epsilon, Method::ba_corrmatch};
  return methods;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::lr: return "lr";
    case Method::ba_observed: return "ba_observed";
    case Method::ba_raw: return "ba_raw";
    case Method::ba_epsilon: return "ba_epsilon";
    case Method::ba_corrmatch: return "ba_corrmatch";
  }
  throw std::logic_error("unreachable method");
}

Method method_from_name(const std::string& name) {
  for (Method m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
  corpus.validate();
  train.validate();
  if (bias_grid.empty()) throw ConfigError("bias_grid must be non-empty");
  for (const auto& [bt, be] : bias_grid) {
    if (bt < 0.0 || bt > 1.0 || be < 0.0 || be > 1.0) {
      throw ConfigError("bias_grid entries must lie in [0,1]");
    }
  }
  if (noise_grid.empty()) throw ConfigError("noise_grid must be non-empty");
  for (double p : noise_grid) {
    if (p < 0.0 || p > 0.5) throw ConfigError("noise_grid entries must lie in [0,0.5]");
  }
  if (epsilon < 0.5 || epsilon > 1.0) throw ConfigError("epsilon must lie in [0.5,1]");
  if (methods.empty()) throw ConfigError("methods must be non-empty");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be >= 1");
  if (n_dz < 1) throw ConfigError("n_dz must be >= 1");
  if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  // Moderate-signal regime: y carries less direct evidence than z does, so a
  // plain fit leans on z-proxy terms and correlation shift costs it real F1
  // (roughly .79 plain vs .85 adjusted under reversal at r=0.6).
  cfg.corpus.vocab_size_y = 15;
  const double b_fixed = 0.8;  // r_train = 0.6
  for (int i = -4; i <= 4; ++i) {
    const double b = (0.2 * i + 1.0) / 2.0;  // r in {-0.8 .. 0.8}
    cfg.bias_grid.emplace_back(b_fixed, b);
  }
  for (int i = -4; i <= 4; ++i) {
    const double b = (0.2 * i + 1.0) / 2.0;
    if (b == b_fixed) continue;  // (0.8, 0.8) already present
    cfg.bias_grid.emplace_back(b, b_fixed);
  }
  for (int i = 0; i <= 7; ++i) cfg.noise_grid.push_back(0.05 * i);
  cfg.methods = all_methods();
  for (std::uint64_t s = 1; s <= 10; ++s) cfg.seeds.push_back(s);
  return cfg;
}

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();
  try {
    check_keys(j,
               {"corpus", "train", "bias_grid", "noise_grid", "epsilon", "methods", "seeds",
                "n_train", "n_test", "n_dz", "cv_folds", "flip_order"},
               path);
    if (j.contains("corpus")) {
      const json& c = j["corpus"];
      check_keys(c,
                 {"vocab_size_y", "vocab_size_z", "vocab_size_noise", "p_on_indicative",
                  "p_on_background", "doc_count", "seed"},
                 "corpus");
      if (c.contains("vocab_size_y")) cfg.corpus.vocab_size_y = c["vocab_size_y"].get<int>();
      if (c.contains("vocab_size_z")) cfg.corpus.vocab_size_z = c["vocab_size_z"].get<int>();
      if (c.contains("vocab_size_noise")) {
        cfg.corpus.vocab_size_noise = c["vocab_size_noise"].get<int>();
      }
      if (c.contains("p_on_indicative")) {
        cfg.corpus.p_on_indicative = c["p_on_indicative"].get<double>();
      }
      if (c.contains("p_on_background")) {
        cfg.corpus.p_on_background = c["p_on_background"].get<double>();
      }
      if (c.contains("doc_count")) cfg.corpus.doc_count = c["doc_count"].get<int>();
      if (c.contains("seed")) cfg.corpus.seed = c["seed"].get<std::uint64_t>();
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, {"l2_text", "l2_confounder", "max_iters", "tol", "seed"}, "train");
      if (t.contains("l2_text")) cfg.train.l2_text = t["l2_text"].get<double>();
      if (t.contains("l2_confounder")) cfg.train.l2_confounder = t["l2_confounder"].get<double>();
      if (t.contains("max_iters")) cfg.train.max_iters = t["max_iters"].get<int>();
      if (t.contains("tol")) cfg.train.tol = t["tol"].get<double>();
      if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
    }
    if (j.contains("bias_grid")) {
      cfg.bias_grid.clear();
      for (const json& pair : j["bias_grid"]) {
        if (!pair.is_array() || pair.size() != 2) {
          throw ConfigError("bias_grid entries must be [b_train, b_test] pairs");
        }
        cfg.bias_grid.emplace_back(pair[0].get<double>(), pair[1].get<double>());
      }
    }
    if (j.contains("noise_grid")) {
      cfg.noise_grid = j["noise_grid"].get<std::vector<double>>();
    }
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const json& m : j["methods"]) cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("n_train")) cfg.n_train = j["n_train"].get<int>();
    if (j.contains("n_test")) cfg.n_test = j["n_test"].get<int>();
    if (j.contains("n_dz")) cfg.n_dz = j["n_dz"].get<int>();
    if (j.contains("cv_folds")) cfg.cv_folds = j["cv_folds"].get<int>();
    if (j.contains("flip_order")) {
      const std::string order = j["flip_order"].get<std::string>();
      if (order == "ascending") {
        cfg.flip_order = FlipOrder::ascending_confidence;
      } else if (order == "descending") {
        cfg.flip_order = FlipOrder::descending_confidence;
      } else {
        throw ConfigError("flip_order must be 'ascending' or 'descending'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("config type error in " + path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

std::uint64_t dbits(double x) { return std::bit_cast<std::uint64_t>(x); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BlockTask {
  std::uint64_t seed = 0;
  double noise = 0.0;
};

int predict_y(const LogRegModel& model, std::span<const int> features) {
  return predict_posterior(model, features) >= 0.5 ? 1 : 0;
}

// One (seed, noise) block of the observed-z regime: flips injected directly
// into the training z column, methods lr and ba_observed only.
std::vector<SweepRow> run_noise_block(const ExperimentConfig& cfg, BlockTask task,
                                      std::string* log) {
  const std::uint64_t block_seed = mix_seed(task.seed, dbits(task.noise), 0x6e6f6973ULL);
  CorpusConfig cc = cfg.corpus;
  cc.seed = mix_seed(block_seed, 0x706f6f6cULL);
  const Dataset pool = generate_pool(cc);

  std::vector<SweepRow> rows;
  for (const auto& [b_tr, b_te] : cfg.bias_grid) {
    try {
      const std::uint64_t cell_seed = mix_seed(block_seed, dbits(b_tr), dbits(b_te));
      BiasSpec spec;
      spec.b_train = b_tr;
      spec.b_test = b_te;
      spec.n_train = cfg.n_train;
      spec.n_test = cfg.n_test;
      std::unordered_set<std::size_t> exclusion;
      const Dataset train = biased_sample(pool, spec, Split::train, mix_seed(cell_seed, 1),
                                          &exclusion);
      const Dataset test = biased_sample(pool, spec, Split::test, mix_seed(cell_seed, 2),
                                         &exclusion);
      const std::vector<int> y_train = train.y_vector();
      const std::vector<int> z_true = train.z_true_vector();
      const std::vector<int> y_test = test.y_vector();
      const std::vector<int> z_noisy =
          inject_noise(z_true, task.noise, mix_seed(cell_seed, 3));

      bool deg_true = false, deg_obs = false;
      SweepRow base;
      base.seed = task.seed;
      base.noise = task.noise;
      base.b_train = b_tr;
      base.b_test = b_te;
      base.delta_yz = (2.0 * b_tr - 1.0) - (2.0 * b_te - 1.0);
      base.f1_z = f1_scores(z_noisy, z_true).f1_pos;
      base.f1_z_cv = base.f1_z;
      base.r_true = phi_correlation(y_train, z_true, &deg_true);
      base.r_observed = phi_correlation(y_train, z_noisy, &deg_obs);
      base.r_hat = base.r_observed;
      base.r_matched = kNaN;
      base.degenerate = deg_true || deg_obs;

      for (Method m : {Method::lr, Method::ba_observed}) {
        SweepRow row = base;
        row.method = m;
        std::vector<int> preds(test.instances.size(), 0);
        if (m == Method::lr) {
          const LogRegModel model = fit_labels(train, y_train, cfg.train);
          for (std::size_t i = 0; i < test.instances.size(); ++i) {
            preds[i] = predict_y(model, test.instances[i].features);
          }
        } else {
          const BackdoorModel model = fit_backdoor(train, z_noisy, cfg.train);
          for (std::size_t i = 0; i < test.instances.size(); ++i) {
            preds[i] = predict_label(model, test.instances[i].features);
          }
        }
        const EvalReport report = f1_scores(preds, y_test);
        row.f1_y = report.f1_pos;
        row.f1_y_macro = report.f1_macro;
        rows.push_back(row);
      }
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "skipped cell seed=" << task.seed << " noise=" << fmt_double(task.noise)
         << " b_train=" << fmt_double(b_tr) << " b_test=" << fmt_double(b_te) << ": " << e.what()
         << "\n";
      *log += os.str();
    }
  }
  return rows;
}

// One (seed, dz_noise) block of the unobserved-z regime: preliminary
// classifier trained once on a disjoint D_z, then applied across the grid.
std::vector<SweepRow> run_prelim_block(const ExperimentConfig& cfg, BlockTask task,
                                       std::string* log) {
  const std::uint64_t block_seed = mix_seed(task.seed, dbits(task.noise), 0x756d6272ULL);
  CorpusConfig cc = cfg.corpus;
  cc.seed = mix_seed(block_seed, 0x706f6f6cULL);
  const Dataset pool = generate_pool(cc);

  // D_z is drawn bias-free (b = 0.5): the preliminary task is z given x, so
  // its y-z correlation is irrelevant and a balanced draw wastes no pool.
  BiasSpec dz_spec;
  dz_spec.b_train = 0.5;
  dz_spec.b_test = 0.5;
  dz_spec.n_train = cfg.n_dz;
  dz_spec.n_test = cfg.n_dz;
  std::unordered_set<std::size_t> dz_exclusion;
  const Dataset dz =
      biased_sample(pool, dz_spec, Split::train, mix_seed(block_seed, 0x647aULL), &dz_exclusion);
  const std::vector<int> dz_labels =
      inject_noise(dz.z_true_vector(), task.noise, mix_seed(block_seed, 0x666c7031ULL));

  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(block_seed, 0x6376ULL);
  const CrossvalResult cv = crossval_z_errors(dz, dz_labels, cfg.cv_folds, tc);
  const ErrorVariance ev = estimate_error_variance(cv.errors);
  const LogRegModel prelim = fit_labels(dz, dz_labels, tc);

  std::vector<SweepRow> rows;
  for (const auto& [b_tr, b_te] : cfg.bias_grid) {
    try {
      const std::uint64_t cell_seed = mix_seed(block_seed, dbits(b_tr), dbits(b_te));
      BiasSpec spec;
      spec.b_train = b_tr;
      spec.b_test = b_te;
      spec.n_train = cfg.n_train;
      spec.n_test = cfg.n_test;
      std::unordered_set<std::size_t> exclusion = dz_exclusion;
      const Dataset train = biased_sample(pool, spec, Split::train, mix_seed(cell_seed, 1),
                                          &exclusion);
      const Dataset test = biased_sample(pool, spec, Split::test, mix_seed(cell_seed, 2),
                                         &exclusion);
      const std::vector<int> y_train = train.y_vector();
      const std::vector<int> z_true = train.z_true_vector();
      const std::vector<int> y_test = test.y_vector();

      const std::size_t n = train.instances.size();
      std::vector<int> zp(n, 0);
      std::vector<double> post(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double p1 = predict_posterior(prelim, train.instances[i].features);
        zp[i] = p1 >= 0.5 ? 1 : 0;
        post[i] = zp[i] == 1 ? p1 : 1.0 - p1;
      }

      bool deg_true = false, deg_obs = false;
      const double r_true = phi_correlation(y_train, z_true, &deg_true);
      const double r_obs = phi_correlation(y_train, zp, &deg_obs);
      const double v_z = estimate_z_variance(zp, ev.v_ez_hat);
      CorrelationEstimate est = estimate_true_correlation(r_obs, ev.v_ez_hat, v_z);
      est.mu_ez = ev.mu_ez;
      est.r_degenerate = deg_obs;

      Dataset train_pred = train;
      for (std::size_t i = 0; i < n; ++i) {
        train_pred.instances[i].z_pred = zp[i];
        train_pred.instances[i].z_posterior = post[i];
      }

      SweepRow base;
      base.seed = task.seed;
      base.noise = task.noise;
      base.b_train = b_tr;
      base.b_test = b_te;
      base.delta_yz = (2.0 * b_tr - 1.0) - (2.0 * b_te - 1.0);
      base.f1_z = f1_scores(zp, z_true).f1_pos;
      base.f1_z_cv = cv.f1_z;
      base.r_true = r_true;
      base.r_observed = r_obs;
      base.r_hat = est.r_hat;
      base.r_matched = kNaN;
      base.degenerate = est.degenerate || est.r_degenerate || deg_true;

      for (Method m : cfg.methods) {
        try {
          SweepRow row = base;
          row.method = m;
          std::vector<int> preds(test.instances.size(), 0);
          auto predict_all = [&](const BackdoorModel& model) {
            for (std::size_t i = 0; i < test.instances.size(); ++i) {
              preds[i] = predict_label(model, test.instances[i].features);
            }
          };
          switch (m) {
            case Method::lr: {
              const LogRegModel model = fit_labels(train, y_train, cfg.train);
              for (std::size_t i = 0; i < test.instances.size(); ++i) {
                preds[i] = predict_y(model, test.instances[i].features);
              }
              break;
            }
            case Method::ba_observed:
              predict_all(fit_backdoor(train, z_true, cfg.train));
              break;
            case Method::ba_raw:
              predict_all(fit_backdoor(train, zp, cfg.train));
              break;
            case Method::ba_epsilon: {
              const ThresholdResult thr = threshold_filter(train_pred, cfg.epsilon);
              row.retained_fraction = thr.retained_fraction;
              predict_all(fit_backdoor(thr.data, thr.data.z_pred_vector(), cfg.train));
              break;
            }
            case Method::ba_corrmatch: {
              const MatchResult match =
                  correlation_match(train_pred, y_train, est.r_hat, cfg.flip_order);
              row.flips = match.flips;
              bool deg_match = false;
              row.r_matched = phi_correlation(y_train, match.assignments, &deg_match);
              row.degenerate = row.degenerate || match.r_degenerate || deg_match;
              predict_all(fit_backdoor(train, match.assignments, cfg.train));
              break;
            }
          }
          const EvalReport report = f1_scores(preds, y_test);
          row.f1_y = report.f1_pos;
          row.f1_y_macro = report.f1_macro;
          rows.push_back(row);
        } catch (const std::exception& e) {
          std::ostringstream os;
          os << "skipped method " << method_name(m) << " seed=" << task.seed
             << " noise=" << fmt_double(task.noise) << " b_train=" << fmt_double(b_tr)
             << " b_test=" << fmt_double(b_te) << ": " << e.what() << "\n";
          *log += os.str();
        }
      }
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "skipped cell seed=" << task.seed << " noise=" << fmt_double(task.noise)
         << " b_train=" << fmt_double(b_tr) << " b_test=" << fmt_double(b_te) << ": " << e.what()
         << "\n";
      *log += os.str();
    }
  }
  return rows;
}

template <typename BlockFn>
SweepResult run_blocks(const ExperimentConfig& cfg, const std::vector<double>& noise_levels,
                       const std::string& mode, BlockFn block_fn) {
  std::vector<BlockTask> tasks;
  for (double p : noise_levels) {
    for (std::uint64_t s : cfg.seeds) tasks.push_back(BlockTask{s, p});
  }
  std::vector<std::vector<SweepRow>> block_rows(tasks.size());
  std::vector<std::string> block_logs(tasks.size());

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < static_cast<int>(tasks.size()); ++t) {
    try {
      block_rows[t] = block_fn(cfg, tasks[t], &block_logs[t]);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "skipped block seed=" << tasks[t].seed << " noise=" << fmt_double(tasks[t].noise)
         << ": " << e.what() << "\n";
      block_logs[t] += os.str();
    }
  }

  SweepResult result;
  result.mode = mode;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!block_logs[t].empty()) std::cerr << block_logs[t];
    result.rows.insert(result.rows.end(), block_rows[t].begin(), block_rows[t].end());
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const auto key = [](const SweepRow& r) {
      return std::make_tuple(r.noise, r.b_train, r.b_test, static_cast<int>(r.method), r.seed);
    };
    return key(a) < key(b);
  });
  summarize(result);
  return result;
}

double population_stddev_or_zero(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  return robustness_stddev(v);
}

}  // namespace

SweepResult run_noise_sweep(const ExperimentConfig& config) {
  config.validate();
  for (Method required : {Method::lr, Method::ba_observed}) {
    if (std::find(config.methods.begin(), config.methods.end(), required) ==
        config.methods.end()) {
      throw ConfigError("noise sweep requires methods lr and ba_observed");
    }
  }
  return run_blocks(config, config.noise_grid, "noise", run_noise_block);
}

SweepResult run_umbrella(const ExperimentConfig& config, double dz_noise) {
  config.validate();
  if (dz_noise < 0.0 || dz_noise > 0.5) throw ConfigError("dz_noise must lie in [0,0.5]");
  for (Method required : all_methods()) {
    if (std::find(config.methods.begin(), config.methods.end(), required) ==
        config.methods.end()) {
      throw ConfigError("umbrella sweep requires all five methods");
    }
  }
  SweepResult result = run_blocks(config, std::vector<double>{dz_noise}, "umbrella",
                                  run_prelim_block);
  return result;
}

SweepResult run_heatmap(const ExperimentConfig& config) {
  config.validate();
  for (Method required : all_methods()) {
    if (std::find(config.methods.begin(), config.methods.end(), required) ==
        config.methods.end()) {
      throw ConfigError("heatmap sweep requires all five methods");
    }
  }
  return run_blocks(config, config.noise_grid, "heatmap", run_prelim_block);
}

void summarize(SweepResult& result) {
  result.per_delta.clear();
  result.robustness.clear();

  std::map<std::tuple<int, double, double>, std::vector<double>> delta_groups;
  for (const SweepRow& row : result.rows) {
    delta_groups[{static_cast<int>(row.method), row.noise, row.delta_yz}].push_back(row.f1_y);
  }
  for (const auto& [key, values] : delta_groups) {
    DeltaSummary s;
    s.method = static_cast<Method>(std::get<0>(key));
    s.noise = std::get<1>(key);
    s.delta_yz = std::get<2>(key);
    s.f1_y_mean = mean(values);
    s.f1_y_stddev = population_stddev_or_zero(values);
    s.cells = static_cast<int>(values.size());
    result.per_delta.push_back(s);
  }

  struct Group {
    std::vector<double> f1_z;
    std::vector<double> f1_y;
    std::map<std::uint64_t, std::vector<double>> by_seed;
    std::map<std::pair<double, double>, std::vector<double>> by_cell;
  };
  std::map<std::pair<int, double>, Group> groups;
  for (const SweepRow& row : result.rows) {
    Group& g = groups[{static_cast<int>(row.method), row.noise}];
    g.f1_z.push_back(row.f1_z);
    g.f1_y.push_back(row.f1_y);
    g.by_seed[row.seed].push_back(row.f1_y);
    g.by_cell[{row.b_train, row.b_test}].push_back(row.f1_y);
  }
  for (const auto& [key, g] : groups) {
    RobustnessSummary s;
    s.method = static_cast<Method>(key.first);
    s.noise = key.second;
    s.f1_z_mean = mean(g.f1_z);
    s.f1_y_mean = mean(g.f1_y);
    std::vector<double> per_seed_std;
    for (const auto& [seed, values] : g.by_seed) {
      per_seed_std.push_back(population_stddev_or_zero(values));
    }
    s.stddev_mean_per_seed = mean(per_seed_std);
    std::vector<double> cell_means;
    for (const auto& [cell, values] : g.by_cell) cell_means.push_back(mean(values));
    s.stddev_of_seed_means = population_stddev_or_zero(cell_means);
    result.robustness.push_back(s);
  }
}

namespace {

std::vector<std::pair<std::string, std::string>> config_metadata(const SweepResult& result,
                                                                 const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("format", "confound_sweep v1");
  meta.emplace_back("mode", result.mode);
  meta.emplace_back("corpus.vocab_size_y", std::to_string(cfg.corpus.vocab_size_y));
  meta.emplace_back("corpus.vocab_size_z", std::to_string(cfg.corpus.vocab_size_z));
  meta.emplace_back("corpus.vocab_size_noise", std::to_string(cfg.corpus.vocab_size_noise));
  meta.emplace_back("corpus.p_on_indicative", fmt_double(cfg.corpus.p_on_indicative));
  meta.emplace_back("corpus.p_on_background", fmt_double(cfg.corpus.p_on_background));
  meta.emplace_back("corpus.doc_count", std::to_string(cfg.corpus.doc_count));
  meta.emplace_back("corpus.seed", std::to_string(cfg.corpus.seed));
  meta.emplace_back("train.l2_text", fmt_double(cfg.train.l2_text));
  meta.emplace_back("train.l2_confounder", fmt_double(cfg.train.l2_confounder));
  meta.emplace_back("train.max_iters", std::to_string(cfg.train.max_iters));
  meta.emplace_back("train.tol", fmt_double(cfg.train.tol));
  meta.emplace_back("train.seed", std::to_string(cfg.train.seed));
  std::ostringstream grid;
  for (std::size_t i = 0; i < cfg.bias_grid.size(); ++i) {
    if (i) grid << ";";
    grid << fmt_double(cfg.bias_grid[i].first) << ":" << fmt_double(cfg.bias_grid[i].second);
  }
  meta.emplace_back("bias_grid", grid.str());
  std::ostringstream noise;
  for (std::size_t i = 0; i < cfg.noise_grid.size(); ++i) {
    if (i) noise << ";";
    noise << fmt_double(cfg.noise_grid[i]);
  }
  meta.emplace_back("noise_grid", noise.str());
  meta.emplace_back("epsilon", fmt_double(cfg.epsilon));
  std::ostringstream methods;
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    if (i) methods << ";";
    methods << method_name(cfg.methods[i]);
  }
  meta.emplace_back("methods", methods.str());
  std::ostringstream seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) seeds << ";";
    seeds << cfg.seeds[i];
  }
  meta.emplace_back("seeds", seeds.str());
  meta.emplace_back("n_train", std::to_string(cfg.n_train));
  meta.emplace_back("n_test", std::to_string(cfg.n_test));
  meta.emplace_back("n_dz", std::to_string(cfg.n_dz));
  meta.emplace_back("cv_folds", std::to_string(cfg.cv_folds));
  meta.emplace_back("flip_order",
                    cfg.flip_order == FlipOrder::ascending_confidence ? "ascending"
                                                                      : "descending");
  return meta;
}

void write_metadata(std::ofstream& out, const SweepResult& result, const ExperimentConfig& cfg) {
  for (const auto& [k, v] : config_metadata(result, cfg)) out << "# " << k << "=" << v << "\n";
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

}  // namespace

void emit_csv(const SweepResult& result, const ExperimentConfig& config,
              const std::string& path) {
  std::ofstream out = open_output(path);
  write_metadata(out, result, config);
  out << "method,seed,noise,b_train,b_test,delta_yz,f1_z,f1_z_cv,f1_y,f1_y_macro,"
         "r_true,r_observed,r_hat,r_matched,flips,retained_fraction,degenerate\n";
  for (const SweepRow& r : result.rows) {
    out << method_name(r.method) << "," << r.seed << "," << fmt_double(r.noise) << ","
        << fmt_double(r.b_train) << "," << fmt_double(r.b_test) << "," << fmt_double(r.delta_yz)
        << "," << fmt_double(r.f1_z) << "," << fmt_double(r.f1_z_cv) << "," << fmt_double(r.f1_y)
        << "," << fmt_double(r.f1_y_macro) << "," << fmt_double(r.r_true) << ","
        << fmt_double(r.r_observed) << "," << fmt_double(r.r_hat) << ","
        << fmt_double(r.r_matched) << "," << r.flips << "," << fmt_double(r.retained_fraction)
        << "," << (r.degenerate ? 1 : 0) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

SweepResult read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  SweepResult result;
  const std::string header =
      "method,seed,noise,b_train,b_test,delta_yz,f1_z,f1_z_cv,f1_y,f1_y_macro,"
      "r_true,r_observed,r_hat,r_matched,flips,retained_fraction,degenerate";
  bool header_seen = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      if (line.rfind("# mode=", 0) == 0) result.mode = line.substr(7);
      continue;
    }
    if (!header_seen) {
      if (line != header) throw IoError("unexpected column header in " + path);
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 17) throw IoError("malformed row in " + path + ": " + line);
    SweepRow r;
    r.method = method_from_name(fields[0]);
    r.seed = static_cast<std::uint64_t>(parse_int(fields[1], path));
    r.noise = parse_double(fields[2], path);
    r.b_train = parse_double(fields[3], path);
    r.b_test = parse_double(fields[4], path);
    r.delta_yz = parse_double(fields[5], path);
    r.f1_z = parse_double(fields[6], path);
    r.f1_z_cv = parse_double(fields[7], path);
    r.f1_y = parse_double(fields[8], path);
    r.f1_y_macro = parse_double(fields[9], path);
    r.r_true = parse_double(fields[10], path);
    r.r_observed = parse_double(fields[11], path);
    r.r_hat = parse_double(fields[12], path);
    r.r_matched = parse_double(fields[13], path);
    r.flips = static_cast<int>(parse_int(fields[14], path));
    r.retained_fraction = parse_double(fields[15], path);
    r.degenerate = parse_int(fields[16], path) != 0;
    result.rows.push_back(r);
  }
  if (!header_seen) throw IoError("no column header found in " + path);
  summarize(result);
  return result;
}

void emit_plotdata(const SweepResult& result, const ExperimentConfig& config,
                   const std::string& prefix) {
  {
    std::ofstream out = open_output(prefix + ".delta.csv");
    write_metadata(out, result, config);
    out << "method,noise,delta_yz,f1_y_mean,f1_y_stddev,cells\n";
    for (const DeltaSummary& s : result.per_delta) {
      out << method_name(s.method) << "," << fmt_double(s.noise) << "," << fmt_double(s.delta_yz)
          << "," << fmt_double(s.f1_y_mean) << "," << fmt_double(s.f1_y_stddev) << "," << s.cells
          << "\n";
    }
    if (!out) throw IoError("write failed: " + prefix + ".delta.csv");
  }
  {
    std::ofstream out = open_output(prefix + ".robustness.csv");
    write_metadata(out, result, config);
    out << "method,noise,f1_z_mean,f1_y_mean,f1_y_stddev_per_seed,f1_y_stddev_of_means\n";
    for (const RobustnessSummary& s : result.robustness) {
      out << method_name(s.method) << "," << fmt_double(s.noise) << ","
          << fmt_double(s.f1_z_mean) << "," << fmt_double(s.f1_y_mean) << ","
          << fmt_double(s.stddev_mean_per_seed) << "," << fmt_double(s.stddev_of_seed_means)
          << "\n";
    }
    if (!out) throw IoError("write failed: " + prefix + ".robustness.csv");
  }
  {
    std::ofstream out = open_output(prefix + ".recovery.csv");
    write_metadata(out, result, config);
    out << "seed,noise,b_train,b_test,r_true,r_observed,r_hat,r_matched\n";
    for (const SweepRow& r : result.rows) {
      if (r.method != Method::ba_corrmatch) continue;
      out << r.seed << "," << fmt_double(r.noise) << "," << fmt_double(r.b_train) << ","
          << fmt_double(r.b_test) << "," << fmt_double(r.r_true) << ","
          << fmt_double(r.r_observed) << "," << fmt_double(r.r_hat) << ","
          << fmt_double(r.r_matched) << "\n";
    }
    if (!out) throw IoError("write failed: " + prefix + ".recovery.csv");
  }
}

}  // namespace confound
