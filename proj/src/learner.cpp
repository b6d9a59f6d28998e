#include "confound/learner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "confound/format.hpp"
#include "confound/metrics.hpp"
#include "confound/rng.hpp"

namespace confound {

void TrainConfig::validate() const {
  if (l2_text < 0.0) throw ConfigError("l2_text must be >= 0");
  if (l2_confounder < 0.0) throw ConfigError("l2_confounder must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
}

namespace {

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) - y*s, computed without overflow.
double nll_term(double s, int y) {
  const double softplus = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  return softplus - (y != 0 ? s : 0.0);
}

double score(const LogRegModel& model, const Instance& inst) {
  double s = model.intercept;
  for (int j : inst.features) s += model.weights[j];
  return s;
}

void check_dims(const LogRegModel& model, const Dataset& data) {
  if (data.vocab_size != model.dim()) {
    throw std::out_of_range("model dimension " + std::to_string(model.dim()) +
                            " does not match dataset vocabulary " +
                            std::to_string(data.vocab_size));
  }
}

void add_regularization(const LogRegModel& model, LossGrad& lg) {
  const int d = model.dim();
  const int cs = model.confounder_start >= 0 ? model.confounder_start : d;
  double reg = 0.0;
  for (int j = 0; j < d; ++j) {
    const double l2 = j < cs ? model.l2_text : model.l2_confounder;
    reg += 0.5 * l2 * model.weights[j] * model.weights[j];
    lg.grad[j] += l2 * model.weights[j];
  }
  lg.loss += reg;  // intercept is unregularized
}

// Fixed block decomposition: a pure function of n, so the combine order (and
// therefore the floating-point result) does not depend on the thread count.
int block_count(std::size_t n) {
  return static_cast<int>(std::min<std::size_t>(64, std::max<std::size_t>(1, n / 64)));
}

}  // namespace

LossGrad loss_and_gradient_serial(const LogRegModel& model, const Dataset& data,
                                  std::span<const int> labels) {
  check_dims(model, data);
  const int d = model.dim();
  LossGrad lg;
  lg.grad.assign(d + 1, 0.0);
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const Instance& inst = data.instances[i];
    const double s = score(model, inst);
    lg.loss += nll_term(s, labels[i]);
    const double coef = sigmoid(s) - (labels[i] != 0 ? 1.0 : 0.0);
    for (int j : inst.features) lg.grad[j] += coef;
    lg.grad[d] += coef;
  }
  add_regularization(model, lg);
  return lg;
}

LossGrad loss_and_gradient(const LogRegModel& model, const Dataset& data,
                           std::span<const int> labels) {
  check_dims(model, data);
  const std::size_t n = data.instances.size();
  const int d = model.dim();
  const int nblocks = block_count(n);
  if (nblocks == 1) return loss_and_gradient_serial(model, data, labels);

  std::vector<double> block_grads(static_cast<std::size_t>(nblocks) * (d + 1), 0.0);
  std::vector<double> block_loss(nblocks, 0.0);

#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < nblocks; ++blk) {
    const std::size_t begin = n * blk / nblocks;
    const std::size_t end = n * (blk + 1) / nblocks;
    double* grad = block_grads.data() + static_cast<std::size_t>(blk) * (d + 1);
    double loss = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const Instance& inst = data.instances[i];
      const double s = score(model, inst);
      loss += nll_term(s, labels[i]);
      const double coef = sigmoid(s) - (labels[i] != 0 ? 1.0 : 0.0);
      for (int j : inst.features) grad[j] += coef;
      grad[d] += coef;
    }
    block_loss[blk] = loss;
  }

  LossGrad lg;
  lg.grad.assign(d + 1, 0.0);
  for (int blk = 0; blk < nblocks; ++blk) {
    lg.loss += block_loss[blk];
    const double* grad = block_grads.data() + static_cast<std::size_t>(blk) * (d + 1);
    for (int j = 0; j <= d; ++j) lg.grad[j] += grad[j];
  }
  add_regularization(model, lg);
  return lg;
}

namespace {

std::vector<int> target_labels(const Dataset& data, Target target) {
  return target == Target::label_y ? data.y_vector() : data.z_true_vector();
}

struct LbfgsPair {
  std::vector<double> s;
  std::vector<double> y;
  double rho = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
  return r;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

LogRegModel fit_labels(const Dataset& data, std::span<const int> labels,
                       const TrainConfig& config, int confounder_start) {
  config.validate();
  if (data.instances.empty()) throw DataError("cannot fit on an empty dataset");
  if (labels.size() != data.instances.size()) {
    throw std::invalid_argument("label count does not match dataset size");
  }
  const bool has0 = std::any_of(labels.begin(), labels.end(), [](int v) { return v == 0; });
  const bool has1 = std::any_of(labels.begin(), labels.end(), [](int v) { return v != 0; });
  if (!has0 || !has1) throw DataError("training data contains a single class");

  LogRegModel model;
  model.weights.assign(data.vocab_size, 0.0);
  model.intercept = 0.0;
  model.l2_text = config.l2_text;
  model.l2_confounder = config.l2_confounder;
  model.confounder_start = confounder_start;

  const int dim = model.dim() + 1;  // weights plus intercept
  auto get_x = [&](std::vector<double>& x) {
    std::copy(model.weights.begin(), model.weights.end(), x.begin());
    x[dim - 1] = model.intercept;
  };
  auto set_x = [&](const std::vector<double>& x) {
    std::copy(x.begin(), x.begin() + (dim - 1), model.weights.begin());
    model.intercept = x[dim - 1];
  };

  LossGrad cur = loss_and_gradient(model, data, labels);
  std::vector<double> x(dim), x_new(dim), direction(dim), alpha_buf;
  get_x(x);

  // L-BFGS with Armijo backtracking. Zero initialization and a fixed
  // evaluation order make the whole trajectory deterministic.
  constexpr int kHistory = 8;
  constexpr double kArmijo = 1e-4;
  std::deque<LbfgsPair> history;
  const double grad_tol = 10.0 * config.tol;

  model.converged = inf_norm(cur.grad) <= grad_tol;
  int iter = 0;
  int stall = 0;  // consecutive iterations with relative change <= tol
  while (!model.converged && iter < config.max_iters) {
    ++iter;
    // Two-loop recursion for direction = -H * grad.
    direction = cur.grad;
    alpha_buf.assign(history.size(), 0.0);
    for (int h = static_cast<int>(history.size()) - 1; h >= 0; --h) {
      const LbfgsPair& p = history[h];
      alpha_buf[h] = p.rho * dot(p.s, direction);
      for (int j = 0; j < dim; ++j) direction[j] -= alpha_buf[h] * p.y[j];
    }
    if (!history.empty()) {
      const LbfgsPair& last = history.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : direction) v *= gamma;
    }
    for (std::size_t h = 0; h < history.size(); ++h) {
      const LbfgsPair& p = history[h];
      const double beta = p.rho * dot(p.y, direction);
      for (int j = 0; j < dim; ++j) direction[j] += (alpha_buf[h] - beta) * p.s[j];
    }
    for (double& v : direction) v = -v;

    double slope = dot(cur.grad, direction);
    if (slope >= 0.0) {  // curvature went bad; fall back to steepest descent
      history.clear();
      for (int j = 0; j < dim; ++j) direction[j] = -cur.grad[j];
      slope = dot(cur.grad, direction);
    }

    double step = 1.0;
    LossGrad next;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (int j = 0; j < dim; ++j) x_new[j] = x[j] + step * direction[j];
      set_x(x_new);
      next = loss_and_gradient(model, data, labels);
      if (next.loss <= cur.loss + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {  // no progress possible at machine precision
      set_x(x);
      model.converged = stall > 0;
      break;
    }

    LbfgsPair pair;
    pair.s.resize(dim);
    pair.y.resize(dim);
    for (int j = 0; j < dim; ++j) {
      pair.s[j] = x_new[j] - x[j];
      pair.y[j] = next.grad[j] - cur.grad[j];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > 1e-12) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > kHistory) history.pop_front();
    }

    const double rel_change = std::abs(cur.loss - next.loss) / std::max(1.0, std::abs(cur.loss));
    x.swap(x_new);
    cur = std::move(next);
    stall = rel_change <= config.tol ? stall + 1 : 0;
    if (stall > 0 && inf_norm(cur.grad) <= grad_tol) {
      model.converged = true;
    } else if (rel_change == 0.0 || stall >= 30) {
      // The loss is flat at double precision (or has been below tol for many
      // iterations) while the gradient floor stays above grad_tol. Nothing
      // further is attainable, so this is the converged state.
      model.converged = true;
    }
  }
  set_x(x);
  model.iterations = iter;
  return model;
}

LogRegModel fit(const Dataset& data, Target target, const TrainConfig& config,
                int confounder_start) {
  const std::vector<int> labels = target_labels(data, target);
  return fit_labels(data, labels, config, confounder_start);
}

LossGrad loss_and_gradient(const LogRegModel& model, const Dataset& data, Target target) {
  const std::vector<int> labels = target_labels(data, target);
  return loss_and_gradient(model, data, labels);
}

double predict_posterior(const LogRegModel& model, std::span<const int> features) {
  double s = model.intercept;
  for (int j : features) {
    if (j < 0 || j >= model.dim()) {
      throw std::out_of_range("feature index " + std::to_string(j) +
                              " out of bounds for dimension " + std::to_string(model.dim()));
    }
    s += model.weights[j];
  }
  return sigmoid(s);
}

CrossvalResult crossval_z_errors(const Dataset& data_z, std::span<const int> z_labels, int k,
                                 const TrainConfig& config) {
  if (k < 2) throw ConfigError("fold count must be >= 2");
  const std::size_t n = data_z.instances.size();
  if (z_labels.size() != n) throw std::invalid_argument("label count does not match dataset size");

  // Stratified assignment: shuffle within each class, deal round-robin.
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[z_labels[i] != 0 ? 1 : 0].push_back(i);
  if (by_class[0].size() < static_cast<std::size_t>(k) ||
      by_class[1].size() < static_cast<std::size_t>(k)) {
    throw DataError("stratification error: a fold would contain a single class");
  }
  std::mt19937_64 rng(mix_seed(config.seed, 0x63766f6cULL));  // "cvol"
  std::vector<int> fold_of(n, 0);
  for (int c = 0; c < 2; ++c) {
    fisher_yates_shuffle(by_class[c], rng);
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      fold_of[by_class[c][i]] = static_cast<int>(i % k);
    }
  }

  CrossvalResult result;
  result.errors.assign(n, 0);
  result.z_pred.assign(n, 0);
  result.posteriors.assign(n, 0.0);
  std::vector<std::string> fold_errors(k);

#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < k; ++f) {
    try {
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t i = 0; i < n; ++i) {
        (fold_of[i] == f ? test_idx : train_idx).push_back(i);
      }
      Dataset train = data_z.subset(train_idx);
      std::vector<int> train_labels(train_idx.size());
      for (std::size_t i = 0; i < train_idx.size(); ++i) train_labels[i] = z_labels[train_idx[i]];
      const LogRegModel model = fit_labels(train, train_labels, config);
      for (std::size_t i : test_idx) {
        const double p1 = predict_posterior(model, data_z.instances[i].features);
        const int pred = p1 >= 0.5 ? 1 : 0;
        result.z_pred[i] = pred;
        result.posteriors[i] = pred == 1 ? p1 : 1.0 - p1;
        result.errors[i] = pred == (z_labels[i] != 0 ? 1 : 0) ? 0 : 1;
      }
    } catch (const std::exception& e) {
      fold_errors[f] = e.what();
    }
  }
  for (const auto& msg : fold_errors) {
    if (!msg.empty()) throw DataError("cross-validation fold failed: " + msg);
  }

  std::vector<int> truth(z_labels.begin(), z_labels.end());
  result.f1_z = f1_scores(result.z_pred, truth).f1_pos;
  return result;
}

CrossvalResult crossval_z_errors(const Dataset& data_z, int k, const TrainConfig& config) {
  const std::vector<int> labels = data_z.z_true_vector();
  return crossval_z_errors(data_z, labels, k, config);
}

void write_model(const LogRegModel& model, std::ostream& out) {
  out << "confound_model 1\n";
  out << "kind logreg\n";
  out << "dim " << model.dim() << "\n";
  out << "confounder_start " << model.confounder_start << "\n";
  out << "l2_text " << fmt_double(model.l2_text) << "\n";
  out << "l2_confounder " << fmt_double(model.l2_confounder) << "\n";
  out << "intercept " << fmt_double(model.intercept) << "\n";
  out << "converged " << (model.converged ? 1 : 0) << "\n";
  out << "iterations " << model.iterations << "\n";
  out << "weights " << model.dim() << "\n";
  for (double w : model.weights) out << fmt_double(w) << "\n";
}

namespace {

std::string expect_key(std::istream& in, const std::string& key, const std::string& context) {
  std::string k, v;
  if (!(in >> k >> v) || k != key) throw IoError("expected '" + key + "' in " + context);
  return v;
}

}  // namespace

LogRegModel read_model(std::istream& in, const std::string& context) {
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "confound_model" || version != "1") {
    throw IoError("not a confound_model v1 file: " + context);
  }
  const std::string kind = expect_key(in, "kind", context);
  if (kind != "logreg") throw IoError("unexpected model kind '" + kind + "' in " + context);
  LogRegModel model;
  const int dim = static_cast<int>(parse_int(expect_key(in, "dim", context), context));
  model.confounder_start =
      static_cast<int>(parse_int(expect_key(in, "confounder_start", context), context));
  model.l2_text = parse_double(expect_key(in, "l2_text", context), context);
  model.l2_confounder = parse_double(expect_key(in, "l2_confounder", context), context);
  model.intercept = parse_double(expect_key(in, "intercept", context), context);
  model.converged = parse_int(expect_key(in, "converged", context), context) != 0;
  model.iterations = static_cast<int>(parse_int(expect_key(in, "iterations", context), context));
  const int count = static_cast<int>(parse_int(expect_key(in, "weights", context), context));
  if (count != dim) throw IoError("weight count does not match dim in " + context);
  model.weights.resize(dim);
  std::string tok;
  for (int j = 0; j < dim; ++j) {
    if (!(in >> tok)) throw IoError("truncated weight list in " + context);
    model.weights[j] = parse_double(tok, context);
  }
  return model;
}

void save_model(const LogRegModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_model(model, out);
  if (!out) throw IoError("write failed: " + path);
}

LogRegModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return read_model(in, path);
}

}  // namespace confound
