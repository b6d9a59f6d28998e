#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "confound/corpus.hpp"
#include "confound/learner.hpp"
#include "confound/metrics.hpp"
#include "confound/rng.hpp"

using namespace confound;

namespace {

Dataset toy_separable(int n_per_class) {
  // Class 1 fires feature 0, class 0 fires feature 1.
  Dataset d;
  d.vocab_size = 2;
  for (int i = 0; i < n_per_class; ++i) {
    Instance a;
    a.features = {0};
    a.y = 1;
    d.instances.push_back(a);
    Instance b;
    b.features = {1};
    b.y = 0;
    d.instances.push_back(b);
  }
  return d;
}

// Random sparse instances with both label classes guaranteed.
Dataset random_dataset(std::mt19937_64& rng, int n, int vocab) {
  Dataset d;
  d.vocab_size = vocab;
  for (int i = 0; i < n; ++i) {
    Instance inst;
    for (int t = 0; t < vocab; ++t) {
      if ((rng() & 1023) < 410) inst.features.push_back(t);
    }
    inst.y = i < 2 ? i : static_cast<int>(rng() & 1);
    inst.z_true = static_cast<int>(rng() & 1);
    d.instances.push_back(inst);
  }
  return d;
}

double loss_at(const LogRegModel& base, const std::vector<double>& weights, double intercept,
               const Dataset& data, const std::vector<int>& labels) {
  LogRegModel m = base;
  m.weights = weights;
  m.intercept = intercept;
  return loss_and_gradient(m, data, labels).loss;
}

// Central finite differences over all coordinates (weights, then intercept).
std::vector<double> finite_diff_gradient(const LogRegModel& model, const Dataset& data,
                                         const std::vector<int>& labels, double h) {
  std::vector<double> fd(model.dim() + 1, 0.0);
  for (int j = 0; j <= model.dim(); ++j) {
    std::vector<double> w = model.weights;
    double b = model.intercept;
    if (j < model.dim()) {
      w[j] += h;
    } else {
      b += h;
    }
    const double up = loss_at(model, w, b, data, labels);
    w = model.weights;
    b = model.intercept;
    if (j < model.dim()) {
      w[j] -= h;
    } else {
      b -= h;
    }
    const double down = loss_at(model, w, b, data, labels);
    fd[j] = (up - down) / (2.0 * h);
  }
  return fd;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("separable toy set trains to accuracy 1") {
  const Dataset d = toy_separable(5);
  const LogRegModel model = fit(d, Target::label_y, TrainConfig{});
  std::vector<int> preds;
  for (const Instance& inst : d.instances) {
    preds.push_back(predict_posterior(model, inst.features) >= 0.5 ? 1 : 0);
  }
  CHECK(f1_scores(preds, d.y_vector()).accuracy == doctest::Approx(1.0));
}

TEST_CASE("all-zero features with balanced labels give a symmetric model") {
  Dataset d;
  d.vocab_size = 3;
  for (int i = 0; i < 10; ++i) {
    Instance inst;
    inst.y = i % 2;
    d.instances.push_back(inst);
  }
  const LogRegModel model = fit(d, Target::label_y, TrainConfig{});
  CHECK(std::abs(model.intercept) < 1e-9);
  const std::vector<int> probe = {1};
  CHECK(predict_posterior(model, probe) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("returned weights satisfy the gradient tolerance") {
  std::mt19937_64 rng(2024);
  const Dataset d = random_dataset(rng, 20, 8);
  TrainConfig cfg;
  const LogRegModel model = fit(d, Target::label_y, cfg);
  CHECK(model.converged);
  const LossGrad lg = loss_and_gradient(model, d, Target::label_y);
  CHECK(inf_norm(lg.grad) <= 10.0 * cfg.tol);
}

TEST_CASE("single-class data is rejected") {
  Dataset d;
  d.vocab_size = 2;
  for (int i = 0; i < 5; ++i) {
    Instance inst;
    inst.features = {0};
    inst.y = 1;
    d.instances.push_back(inst);
  }
  CHECK_THROWS_AS(fit(d, Target::label_y, TrainConfig{}), DataError);
}

TEST_CASE("non-convergence sets the flag instead of failing") {
  std::mt19937_64 rng(5);
  const Dataset d = random_dataset(rng, 50, 10);
  TrainConfig cfg;
  cfg.max_iters = 1;
  const LogRegModel model = fit(d, Target::label_y, cfg);
  CHECK_FALSE(model.converged);
  CHECK(model.iterations == 1);
}

TEST_CASE("posterior of the zero model is one half") {
  LogRegModel model;
  model.weights = {0.0, 0.0};
  const std::vector<int> x = {0, 1};
  CHECK(predict_posterior(model, x) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("posterior matches the sigmoid at a pinned score") {
  LogRegModel model;
  model.weights = {0.8473};
  const std::vector<int> x = {0};
  // sigma(0.8473), high-precision reference value.
  CHECK(predict_posterior(model, x) == doctest::Approx(0.70000044931849).epsilon(1e-9));
  CHECK(predict_posterior(model, x) == doctest::Approx(0.7).epsilon(1e-4));
}

TEST_CASE("raising an active weight strictly raises the posterior") {
  LogRegModel model;
  model.weights = {0.3, -0.2};
  model.intercept = 0.1;
  const std::vector<int> x = {0, 1};
  const double before = predict_posterior(model, x);
  model.weights[0] += 0.05;
  CHECK(predict_posterior(model, x) > before);
}

TEST_CASE("out-of-range feature index raises a dimension error") {
  LogRegModel model;
  model.weights = {0.0, 0.0};
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(predict_posterior(model, bad), std::out_of_range);
}

TEST_CASE("loss at zero weights on balanced data is n ln 2") {
  std::mt19937_64 rng(8);
  Dataset d = random_dataset(rng, 40, 6);
  for (std::size_t i = 0; i < d.instances.size(); ++i) d.instances[i].y = i % 2;
  LogRegModel zero;
  zero.weights.assign(6, 0.0);
  const LossGrad lg = loss_and_gradient(zero, d, Target::label_y);
  CHECK(lg.loss == doctest::Approx(40.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset d = random_dataset(rng, 10, 8);
    LogRegModel model;
    model.weights.resize(8);
    for (double& w : model.weights) w = (uniform01(rng) - 0.5) * 2.0;
    model.intercept = (uniform01(rng) - 0.5) * 2.0;
    model.l2_text = 0.7;
    model.l2_confounder = 2.0;
    model.confounder_start = trial % 2 == 0 ? 6 : -1;
    const std::vector<int> labels = d.y_vector();
    const LossGrad lg = loss_and_gradient(model, d, labels);
    const std::vector<double> fd = finite_diff_gradient(model, d, labels, 1e-6);
    double worst = 0.0;
    for (std::size_t j = 0; j < fd.size(); ++j) {
      worst = std::max(worst, std::abs(fd[j] - lg.grad[j]));
    }
    CHECK(worst / std::max(1.0, inf_norm(lg.grad)) <= 1e-5);
  }
}

TEST_CASE("doubling l2_text doubles the regularization term exactly") {
  std::mt19937_64 rng(123);
  const Dataset d = random_dataset(rng, 15, 5);
  LogRegModel model;
  model.weights = {0.4, -0.3, 0.2, 0.9, -0.6};
  model.intercept = 0.25;
  const std::vector<int> labels = d.y_vector();
  auto loss_with_l2 = [&](double l2) {
    LogRegModel m = model;
    m.l2_text = l2;
    m.l2_confounder = l2;
    return loss_and_gradient(m, d, labels).loss;
  };
  const double data_term = loss_with_l2(0.0);
  const double reg1 = loss_with_l2(1.0) - data_term;
  const double reg2 = loss_with_l2(2.0) - data_term;
  CHECK(reg2 == doctest::Approx(2.0 * reg1).epsilon(1e-12));
}

TEST_CASE("blocked kernel agrees with the serial reference") {
  std::mt19937_64 rng(777);
  const Dataset d = random_dataset(rng, 500, 12);
  LogRegModel model;
  model.weights.resize(12);
  for (double& w : model.weights) w = (uniform01(rng) - 0.5);
  model.intercept = 0.1;
  const std::vector<int> labels = d.y_vector();
  const LossGrad par = loss_and_gradient(model, d, labels);
  const LossGrad ser = loss_and_gradient_serial(model, d, labels);
  CHECK(par.loss == doctest::Approx(ser.loss).epsilon(1e-12));
  for (std::size_t j = 0; j < par.grad.size(); ++j) {
    CHECK(par.grad[j] == doctest::Approx(ser.grad[j]).epsilon(1e-10));
  }
  // Repeat evaluation is bit-identical.
  const LossGrad again = loss_and_gradient(model, d, labels);
  CHECK(again.loss == par.loss);
  CHECK(again.grad == par.grad);
}

TEST_CASE("training is deterministic bit-for-bit") {
  CorpusConfig cc;
  cc.doc_count = 400;
  cc.seed = 31;
  const Dataset pool = generate_pool(cc);
  const LogRegModel a = fit(pool, Target::label_y, TrainConfig{});
  const LogRegModel b = fit(pool, Target::label_y, TrainConfig{});
  CHECK(a.weights == b.weights);
  CHECK(a.intercept == b.intercept);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("final loss never exceeds the zero-weight loss") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    const Dataset d = random_dataset(rng, 60, 10);
    const std::vector<int> labels = d.y_vector();
    const LogRegModel model = fit_labels(d, labels, TrainConfig{});
    LogRegModel zero = model;
    zero.weights.assign(model.weights.size(), 0.0);
    zero.intercept = 0.0;
    const double fitted = loss_and_gradient(model, d, labels).loss;
    const double at_zero = loss_and_gradient(zero, d, labels).loss;
    CHECK(fitted <= at_zero + 1e-9);
  }
}

TEST_CASE("cross-validation on separable z is perfect") {
  CorpusConfig cc;
  cc.p_on_indicative = 1.0;
  cc.p_on_background = 0.0;
  cc.doc_count = 200;
  const Dataset pool = generate_pool(cc);
  const CrossvalResult cv = crossval_z_errors(pool, 5, TrainConfig{});
  CHECK(cv.f1_z == doctest::Approx(1.0));
  for (int e : cv.errors) CHECK(e == 0);
  for (double p : cv.posteriors) {
    CHECK(p >= 0.5);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("cross-validation error vector matches out-of-fold accuracy") {
  CorpusConfig cc;
  cc.doc_count = 600;
  cc.seed = 77;
  const Dataset pool = generate_pool(cc);
  const CrossvalResult cv = crossval_z_errors(pool, 5, TrainConfig{});
  REQUIRE(cv.errors.size() == pool.instances.size());
  const std::vector<int> truth = pool.z_true_vector();
  std::size_t correct = 0;
  double mean_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (cv.z_pred[i] == truth[i]) ++correct;
    mean_err += cv.errors[i];
    CHECK(cv.errors[i] == std::abs(truth[i] - cv.z_pred[i]));
  }
  mean_err /= static_cast<double>(truth.size());
  const double oof_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  CHECK(mean_err == doctest::Approx(1.0 - oof_accuracy).epsilon(1e-12));
}

TEST_CASE("cross-validation at chance when z labels are randomized") {
  CorpusConfig cc;
  cc.doc_count = 2000;
  cc.seed = 13;
  const Dataset pool = generate_pool(cc);
  std::vector<double> f1s;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::vector<int> random_z = inject_noise(pool.z_true_vector(), 0.5, 1000 + s);
    TrainConfig cfg;
    cfg.seed = s;
    const CrossvalResult cv = crossval_z_errors(pool, random_z, 5, cfg);
    f1s.push_back(cv.f1_z);
  }
  CHECK(mean(f1s) == doctest::Approx(0.5).epsilon(0.1));  // |mean - 0.5| <= 0.05
}

TEST_CASE("stratification fails when a class cannot reach every fold") {
  Dataset d;
  d.vocab_size = 2;
  for (int i = 0; i < 20; ++i) {
    Instance inst;
    inst.features = {i % 2};
    inst.z_true = i < 3 ? 1 : 0;  // only three positives
    d.instances.push_back(inst);
  }
  CHECK_THROWS_AS(crossval_z_errors(d, 5, TrainConfig{}), DataError);
  CHECK_THROWS_AS(crossval_z_errors(d, 1, TrainConfig{}), ConfigError);
}

TEST_CASE("cross-validation is deterministic given the seed") {
  CorpusConfig cc;
  cc.doc_count = 300;
  const Dataset pool = generate_pool(cc);
  TrainConfig cfg;
  cfg.seed = 9;
  const CrossvalResult a = crossval_z_errors(pool, 5, cfg);
  const CrossvalResult b = crossval_z_errors(pool, 5, cfg);
  CHECK(a.errors == b.errors);
  CHECK(a.z_pred == b.z_pred);
  CHECK(a.posteriors == b.posteriors);
  CHECK(a.f1_z == b.f1_z);
}

TEST_CASE("model serialization round-trips losslessly") {
  std::mt19937_64 rng(3);
  const Dataset d = random_dataset(rng, 30, 7);
  TrainConfig cfg;
  cfg.l2_text = 0.5;
  cfg.l2_confounder = 1.5;
  const LogRegModel model = fit(d, Target::label_y, cfg, /*confounder_start=*/5);
  const std::string path =
      (std::filesystem::temp_directory_path() / "confound_model_roundtrip.txt").string();
  save_model(model, path);
  const LogRegModel back = load_model(path);
  CHECK(back.weights == model.weights);
  CHECK(back.intercept == model.intercept);
  CHECK(back.l2_text == model.l2_text);
  CHECK(back.l2_confounder == model.l2_confounder);
  CHECK(back.confounder_start == model.confounder_start);
  CHECK(back.converged == model.converged);
  CHECK(back.iterations == model.iterations);
  std::filesystem::remove(path);
}

TEST_CASE("loading a non-model file fails with context") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "confound_not_a_model.txt").string();
  {
    std::ofstream out(path);
    out << "something else\n";
  }
  CHECK_THROWS_AS(load_model(path), IoError);
  std::filesystem::remove(path);
}
