#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "confound/backdoor.hpp"
#include "confound/corpus.hpp"
#include "confound/errors.hpp"
#include "confound/metrics.hpp"
#include "confound/rng.hpp"

using namespace confound;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// n instances with y == z_true alternating and features pure noise, so the
// only real signal available to a z-aware fit is the indicator pair.
Dataset noise_dataset(int n, int vocab, std::uint64_t seed) {
  Dataset data;
  data.vocab_size = vocab;
  std::mt19937_64 rng(seed);
  data.instances.resize(n);
  for (int i = 0; i < n; ++i) {
    Instance& inst = data.instances[i];
    inst.y = i % 2;
    inst.z_true = inst.y;
    for (int j = 0; j < vocab; ++j) {
      if (uniform01(rng) < 0.3) inst.features.push_back(j);
    }
  }
  return data;
}

// Hand-built model over V text slots: only the two indicator weights and the
// intercept are set, so conditional posteriors are sigma(b + w_z).
BackdoorModel manual_model(int V, double w_z0, double w_z1, double intercept, double p_z) {
  BackdoorModel m;
  m.vocab_size = V;
  m.p_z = p_z;
  m.base.weights.assign(V + 2, 0.0);
  m.base.weights[V] = w_z0;
  m.base.weights[V + 1] = w_z1;
  m.base.intercept = intercept;
  m.base.confounder_start = V;
  return m;
}

double max_abs_indicator(const BackdoorModel& m) {
  const int V = m.vocab_size;
  return std::max(std::abs(m.base.weights[V]), std::abs(m.base.weights[V + 1]));
}

double mean_abs_weight(std::span<const double> w, int begin, int end) {
  double s = 0.0;
  for (int j = begin; j < end; ++j) s += std::abs(w[j]);
  return s / (end - begin);
}

}  // namespace

TEST_CASE("augment appends the matching indicator") {
  const std::vector<int> empty;
  CHECK(augment(empty, 1, 10) == std::vector<int>{11});
  const std::vector<int> two{3, 7};
  CHECK(augment(two, 0, 10) == std::vector<int>{3, 7, 10});
  CHECK(two == std::vector<int>{3, 7});  // input untouched
}

TEST_CASE("augment(x,0) and augment(x,1) differ in exactly one index") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int V = 4 + static_cast<int>(uniform_below(rng, 40));
    std::vector<int> x;
    for (int j = 0; j < V; ++j) {
      if (uniform01(rng) < 0.25) x.push_back(j);
    }
    const std::vector<int> a0 = augment(x, 0, V);
    const std::vector<int> a1 = augment(x, 1, V);
    REQUIRE(a0.size() == a1.size());
    int diffs = 0;
    for (std::size_t k = 0; k < a0.size(); ++k) {
      if (a0[k] != a1[k]) ++diffs;
    }
    CHECK(diffs == 1);
    CHECK(a0.back() == V);
    CHECK(a1.back() == V + 1);
  }
}

TEST_CASE("augment rejects bad z values and out-of-range features") {
  const std::vector<int> x{2};
  CHECK_THROWS_AS(augment(x, 2, 10), std::invalid_argument);
  CHECK_THROWS_AS(augment(x, -1, 10), std::invalid_argument);
  const std::vector<int> oob{10};
  CHECK_THROWS_AS(augment(oob, 0, 10), std::out_of_range);
  const std::vector<int> neg{-1};
  CHECK_THROWS_AS(augment(neg, 0, 10), std::out_of_range);
}

TEST_CASE("p_z equals the training frequency of z=1 exactly") {
  Dataset data = noise_dataset(8, 6, 11);
  const std::vector<int> z{1, 0, 0, 1, 0, 1, 0, 0};
  TrainConfig cfg;
  cfg.max_iters = 5;
  const BackdoorModel m = fit_backdoor(data, z, cfg);
  CHECK(m.p_z == 3.0 / 8.0);
  CHECK(m.vocab_size == 6);
  CHECK(m.base.dim() == 8);
  CHECK(m.base.confounder_start == 6);
}

TEST_CASE("fit_backdoor rejects a z column of the wrong length") {
  Dataset data = noise_dataset(8, 6, 11);
  const std::vector<int> z{1, 0, 0};
  CHECK_THROWS_AS(fit_backdoor(data, z, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("indicator weights dominate when y equals z and text is noise") {
  Dataset data = noise_dataset(500, 30, 3);
  TrainConfig cfg;
  const BackdoorModel m = fit_backdoor(data, data.z_true_vector(), cfg);
  const double gap = std::abs(m.base.weights[31] - m.base.weights[30]);
  for (int j = 0; j < 30; ++j) {
    CHECK(gap > std::abs(m.base.weights[j]));
  }
}

TEST_CASE("all-zero z column leaves the z=1 indicator weight at zero") {
  Dataset data = noise_dataset(200, 10, 17);
  const std::vector<int> z(200, 0);
  const BackdoorModel m = fit_backdoor(data, z, TrainConfig{});
  CHECK(m.p_z == 0.0);
  CHECK(m.base.weights[11] == 0.0);
}

TEST_CASE("adjusted probability collapses to q when both branches agree") {
  for (double p_z : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    // Both indicator weights zero: p(y|x,0) = p(y|x,1) = sigma(intercept).
    const BackdoorModel m = manual_model(4, 0.0, 0.0, 0.3, p_z);
    const double q = predict_posterior(m.base, augment(std::vector<int>{}, 0, 4));
    CHECK(predict_adjusted(m, std::vector<int>{}) == doctest::Approx(q).epsilon(1e-15));
  }
}

TEST_CASE("adjusted probability mixes 0.5 and 0.9 into 0.7 at p_z=0.5") {
  // sigma(0) = 0.5 and sigma(ln 9) = 0.9.
  const BackdoorModel m = manual_model(4, 0.0, std::log(9.0), 0.0, 0.5);
  CHECK(predict_adjusted(m, std::vector<int>{}) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("adjusted probabilities of the two classes sum to one") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int V = 3 + static_cast<int>(uniform_below(rng, 12));
    BackdoorModel m;
    m.vocab_size = V;
    m.p_z = uniform01(rng);
    m.base.weights.resize(V + 2);
    for (double& w : m.base.weights) w = 4.0 * uniform01(rng) - 2.0;
    m.base.intercept = 4.0 * uniform01(rng) - 2.0;
    std::vector<int> x;
    for (int j = 0; j < V; ++j) {
      if (uniform01(rng) < 0.3) x.push_back(j);
    }
    const double p0 = predict_posterior(m.base, augment(x, 0, V));
    const double p1 = predict_posterior(m.base, augment(x, 1, V));
    const double pos = predict_adjusted(m, x);
    const double neg = (1.0 - m.p_z) * (1.0 - p0) + m.p_z * (1.0 - p1);
    CHECK(std::abs(pos + neg - 1.0) <= 1e-12);
    // Convex combination stays within the two conditionals.
    CHECK(pos >= std::min(p0, p1) - 1e-15);
    CHECK(pos <= std::max(p0, p1) + 1e-15);
  }
}

TEST_CASE("degenerate prior reduces adjustment to a single conditional") {
  BackdoorModel m = manual_model(3, -0.7, 1.1, 0.2, 0.0);
  const std::vector<int> x{1};
  CHECK(predict_adjusted(m, x) == predict_posterior(m.base, augment(x, 0, 3)));
  m.p_z = 1.0;
  CHECK(predict_adjusted(m, x) == predict_posterior(m.base, augment(x, 1, 3)));
}

TEST_CASE("label threshold is 0.5 with ties to class 1") {
  // All-zero model: adjusted probability is exactly 0.5.
  const BackdoorModel even = manual_model(4, 0.0, 0.0, 0.0, 0.5);
  CHECK(predict_adjusted(even, std::vector<int>{}) == 0.5);
  CHECK(predict_label(even, std::vector<int>{}) == 1);

  const BackdoorModel high = manual_model(4, 0.0, std::log(9.0), 0.0, 0.5);  // 0.7
  CHECK(predict_label(high, std::vector<int>{}) == 1);
  CHECK(predict_label(high, std::vector<int>{}, 0.8) == 0);

  const BackdoorModel low = manual_model(4, 0.0, 0.0, std::log(0.49 / 0.51), 0.5);  // 0.49
  CHECK(predict_label(low, std::vector<int>{}) == 0);
}

TEST_CASE("stronger indicator regularization shrinks indicator weights") {
  Dataset data = noise_dataset(300, 20, 29);
  const std::vector<int> z = data.z_true_vector();
  TrainConfig weak;
  weak.l2_confounder = 0.01;
  TrainConfig strong;
  strong.l2_confounder = 1e4;
  const double ind_weak = max_abs_indicator(fit_backdoor(data, z, weak));
  const double ind_strong = max_abs_indicator(fit_backdoor(data, z, strong));
  CHECK(ind_strong < 0.01);
  CHECK(ind_weak > 10.0 * ind_strong);
}

TEST_CASE("back-door fit moves weight off z-indicative text terms") {
  // z-indicative text terms track z, which correlates with y only through the
  // sampling bias. Giving the fit an explicit z channel should strip those
  // terms of the credit a plain fit assigns them.
  CorpusConfig corpus;
  corpus.vocab_size_y = 15;
  BiasSpec spec;
  spec.b_train = 0.8;  // r(y,z) = 0.6
  const int z_begin = corpus.vocab_size_y;
  const int z_end = z_begin + corpus.vocab_size_z;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CorpusConfig cc = corpus;
    cc.seed = seed;
    const Dataset pool = generate_pool(cc);
    const Dataset train = biased_sample(pool, spec, Split::train, mix_seed(seed, 0xb5));
    TrainConfig cfg;
    const LogRegModel plain = fit(train, Target::label_y, cfg);
    const BackdoorModel ba = fit_backdoor(train, train.z_true_vector(), cfg);
    const double plain_z = mean_abs_weight(plain.weights, z_begin, z_end);
    const double ba_z = mean_abs_weight(ba.base.weights, z_begin, z_end);
    if (ba_z < plain_z) ++wins;
  }
  CHECK(wins == 10);
}

TEST_CASE("observed-z adjustment beats plain LR under correlation reversal") {
  CorpusConfig corpus;
  corpus.vocab_size_y = 15;
  BiasSpec spec;
  spec.b_train = 0.8;  // r = 0.6
  spec.b_test = 0.2;   // r = -0.6
  int wins = 0;
  std::vector<double> gaps;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CorpusConfig cc = corpus;
    cc.seed = seed;
    const Dataset pool = generate_pool(cc);
    std::unordered_set<std::size_t> used;
    const Dataset train = biased_sample(pool, spec, Split::train, mix_seed(seed, 0xf1), &used);
    const Dataset test = biased_sample(pool, spec, Split::test, mix_seed(seed, 0xf2), &used);
    TrainConfig cfg;
    const LogRegModel plain = fit(train, Target::label_y, cfg);
    const BackdoorModel ba = fit_backdoor(train, train.z_true_vector(), cfg);
    std::vector<int> pred_plain, pred_ba;
    for (const Instance& inst : test.instances) {
      pred_plain.push_back(predict_posterior(plain, inst.features) >= 0.5 ? 1 : 0);
      pred_ba.push_back(predict_label(ba, inst.features));
    }
    const std::vector<int> truth = test.y_vector();
    const double f1_plain = f1_scores(pred_plain, truth).f1_pos;
    const double f1_ba = f1_scores(pred_ba, truth).f1_pos;
    if (f1_ba > f1_plain) ++wins;
    gaps.push_back(f1_ba - f1_plain);
  }
  CHECK(wins >= 9);
  CHECK(mean(gaps) >= 0.04);
}

TEST_CASE("backdoor model round-trips through its file format") {
  Dataset data = noise_dataset(60, 8, 41);
  const BackdoorModel m = fit_backdoor(data, data.z_true_vector(), TrainConfig{});
  const std::string path = temp_path("confound_backdoor_roundtrip.model");
  save_backdoor(m, path);
  const BackdoorModel r = load_backdoor(path);
  CHECK(r.p_z == m.p_z);
  CHECK(r.vocab_size == m.vocab_size);
  CHECK(r.base.intercept == m.base.intercept);
  CHECK(r.base.weights == m.base.weights);
  CHECK(r.base.confounder_start == m.base.confounder_start);
  CHECK(r.base.converged == m.base.converged);
  CHECK(r.base.iterations == m.base.iterations);
  CHECK(r.base.l2_text == m.base.l2_text);
  CHECK(r.base.l2_confounder == m.base.l2_confounder);
  std::remove(path.c_str());
}

TEST_CASE("loading rejects missing and malformed model files") {
  CHECK_THROWS_AS(load_backdoor(temp_path("confound_backdoor_missing.model")), IoError);

  const std::string bad_magic = temp_path("confound_backdoor_magic.model");
  {
    std::ofstream out(bad_magic);
    out << "something_else 1\n";
  }
  CHECK_THROWS_AS(load_backdoor(bad_magic), IoError);
  std::remove(bad_magic.c_str());

  // vocab_size inconsistent with the embedded model dimension.
  Dataset data = noise_dataset(40, 5, 43);
  const BackdoorModel m = fit_backdoor(data, data.z_true_vector(), TrainConfig{});
  const std::string mismatched = temp_path("confound_backdoor_dim.model");
  {
    std::ofstream out(mismatched);
    out << "confound_backdoor 1\n";
    out << "p_z 0.5\n";
    out << "vocab_size 9\n";  // model dim is 7
    write_model(m.base, out);
  }
  CHECK_THROWS_AS(load_backdoor(mismatched), IoError);
  std::remove(mismatched.c_str());
}
