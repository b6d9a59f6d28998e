// Times the serial reference loss/gradient kernel against the OpenMP-blocked
// one on a synthetic corpus and cross-checks that the two agree bitwise.
// Run with no arguments for the stock sizes, or pass
//   bench_kernels [doc_count] [vocab_noise] [repeats]
// to probe a different regime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "confound/corpus.hpp"
#include "confound/learner.hpp"

namespace {

using namespace confound;
using clock_type = std::chrono::steady_clock;

template <typename F>
double best_of(int repeats, F&& body) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock_type::now();
    body();
    const auto t1 = clock_type::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

LogRegModel random_model(int dim, std::uint64_t seed) {
  LogRegModel model;
  model.weights.resize(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.3);
  for (double& w : model.weights) w = gauss(rng);
  model.intercept = gauss(rng);
  return model;
}

bool identical(const LossGrad& a, const LossGrad& b) {
  if (std::memcmp(&a.loss, &b.loss, sizeof(double)) != 0) return false;
  if (a.grad.size() != b.grad.size()) return false;
  return std::memcmp(a.grad.data(), b.grad.data(), a.grad.size() * sizeof(double)) == 0;
}

// The two kernels accumulate in different orders, so they agree only up to
// rounding. Mixed relative/absolute deviation, worst entry over the result.
double max_deviation(const LossGrad& a, const LossGrad& b) {
  auto dev = [](double x, double y) {
    return std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)});
  };
  double worst = dev(a.loss, b.loss);
  for (std::size_t j = 0; j < a.grad.size(); ++j) worst = std::max(worst, dev(a.grad[j], b.grad[j]));
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CorpusConfig cfg;
  cfg.doc_count = argc > 1 ? std::atoi(argv[1]) : 20000;
  cfg.vocab_size_noise = argc > 2 ? std::atoi(argv[2]) : 400;
  const int repeats = argc > 3 ? std::atoi(argv[3]) : 7;
  if (cfg.doc_count <= 0 || cfg.vocab_size_noise <= 0 || repeats <= 0) {
    std::fprintf(stderr, "usage: %s [doc_count] [vocab_noise] [repeats]\n", argv[0]);
    return 2;
  }
  cfg.seed = 20240917;

  const Dataset data = generate_pool(cfg);
  const std::vector<int> labels = data.y_vector();
  const LogRegModel model = random_model(data.vocab_size, 42);

#ifdef _OPENMP
  const int threads = omp_get_max_threads();
#else
  const int threads = 1;
#endif
  std::printf("n=%zu dim=%d threads=%d repeats=%d (best-of timing)\n", data.size(),
              data.vocab_size, threads, repeats);

  LossGrad serial, blocked;
  const double t_serial =
      best_of(repeats, [&] { serial = loss_and_gradient_serial(model, data, labels); });
  const double t_blocked =
      best_of(repeats, [&] { blocked = loss_and_gradient(model, data, labels); });

  std::printf("serial : %9.3f ms\n", t_serial);
  std::printf("blocked: %9.3f ms  speedup %.2fx\n", t_blocked, t_serial / t_blocked);

  const LossGrad repeat = loss_and_gradient(model, data, labels);
  if (!identical(blocked, repeat)) {
    std::printf("MISMATCH: blocked kernel is not deterministic across runs\n");
    return 1;
  }
  const double dev = max_deviation(serial, blocked);
  std::printf("blocked repeat: bitwise identical; serial vs blocked max deviation %.3e\n", dev);
  if (dev > 1e-10) {
    std::printf("MISMATCH: deviation exceeds the rounding budget (1e-10)\n");
    return 1;
  }
  return 0;
}
