#pragma once

// Back-door-adjusted classifier. Training appends one of two confounder
// indicator features (index V for z=0, V+1 for z=1) to every instance;
// prediction sums the conditional posteriors over both z values weighted by
// the empirical prior p(z).

#include <span>
#include <string>
#include <vector>

#include "confound/corpus.hpp"
#include "confound/learner.hpp"

namespace confound {

struct BackdoorModel {
  LogRegModel base;     // feature space of size vocab_size + 2
  double p_z = 0.5;     // training frequency of z=1, exact
  int vocab_size = 0;   // V, size of the unaugmented feature space
};

// Returns features plus indicator V (z=0) or V+1 (z=1); input unmodified.
std::vector<int> augment(std::span<const int> features, int z_value, int vocab_size);

// Fits the base model on augmented vectors against the y column; z_column
// supplies the confounder values to encode (true, raw predicted, or matched).
BackdoorModel fit_backdoor(const Dataset& data, std::span<const int> z_column,
                           const TrainConfig& config);

// p(y=1|do(x)) per the adjustment sum over z in {0,1}.
double predict_adjusted(const BackdoorModel& model, std::span<const int> features);

// 1 iff predict_adjusted >= threshold (ties go to class 1).
int predict_label(const BackdoorModel& model, std::span<const int> features,
                  double threshold = 0.5);

void save_backdoor(const BackdoorModel& model, const std::string& path);
BackdoorModel load_backdoor(const std::string& path);

}  // namespace confound
