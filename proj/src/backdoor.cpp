#include "confound/backdoor.hpp"

#include <fstream>
#include <stdexcept>

#include "confound/errors.hpp"
#include "confound/format.hpp"

namespace confound {

std::vector<int> augment(std::span<const int> features, int z_value, int vocab_size) {
  if (z_value != 0 && z_value != 1) {
    throw std::invalid_argument("z value must be 0 or 1");
  }
  std::vector<int> out;
  out.reserve(features.size() + 1);
  for (int j : features) {
    if (j < 0 || j >= vocab_size) {
      throw std::out_of_range("feature index " + std::to_string(j) +
                              " out of bounds for vocabulary " + std::to_string(vocab_size));
    }
    out.push_back(j);
  }
  out.push_back(vocab_size + z_value);
  return out;
}

BackdoorModel fit_backdoor(const Dataset& data, std::span<const int> z_column,
                           const TrainConfig& config) {
  if (z_column.size() != data.instances.size()) {
    throw std::invalid_argument("z column does not match dataset size");
  }
  const int V = data.vocab_size;
  Dataset augmented;
  augmented.vocab_size = V + 2;
  augmented.instances.reserve(data.instances.size());
  std::size_t n_z1 = 0;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    Instance inst = data.instances[i];
    inst.features = augment(inst.features, z_column[i] != 0 ? 1 : 0, V);
    augmented.instances.push_back(std::move(inst));
    if (z_column[i] != 0) ++n_z1;
  }
  BackdoorModel model;
  model.vocab_size = V;
  model.p_z = static_cast<double>(n_z1) / static_cast<double>(data.instances.size());
  model.base = fit(augmented, Target::label_y, config, /*confounder_start=*/V);
  return model;
}

double predict_adjusted(const BackdoorModel& model, std::span<const int> features) {
  const double p0 = predict_posterior(model.base, augment(features, 0, model.vocab_size));
  const double p1 = predict_posterior(model.base, augment(features, 1, model.vocab_size));
  return (1.0 - model.p_z) * p0 + model.p_z * p1;
}

int predict_label(const BackdoorModel& model, std::span<const int> features, double threshold) {
  return predict_adjusted(model, features) >= threshold ? 1 : 0;
}

void save_backdoor(const BackdoorModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "confound_backdoor 1\n";
  out << "p_z " << fmt_double(model.p_z) << "\n";
  out << "vocab_size " << model.vocab_size << "\n";
  write_model(model.base, out);
  if (!out) throw IoError("write failed: " + path);
}

BackdoorModel load_backdoor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "confound_backdoor" || version != "1") {
    throw IoError("not a confound_backdoor v1 file: " + path);
  }
  std::string key, value;
  BackdoorModel model;
  if (!(in >> key >> value) || key != "p_z") throw IoError("expected 'p_z' in " + path);
  model.p_z = parse_double(value, path);
  if (!(in >> key >> value) || key != "vocab_size") {
    throw IoError("expected 'vocab_size' in " + path);
  }
  model.vocab_size = static_cast<int>(parse_int(value, path));
  model.base = read_model(in, path);
  if (model.base.dim() != model.vocab_size + 2) {
    throw IoError("base model dimension does not match vocab_size in " + path);
  }
  return model;
}

}  // namespace confound
