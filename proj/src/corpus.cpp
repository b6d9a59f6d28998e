#include "confound/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "confound/format.hpp"
#include "confound/rng.hpp"

namespace confound {

void CorpusConfig::validate() const {
  if (vocab_size_y < 1) throw ConfigError("vocab_size_y must be >= 1");
  if (vocab_size_z < 1) throw ConfigError("vocab_size_z must be >= 1");
  if (vocab_size_noise < 1) throw ConfigError("vocab_size_noise must be >= 1");
  if (doc_count < 4) throw ConfigError("doc_count must be >= 4");
  if (p_on_indicative < 0.0 || p_on_indicative > 1.0)
    throw ConfigError("p_on_indicative must be in [0,1]");
  if (p_on_background < 0.0 || p_on_background > 1.0)
    throw ConfigError("p_on_background must be in [0,1]");
  if (!(p_on_indicative > p_on_background))
    throw ConfigError("p_on_indicative must exceed p_on_background");
}

void BiasSpec::validate() const {
  if (b_train < 0.0 || b_train > 1.0) throw ConfigError("b_train must be in [0,1]");
  if (b_test < 0.0 || b_test > 1.0) throw ConfigError("b_test must be in [0,1]");
  if (p_y < 0.0 || p_y > 1.0) throw ConfigError("p_y must be in [0,1]");
  if (p_z < 0.0 || p_z > 1.0) throw ConfigError("p_z must be in [0,1]");
  if (n_train < 1) throw ConfigError("n_train must be >= 1");
  if (n_test < 1) throw ConfigError("n_test must be >= 1");
  // Cell-count consistency is checked per draw in implied_cell_counts.
}

std::vector<int> Dataset::y_vector() const {
  std::vector<int> v(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) v[i] = instances[i].y;
  return v;
}

std::vector<int> Dataset::z_true_vector() const {
  std::vector<int> v(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) v[i] = instances[i].z_true;
  return v;
}

std::vector<int> Dataset::z_pred_vector() const {
  std::vector<int> v(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].z_pred) throw DataError("instance missing z_pred");
    v[i] = *instances[i].z_pred;
  }
  return v;
}

std::vector<double> Dataset::z_posterior_vector() const {
  std::vector<double> v(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].z_posterior) throw DataError("instance missing z_posterior");
    v[i] = *instances[i].z_posterior;
  }
  return v;
}

std::array<std::array<std::size_t, 2>, 2> Dataset::cell_counts() const {
  std::array<std::array<std::size_t, 2>, 2> c{{{0, 0}, {0, 0}}};
  for (const auto& inst : instances) ++c[inst.y][inst.z_true];
  return c;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.vocab_size = vocab_size;
  out.instances.reserve(indices.size());
  for (std::size_t idx : indices) out.instances.push_back(instances[idx]);
  return out;
}

Dataset generate_pool(const CorpusConfig& config) {
  config.validate();
  Dataset data;
  data.vocab_size = config.vocab_size();
  data.instances.resize(config.doc_count);

  std::mt19937_64 rng(mix_seed(config.seed, 0x706f6f6cULL));  // "pool"
  const int vy = config.vocab_size_y;
  const int vz = config.vocab_size_z;
  const int total = config.vocab_size();

  for (int i = 0; i < config.doc_count; ++i) {
    Instance& inst = data.instances[i];
    const int cell = i % 4;
    inst.y = cell & 1;
    inst.z_true = (cell >> 1) & 1;
    for (int t = 0; t < total; ++t) {
      double p = config.p_on_background;
      if (t < vy) {
        if (t % 2 == inst.y) p = config.p_on_indicative;
      } else if (t < vy + vz) {
        if ((t - vy) % 2 == inst.z_true) p = config.p_on_indicative;
      }
      if (uniform01(rng) < p) inst.features.push_back(t);
    }
  }
  return data;
}

namespace {

long long round_nearest(double x) { return std::llround(x); }

}  // namespace

CellCounts implied_cell_counts(double b, int n, double p_y, double p_z) {
  // Marginals first (they must hold exactly), then the joint cell.
  const long long n_z1 = round_nearest(p_z * n);
  const long long n_y1 = round_nearest(p_y * n);
  const long long n11 = round_nearest(b * static_cast<double>(n_z1));
  const long long n01 = n_z1 - n11;        // y=0, z=1
  const long long n10 = n_y1 - n11;        // y=1, z=0
  const long long n00 = n - n_y1 - n01;    // y=0, z=0
  if (n11 < 0 || n01 < 0 || n10 < 0 || n00 < 0) {
    throw ConfigError("bias spec implies a negative cell count (b=" + fmt_double(b) +
                      ", p_y=" + fmt_double(p_y) + ", p_z=" + fmt_double(p_z) +
                      ", n=" + std::to_string(n) + ")");
  }
  CellCounts c;
  c.n11 = static_cast<std::size_t>(n11);
  c.n10 = static_cast<std::size_t>(n10);
  c.n01 = static_cast<std::size_t>(n01);
  c.n00 = static_cast<std::size_t>(n00);
  return c;
}

Dataset biased_sample(const Dataset& pool, const BiasSpec& spec, Split which, std::uint64_t seed,
                      std::unordered_set<std::size_t>* exclusion) {
  spec.validate();
  const double b = which == Split::train ? spec.b_train : spec.b_test;
  const int n = which == Split::train ? spec.n_train : spec.n_test;
  const CellCounts want = implied_cell_counts(b, n, spec.p_y, spec.p_z);

  // Candidate pool indices per (y, z_true) cell, excluding already-used ones.
  std::array<std::array<std::vector<std::size_t>, 2>, 2> cells;
  for (std::size_t i = 0; i < pool.instances.size(); ++i) {
    if (exclusion && exclusion->count(i)) continue;
    const Instance& inst = pool.instances[i];
    cells[inst.y][inst.z_true].push_back(i);
  }

  const std::size_t demand[2][2] = {{want.n00, want.n01}, {want.n10, want.n11}};
  for (int y = 0; y < 2; ++y) {
    for (int z = 0; z < 2; ++z) {
      if (cells[y][z].size() < demand[y][z]) {
        throw SamplingError("cell y=" + std::to_string(y) + ",z=" + std::to_string(z) +
                            ": need " + std::to_string(demand[y][z]) + ", have " +
                            std::to_string(cells[y][z].size()));
      }
    }
  }

  std::mt19937_64 rng(mix_seed(seed, which == Split::train ? 1 : 2, 0x62696173ULL));  // "bias"
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (int y = 0; y < 2; ++y) {
    for (int z = 0; z < 2; ++z) {
      auto picked = sample_without_replacement(cells[y][z], demand[y][z], rng);
      chosen.insert(chosen.end(), picked.begin(), picked.end());
    }
  }
  std::sort(chosen.begin(), chosen.end());
  if (exclusion) exclusion->insert(chosen.begin(), chosen.end());
  return pool.subset(chosen);
}

std::vector<int> inject_noise(std::span<const int> z_labels, double p_flip, std::uint64_t seed) {
  if (p_flip < 0.0 || p_flip > 0.5) throw ConfigError("p_flip must be in [0, 0.5]");
  std::vector<int> out(z_labels.begin(), z_labels.end());
  std::mt19937_64 rng(mix_seed(seed, 0x666c6970ULL));  // "flip"
  for (auto& z : out) {
    if (uniform01(rng) < p_flip) z = 1 - z;
  }
  return out;
}

void write_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "#vocab=" << data.vocab_size << "\n";
  for (const auto& inst : data.instances) {
    out << inst.y << '\t' << inst.z_true << '\t';
    if (inst.z_pred) {
      out << *inst.z_pred << '\t' << fmt_double(*inst.z_posterior) << '\t';
    }
    for (std::size_t j = 0; j < inst.features.size(); ++j) {
      if (j) out << ',';
      out << inst.features[j];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<int> parse_features(const std::string& field, int vocab_size, const std::string& path) {
  std::vector<int> feats;
  if (field.empty()) return feats;
  std::size_t start = 0;
  while (start <= field.size()) {
    std::size_t pos = field.find(',', start);
    if (pos == std::string::npos) pos = field.size();
    const int idx = static_cast<int>(parse_int(field.substr(start, pos - start), path));
    if (idx < 0 || idx >= vocab_size) {
      throw IoError("feature index " + std::to_string(idx) + " out of range in " + path);
    }
    if (!feats.empty() && idx <= feats.back()) {
      throw IoError("feature indices not strictly increasing in " + path);
    }
    feats.push_back(idx);
    if (pos == field.size()) break;
    start = pos + 1;
  }
  return feats;
}

}  // namespace

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#vocab=", 0) != 0) {
    throw IoError("missing #vocab= header in " + path);
  }
  Dataset data;
  data.vocab_size = static_cast<int>(parse_int(line.substr(7), path));
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 && fields.size() != 5) {
      throw IoError("expected 3 or 5 tab-separated fields in " + path);
    }
    Instance inst;
    inst.y = static_cast<int>(parse_int(fields[0], path));
    inst.z_true = static_cast<int>(parse_int(fields[1], path));
    std::size_t feat_field = 2;
    if (fields.size() == 5) {
      inst.z_pred = static_cast<int>(parse_int(fields[2], path));
      inst.z_posterior = parse_double(fields[3], path);
      if (*inst.z_posterior < 0.5 || *inst.z_posterior > 1.0) {
        throw IoError("z_posterior outside [0.5, 1] in " + path);
      }
      feat_field = 4;
    }
    inst.features = parse_features(fields[feat_field], data.vocab_size, path);
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace confound
