#pragma once

#include <stdexcept>
#include <string>

namespace confound {

// Invalid configuration value; message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Constrained sampling cannot be satisfied; message names the deficient cell.
class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data unusable for the requested operation (single-class training set,
// fold without both classes, empty filter result).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O failure; message carries the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace confound
