#pragma once

#include <stdexcept>
#include <string>

namespace mshc {

// Shape or extent disagreement between operands.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or combination (bad k, bad kernel extent, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad values inside otherwise well-formed data (NaN pixel, isolated node, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file container (magic, header, payload size).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violation (non-scalar backward, double backward, empty batch).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged or produced non-finite values.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint and data/configuration disagree.
struct MismatchError : std::runtime_error {
  explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Synthetic data generation could not satisfy the spec after bounded retries.
struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure.
struct FileError : std::runtime_error {
  explicit FileError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mshc
