// Common matrix aliases and error types used across the library.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace shinbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultFloor = 1e-12;

// Conformability violations (shapes, lengths, indices).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Values outside a function's mathematical domain (negative entries, logs of
// nonpositive numbers, empty bands).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// NaN/Inf or failed numerical procedures, carrying iteration context where
// available.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user-facing configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// splitmix64 step; decorrelates per-run seeds derived from one base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace shinbo
