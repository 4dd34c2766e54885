#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace ttlift {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 2, DataError / ContractError -> 3, NumericalError -> 4.

/// A precondition of an operation was violated by the caller.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or unknown configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed, missing or inconsistent input data.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (degenerate system, divergence, ...).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Camera estimation failed: too few points, degenerate geometry or no consensus.
class CalibrationError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// A point was projected with non-positive homogeneous depth.
class BehindCameraError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// SplitMix64 finalizer; used to derive independent per-item seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

}  // namespace ttlift
