#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ttlift/uplift/model.hpp"

namespace ttlift::uplift {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  double gradient_norm = 0.0;  // norm of the full analytic gradient
};

/// Compares reverse-mode gradients with central differences on `n_coords`
/// random coordinates (at least one per parameter tensor). The relative error
/// of a coordinate is |g - g_fd| / max(|g|, |g_fd|, abs_floor).
GradCheckResult grad_check(UpliftModel<double>& model, const UpliftInput& input,
                           std::span<const Vec3> true_positions, const Vec3& true_spin,
                           double epsilon, std::size_t n_coords = 256, std::uint64_t seed = 0,
                           const LossWeights& weights = {}, double abs_floor = 1e-6);

}  // namespace ttlift::uplift
