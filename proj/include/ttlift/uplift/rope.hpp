#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ttlift/common.hpp"

namespace ttlift::uplift {

/// Rotary embedding driven by timestamps: position p = round(t / delta_t),
/// pair m of a width-`dim` feature vector is rotated by p * theta_m with
/// theta_m = base^(-2m / dim).
struct RopeConfig {
  double delta_t = 0.002;
  double base = 10000.0;

  std::int64_t position(double t) const { return std::llround(t / delta_t); }

  double theta(int m, int dim) const {
    return std::pow(base, -2.0 * static_cast<double>(m) / static_cast<double>(dim));
  }
};

/// Rotates consecutive pairs (x_2m, x_2m+1) of `x` in place by p * theta_m.
template <typename Derived>
void rope_rotate_inplace(Eigen::MatrixBase<Derived>& x, std::int64_t p, const RopeConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  const auto dim = static_cast<int>(x.size());
  if (dim % 2 != 0) throw ContractError("rope: feature dimension must be even");
  for (int m = 0; m < dim / 2; ++m) {
    const double angle = static_cast<double>(p) * cfg.theta(m, dim);
    const auto c = static_cast<Scalar>(std::cos(angle));
    const auto s = static_cast<Scalar>(std::sin(angle));
    const Scalar a = x(2 * m);
    const Scalar b = x(2 * m + 1);
    x(2 * m) = a * c - b * s;
    x(2 * m + 1) = a * s + b * c;
  }
}

/// Returns `x` rotated for timestamp t (seconds).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rope_rotate(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                                                     double t, const RopeConfig& cfg) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = x;
  rope_rotate_inplace(out, cfg.position(t), cfg);
  return out;
}

/// Per-token cos/sin tables for one head width, shared by all attention
/// layers of a forward pass. Column j belongs to token j.
template <typename Scalar>
struct RopeTable {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cos;  // (head_dim/2) x T
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sin;

  bool empty() const { return cos.size() == 0; }

  static RopeTable build(std::span<const std::int64_t> positions, int head_dim, const RopeConfig& cfg) {
    RopeTable t;
    const int half = head_dim / 2;
    const auto n = static_cast<Eigen::Index>(positions.size());
    t.cos.resize(half, n);
    t.sin.resize(half, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int m = 0; m < half; ++m) {
        const double angle = static_cast<double>(positions[static_cast<std::size_t>(j)]) * cfg.theta(m, head_dim);
        t.cos(m, j) = static_cast<Scalar>(std::cos(angle));
        t.sin(m, j) = static_cast<Scalar>(std::sin(angle));
      }
    }
    return t;
  }

  /// Rotates every head slice of the (heads * head_dim) x T block in place.
  /// inverse = true applies the transpose rotation (used for gradients).
  template <typename Derived>
  void apply(Eigen::MatrixBase<Derived>& x, int heads, bool inverse = false) const {
    const auto half = static_cast<int>(cos.rows());
    const int head_dim = 2 * half;
    const Scalar sign = inverse ? Scalar(-1) : Scalar(1);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (int h = 0; h < heads; ++h) {
        for (int m = 0; m < half; ++m) {
          const Scalar c = cos(m, j);
          const Scalar s = sign * sin(m, j);
          const Eigen::Index r = h * head_dim + 2 * m;
          const Scalar a = x(r, j);
          const Scalar b = x(r + 1, j);
          x(r, j) = a * c - b * s;
          x(r + 1, j) = a * s + b * c;
        }
      }
    }
  }
};

}  // namespace ttlift::uplift
