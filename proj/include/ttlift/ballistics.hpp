#pragma once

#include <span>
#include <vector>

#include "ttlift/common.hpp"
#include "ttlift/table.hpp"

namespace ttlift {

/// Kinematic state of the ball at one instant (world frame, SI units).
struct BallState {
  Vec3 r = Vec3::Zero();      // position, m
  Vec3 v = Vec3::Zero();      // velocity, m/s
  Vec3 omega = Vec3::Zero();  // angular velocity, rad/s

  bool finite() const { return r.allFinite() && v.allFinite() && omega.allFinite(); }
};

/// Flight and bounce constants.
///
/// Flight: a = g - drag * |v| * v + magnus * (omega x v).
/// Bounce (table normal n = +z):
///   v'_z = -restitution * v_z
///   v'_t = tangential_retention * v_t + spin_coupling * (omega x n)
///   omega' = spin_retention * omega
/// followed by a cap that keeps |v|^2 + I_eff |omega|^2 from increasing,
/// I_eff = 2/5 * ball_radius^2.
struct PhysicsParams {
  Vec3 gravity{0.0, 0.0, -9.81};
  double drag = 0.112;       // 1/m
  double magnus = 4.0e-4;    // lumped Magnus factor
  double restitution = 0.9;
  double tangential_retention = 0.75;
  double spin_coupling = 0.0075;  // m
  double spin_retention = 0.8;
  double ball_radius = 0.02;
  TableGeometry table;

  /// Height of the ball center when it touches the playing surface.
  double contact_height() const { return table.surface_height + ball_radius; }

  double effective_inertia() const { return 0.4 * ball_radius * ball_radius; }

  /// Throws ContractError when a constant is outside its admissible range.
  void validate() const;
};

/// Acceleration during free flight.
Vec3 flight_derivative(const BallState& state, const PhysicsParams& params);

/// One classical Runge-Kutta step of (r, v); omega is carried unchanged.
BallState step_rk4(const BallState& state, const PhysicsParams& params, double dt);

/// Table rebound. The state must be at contact height, moving down, above the
/// table footprint.
BallState bounce(const BallState& state, const PhysicsParams& params);

/// |v|^2 + I_eff |omega|^2, the quantity a bounce never increases.
double effective_energy(const BallState& state, const PhysicsParams& params);

struct BounceEvent {
  double time = 0.0;
  BallState before;
  BallState after;
};

struct SimulationResult {
  /// State at each requested time up to (excluding) the first time the ball
  /// center is below the floor. May be shorter than the request.
  std::vector<BallState> states;
  std::vector<BounceEvent> bounces;
  bool reached_floor = false;
};

struct SimulationOptions {
  double max_step = 1.0e-3;       // s
  double contact_tolerance = 1.0e-6;  // s, bisection stopping width
};

/// Integrates the flight, detects table contacts by sign change of
/// (r_z - contact height) inside a step and refines them by bisection.
/// `sample_times` must start at 0 and be strictly increasing.
SimulationResult simulate(const BallState& init, const PhysicsParams& params,
                          std::span<const double> sample_times,
                          const SimulationOptions& options = {});

/// States at `sample_times`; see simulate().
std::vector<BallState> simulate_trajectory(const BallState& init, const PhysicsParams& params,
                                           std::span<const double> sample_times);

}  // namespace ttlift
