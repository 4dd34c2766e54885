#include "ttlift/ballistics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ttlift {

void PhysicsParams::validate() const {
  if (!gravity.allFinite()) throw ContractError("physics: gravity must be finite");
  if (!(drag >= 0.0)) throw ContractError("physics: drag must be >= 0");
  if (!(magnus >= 0.0)) throw ContractError("physics: magnus must be >= 0");
  if (!(restitution > 0.0 && restitution <= 1.0))
    throw ContractError("physics: restitution must lie in (0, 1]");
  if (!(tangential_retention >= 0.0 && tangential_retention <= 1.0))
    throw ContractError("physics: tangential_retention must lie in [0, 1]");
  if (!(spin_coupling >= 0.0)) throw ContractError("physics: spin_coupling must be >= 0");
  if (!(spin_retention >= 0.0 && spin_retention <= 1.0))
    throw ContractError("physics: spin_retention must lie in [0, 1]");
  if (!(ball_radius > 0.0)) throw ContractError("physics: ball_radius must be > 0");
}

Vec3 flight_derivative(const BallState& state, const PhysicsParams& params) {
  const Vec3& v = state.v;
  return params.gravity - params.drag * v.norm() * v + params.magnus * state.omega.cross(v);
}

BallState step_rk4(const BallState& state, const PhysicsParams& params, double dt) {
  if (!(dt >= 0.0)) throw ContractError("step_rk4: dt must be >= 0");
  if (dt == 0.0) return state;

  auto accel = [&](const Vec3& v) {
    BallState s;
    s.v = v;
    s.omega = state.omega;
    return flight_derivative(s, params);
  };

  const Vec3& r0 = state.r;
  const Vec3& v0 = state.v;
  const Vec3 k1r = v0;
  const Vec3 k1v = accel(v0);
  const Vec3 k2r = v0 + 0.5 * dt * k1v;
  const Vec3 k2v = accel(k2r);
  const Vec3 k3r = v0 + 0.5 * dt * k2v;
  const Vec3 k3v = accel(k3r);
  const Vec3 k4r = v0 + dt * k3v;
  const Vec3 k4v = accel(k4r);

  BallState out;
  out.r = r0 + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
  out.v = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  out.omega = state.omega;
  return out;
}

double effective_energy(const BallState& state, const PhysicsParams& params) {
  return state.v.squaredNorm() + params.effective_inertia() * state.omega.squaredNorm();
}

BallState bounce(const BallState& state, const PhysicsParams& params) {
  constexpr double kHeightTolerance = 1.0e-4;
  if (!state.finite()) throw ContractError("bounce: non-finite state");
  if (std::abs(state.r.z() - params.contact_height()) > kHeightTolerance)
    throw ContractError("bounce: ball is not at contact height");
  if (!(state.v.z() < 0.0)) throw ContractError("bounce: ball is not moving towards the table");
  if (!params.table.inside_footprint(state.r.x(), state.r.y()))
    throw ContractError("bounce: contact point outside the table footprint");

  const Vec3 normal = Vec3::UnitZ();
  const Vec3 v_tangent(state.v.x(), state.v.y(), 0.0);
  Vec3 spin_kick = state.omega.cross(normal);
  spin_kick.z() = 0.0;

  BallState out = state;
  Vec3 vt = params.tangential_retention * v_tangent + params.spin_coupling * spin_kick;
  Vec3 omega = params.spin_retention * state.omega;
  const double vz = -params.restitution * state.v.z();

  // Energy cap: the linear model can inject energy for strong spin combined
  // with fast tangential motion; scale the tangential/rotational part back.
  const double budget = effective_energy(state, params) - vz * vz;
  const double tangential = vt.squaredNorm() + params.effective_inertia() * omega.squaredNorm();
  if (tangential > budget) {
    const double s = budget > 0.0 ? std::sqrt(budget / tangential) : 0.0;
    vt *= s;
    omega *= s;
  }

  out.v = Vec3(vt.x(), vt.y(), vz);
  out.omega = omega;
  return out;
}

namespace {

double height_above_contact(const BallState& s, const PhysicsParams& p) {
  return s.r.z() - p.contact_height();
}

struct Integrator {
  const PhysicsParams& params;
  const SimulationOptions& options;
  BallState state;
  double time = 0.0;
  std::vector<BounceEvent>* bounces;

  // Advances by h, resolving at most one table contact inside the step per
  // iteration. Returns false once the ball has dropped below the floor.
  bool advance(double h) {
    double remaining = h;
    while (remaining > 0.0) {
      const BallState next = step_rk4(state, params, remaining);
      const bool crosses = height_above_contact(state, params) >= 0.0 &&
                           height_above_contact(next, params) < 0.0;
      if (crosses) {
        double lo = 0.0;
        double hi = remaining;
        while (hi - lo > options.contact_tolerance) {
          const double mid = 0.5 * (lo + hi);
          if (height_above_contact(step_rk4(state, params, mid), params) >= 0.0)
            lo = mid;
          else
            hi = mid;
        }
        BallState contact = step_rk4(state, params, lo);
        if (params.table.inside_footprint(contact.r.x(), contact.r.y()) && contact.v.z() < 0.0) {
          contact.r.z() = params.contact_height();
          const BallState after = bounce(contact, params);
          bounces->push_back({time + lo, contact, after});
          state = after;
          time += lo;
          remaining -= lo;
          continue;
        }
      }
      state = next;
      time += remaining;
      remaining = 0.0;
    }
    return state.r.z() >= 0.0;
  }
};

}  // namespace

SimulationResult simulate(const BallState& init, const PhysicsParams& params,
                          std::span<const double> sample_times, const SimulationOptions& options) {
  if (sample_times.empty()) return {};
  if (sample_times.front() != 0.0)
    throw ContractError("simulate: sample_times must start at 0");
  for (std::size_t i = 1; i < sample_times.size(); ++i) {
    if (!(sample_times[i] > sample_times[i - 1]))
      throw ContractError("simulate: sample_times must be strictly increasing (index " +
                          std::to_string(i) + ")");
  }
  if (!init.finite()) throw ContractError("simulate: non-finite initial state");

  SimulationResult result;
  result.states.reserve(sample_times.size());
  result.states.push_back(init);

  Integrator integ{params, options, init, 0.0, &result.bounces};
  for (std::size_t i = 1; i < sample_times.size(); ++i) {
    const double target = sample_times[i];
    bool above_floor = true;
    while (integ.time < target && above_floor) {
      const double h = std::min(options.max_step, target - integ.time);
      above_floor = integ.advance(h);
      if (target - integ.time < 1e-12) integ.time = target;
    }
    if (!above_floor) {
      result.reached_floor = true;
      break;
    }
    result.states.push_back(integ.state);
  }
  return result;
}

std::vector<BallState> simulate_trajectory(const BallState& init, const PhysicsParams& params,
                                           std::span<const double> sample_times) {
  return simulate(init, params, sample_times).states;
}

}  // namespace ttlift
