#include "ttlift/synthesis.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ttlift {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr int kMaxKindAttempts = 2000;
constexpr double kDenseStep = 1.0e-3;

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max)
    throw ConfigError(std::string("scenario: invalid range for ") + name);
}

struct ShotGeometry {
  Vec3 start;
  Range speed;
  Range elevation_deg;
};

// Spin about an axis dominated by the top/back-spin direction of the shot.
Vec3 sample_spin(std::mt19937_64& rng, const ScenarioConfig& cfg, const Vec3& travel_dir) {
  const Vec3 x_loc = travel_dir;
  const Vec3 z_loc = Vec3::UnitZ();
  const Vec3 y_loc = z_loc.cross(x_loc);
  const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  const double side = Range{-cfg.spin_side_ratio, cfg.spin_side_ratio}.sample(rng);
  const double cork = Range{-cfg.spin_cork_ratio, cfg.spin_cork_ratio}.sample(rng);
  const Vec3 axis = (sign * y_loc + side * z_loc + cork * x_loc).normalized();
  return cfg.spin_magnitude.sample(rng) * axis;
}

// Mirror a shot towards +x into one towards -x (rotation by pi about z).
BallState mirror(const BallState& s) {
  BallState m;
  m.r = Vec3(-s.r.x(), -s.r.y(), s.r.z());
  m.v = Vec3(-s.v.x(), -s.v.y(), s.v.z());
  m.omega = Vec3(-s.omega.x(), -s.omega.y(), s.omega.z());
  return m;
}

struct NetCrossing {
  double time;
  Vec3 position;
};

// First crossing of the net plane (x = 0) on a dense state sequence of a
// shot travelling towards +x.
std::optional<NetCrossing> find_net_crossing(const std::vector<BallState>& dense, double step) {
  for (std::size_t i = 1; i < dense.size(); ++i) {
    const double x0 = dense[i - 1].r.x();
    const double x1 = dense[i].r.x();
    if (x0 < 0.0 && x1 >= 0.0) {
      const double a = -x0 / (x1 - x0);
      return NetCrossing{(static_cast<double>(i - 1) + a) * step,
                         (1.0 - a) * dense[i - 1].r + a * dense[i].r};
    }
  }
  return std::nullopt;
}

}  // namespace

void ScenarioConfig::validate() const {
  double total = 0.0;
  for (double w : kind_weights) {
    if (!(w >= 0.0)) throw ConfigError("scenario: kind weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("scenario: at least one kind weight must be positive");
  check_range(rally_start_x, "rally_start_x");
  check_range(rally_start_y, "rally_start_y");
  check_range(rally_start_z, "rally_start_z");
  check_range(rally_speed, "rally_speed");
  check_range(rally_elevation_deg, "rally_elevation_deg");
  check_range(serve_start_x, "serve_start_x");
  check_range(serve_start_y, "serve_start_y");
  check_range(serve_start_z, "serve_start_z");
  check_range(serve_speed, "serve_speed");
  check_range(serve_elevation_deg, "serve_elevation_deg");
  check_range(heading_deg, "heading_deg");
  check_range(spin_magnitude, "spin_magnitude");
  check_range(fps, "fps");
  check_range(duration_s, "duration_s");
  check_range(camera.distance_m, "camera.distance_m");
  check_range(camera.height_m, "camera.height_m");
  check_range(camera.azimuth_deg, "camera.azimuth_deg");
  check_range(camera.focal_px, "camera.focal_px");
  if (spin_magnitude.min < 0.0) throw ConfigError("scenario: spin magnitude must be >= 0");
  if (!(fps.min > 0.0)) throw ConfigError("scenario: fps must be > 0");
  if (!(duration_s.min > 0.0)) throw ConfigError("scenario: duration must be > 0");
  if (!(camera.focal_px.min > 0.0)) throw ConfigError("scenario: focal length must be > 0");
  if (camera.image_w <= 0 || camera.image_h <= 0) throw ConfigError("scenario: bad image size");
  if (max_attempts < 1) throw ConfigError("scenario: max_attempts must be >= 1");
  try {
    physics.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

ScenarioConfig ScenarioConfig::paper_preset() { return ScenarioConfig{}; }

CameraModel sample_camera(std::mt19937_64& rng, const CameraRanges& ranges,
                          const TableGeometry& table) {
  const double az = ranges.azimuth_deg.sample(rng) * kDegToRad;
  const double dist = ranges.distance_m.sample(rng);
  const double height = ranges.height_m.sample(rng);
  const Vec3 center(-dist * std::cos(az), dist * std::sin(az), height);
  const Vec3 target(0.0, 0.0, table.surface_height);

  const Vec3 look = (target - center).normalized();
  const Range jitter{-ranges.look_jitter_deg * kDegToRad, ranges.look_jitter_deg * kDegToRad};
  const double yaw = std::atan2(look.y(), look.x()) + jitter.sample(rng);
  const double pitch = std::asin(look.z()) + jitter.sample(rng);
  const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                     std::sin(pitch));
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);

  Eigen::Matrix3d R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = forward.transpose();

  const double focal = ranges.focal_px.sample(rng);
  const Range offset{-ranges.principal_offset_frac, ranges.principal_offset_frac};
  const Vec2 pp(0.5 * ranges.image_w + offset.sample(rng) * ranges.image_w,
                0.5 * ranges.image_h + offset.sample(rng) * ranges.image_h);
  return CameraModel::from_intrinsics(focal, pp, R, center);
}

ScenarioDraw sample_scenario(std::mt19937_64& rng, const ScenarioConfig& cfg) {
  std::discrete_distribution<int> pick(cfg.kind_weights.begin(), cfg.kind_weights.end());
  return sample_scenario(rng, cfg, static_cast<ScenarioKind>(pick(rng)));
}

ScenarioDraw sample_scenario(std::mt19937_64& rng, const ScenarioConfig& cfg, ScenarioKind kind) {
  const PhysicsParams& phys = cfg.physics;
  const double net_clear = phys.contact_height() + phys.table.net_height;
  const double net_half_span = phys.table.half_width() + phys.table.net_overhang;

  for (int attempt = 0; attempt < kMaxKindAttempts; ++attempt) {
    const bool serve = kind == ScenarioKind::kServe;
    bool mirrored = kind == ScenarioKind::kRallyRight;
    if (kind == ScenarioKind::kServe || kind == ScenarioKind::kFaultNet ||
        kind == ScenarioKind::kFaultLong)
      mirrored = std::bernoulli_distribution(0.5)(rng);

    Vec3 start;
    double speed;
    double elevation;
    if (serve) {
      start = Vec3(cfg.serve_start_x.sample(rng), cfg.serve_start_y.sample(rng),
                   cfg.serve_start_z.sample(rng));
      speed = cfg.serve_speed.sample(rng);
      elevation = cfg.serve_elevation_deg.sample(rng) * kDegToRad;
    } else {
      start = Vec3(cfg.rally_start_x.sample(rng), cfg.rally_start_y.sample(rng),
                   cfg.rally_start_z.sample(rng));
      speed = cfg.rally_speed.sample(rng);
      elevation = cfg.rally_elevation_deg.sample(rng) * kDegToRad;
    }
    // Aim roughly across the table: heading relative to the line towards the
    // opposite half's center line.
    const double heading = cfg.heading_deg.sample(rng) * kDegToRad - 0.25 * std::atan2(start.y(), 2.0);
    const Vec3 dir_h(std::cos(heading), std::sin(heading), 0.0);

    BallState init;
    init.r = start;
    init.v = speed * Vec3(std::cos(elevation) * dir_h.x(), std::cos(elevation) * dir_h.y(),
                          std::sin(elevation));
    init.omega = sample_spin(rng, cfg, dir_h);

    const double fps = cfg.fps.sample(rng);
    const double duration = cfg.duration_s.sample(rng);

    // Classify the outcome on a dense grid (shot frame: travelling towards +x).
    const auto n_dense = static_cast<std::size_t>(std::floor(duration / kDenseStep)) + 1;
    std::vector<double> dense_times(n_dense);
    for (std::size_t i = 0; i < n_dense; ++i) dense_times[i] = static_cast<double>(i) * kDenseStep;
    const SimulationResult sim = simulate(init, phys, dense_times);
    const auto crossing = find_net_crossing(sim.states, kDenseStep);
    if (!crossing) continue;

    std::size_t bounces_before = 0;
    std::size_t bounces_before_own = 0;
    for (const auto& b : sim.bounces) {
      if (b.time < crossing->time) {
        ++bounces_before;
        if (b.after.r.x() < 0.0) ++bounces_before_own;
      }
    }
    const BounceEvent* first_after = nullptr;
    std::size_t bounces_after = 0;
    for (const auto& b : sim.bounces) {
      if (b.time >= crossing->time) {
        if (!first_after) first_after = &b;
        ++bounces_after;
      }
    }
    const bool clears = crossing->position.z() > net_clear;
    const bool hits_net = !clears && crossing->position.z() >= phys.contact_height() &&
                          std::abs(crossing->position.y()) <= net_half_span;

    double end_time = duration;
    bool ok = false;
    switch (kind) {
      case ScenarioKind::kRallyLeft:
      case ScenarioKind::kRallyRight:
        ok = bounces_before == 0 && clears && first_after != nullptr && first_after->after.r.x() > 0.0;
        break;
      case ScenarioKind::kServe:
        ok = bounces_before == 1 && bounces_before_own == 1 && clears && first_after != nullptr &&
             first_after->after.r.x() > 0.0;
        break;
      case ScenarioKind::kFaultNet:
        ok = bounces_before == 0 && hits_net;
        end_time = crossing->time;
        break;
      case ScenarioKind::kFaultLong:
        ok = bounces_before == 0 && clears && bounces_after == 0;
        break;
    }
    if (!ok) continue;
    if (sim.reached_floor)
      end_time = std::min(end_time, static_cast<double>(sim.states.size() - 1) * kDenseStep);

    ScenarioDraw draw;
    draw.kind = kind;
    draw.fps = fps;
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) / fps;
      if (t > end_time) break;
      draw.sample_times.push_back(t);
    }
    if (draw.sample_times.size() < 2) continue;

    draw.init = mirrored ? mirror(init) : init;
    draw.camera = sample_camera(rng, cfg.camera, phys.table);
    return draw;
  }
  throw DataError("sample_scenario: could not realise scenario '" + std::string(to_string(kind)) +
                  "' with the configured ranges");
}

std::optional<SynthSample> render_sample(const BallState& init, const CameraModel& camera,
                                         std::span<const double> times, int image_w, int image_h,
                                         const PhysicsParams& physics) {
  const std::vector<BallState> states = simulate_trajectory(init, physics, times);
  if (states.size() < 2) return std::nullopt;

  auto in_image = [&](const Vec2& p) {
    return p.x() >= 0.0 && p.x() < image_w && p.y() >= 0.0 && p.y() < image_h;
  };

  SynthSample s;
  s.image_w = image_w;
  s.image_h = image_h;
  s.camera = camera;
  s.truth_spin = init.omega;
  s.truth_v0 = init.v;
  const std::size_t n = states.size();
  s.times_s.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n));
  s.ball2d_px.reserve(n);
  s.truth_r3d_m.reserve(n);
  for (const auto& st : states) {
    if (!(camera.depth(st.r) > 0.0)) return std::nullopt;
    const Vec2 px = project(camera, st.r);
    if (!in_image(px)) return std::nullopt;
    s.ball2d_px.push_back(px);
    s.truth_r3d_m.push_back(st.r);
  }
  s.ball_valid.assign(n, true);

  const auto kp3 = table_keypoints_3d(physics.table);
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
    if (!(camera.depth(kp3[k]) > 0.0)) continue;
    const Vec2 px = project(camera, kp3[k]);
    if (in_image(px)) s.keypoints.points[k] = px;
  }
  return s;
}

SynthSample generate_sample(const ScenarioConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, index));
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const ScenarioDraw draw = sample_scenario(rng, cfg);
    auto sample = render_sample(draw.init, draw.camera, draw.sample_times, cfg.camera.image_w,
                                cfg.camera.image_h, cfg.physics);
    if (!sample) continue;
    sample->id = static_cast<std::int64_t>(index);
    sample->fps = draw.fps;
    sample->scenario = draw.kind;
    return *std::move(sample);
  }
  throw DataError("generate: trajectory " + std::to_string(index) + " left the image in " +
                  std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<SynthSample> generate_dataset(const ScenarioConfig& cfg, std::size_t n_trajectories,
                                          std::uint64_t seed) {
  if (n_trajectories < 1) throw ConfigError("generate: n_trajectories must be >= 1");
  cfg.validate();
  std::vector<SynthSample> out;
  out.reserve(n_trajectories);
  for (std::size_t i = 0; i < n_trajectories; ++i) out.push_back(generate_sample(cfg, seed, i));
  return out;
}

}  // namespace ttlift
