#pragma once

#include <array>
#include <random>
#include <vector>

#include "ttlift/ballistics.hpp"
#include "ttlift/camera.hpp"
#include "ttlift/sample.hpp"

namespace ttlift {

struct Range {
  double min = 0.0;
  double max = 0.0;

  double sample(std::mt19937_64& rng) const {
    return min == max ? min : std::uniform_real_distribution<double>(min, max)(rng);
  }
  bool contains(double x) const { return x >= min && x <= max; }
};

/// Broadcast-style camera placement. The azimuth is measured around the table
/// center from the -x axis (behind the left end line).
struct CameraRanges {
  Range distance_m{5.0, 12.0};  // horizontal distance to the table center
  Range height_m{1.5, 4.0};
  Range azimuth_deg{-40.0, 40.0};
  double look_jitter_deg = 5.0;
  Range focal_px{1000.0, 3000.0};
  double principal_offset_frac = 0.05;
  int image_w = 1920;
  int image_h = 1080;
};

/// Sampling ranges for all scenario kinds. Positions/angles are given for a
/// shot travelling towards +x; right-side shots are mirrored.
struct ScenarioConfig {
  // Relative frequency of rally-left, rally-right, serve, fault-net, fault-long.
  std::array<double, 5> kind_weights{0.3, 0.3, 0.2, 0.1, 0.1};

  Range rally_start_x{-2.0, -1.2};
  Range rally_start_y{-0.6, 0.6};
  Range rally_start_z{0.85, 1.3};
  Range rally_speed{6.0, 16.0};
  Range rally_elevation_deg{-6.0, 22.0};

  Range serve_start_x{-1.65, -1.3};
  Range serve_start_y{-0.6, 0.6};
  Range serve_start_z{0.8, 1.05};
  Range serve_speed{3.0, 8.0};
  Range serve_elevation_deg{-35.0, -5.0};

  Range heading_deg{-12.0, 12.0};

  Range spin_magnitude{0.0, 500.0};
  double spin_side_ratio = 0.6;  // max vertical-axis component relative to the top/back axis
  double spin_cork_ratio = 0.3;  // max travel-axis component relative to the top/back axis

  Range fps{40.0, 60.0};
  Range duration_s{0.7, 1.5};

  CameraRanges camera;
  PhysicsParams physics;

  int max_attempts = 100;  // visibility resampling budget per trajectory

  /// Throws ConfigError for empty/invalid ranges.
  void validate() const;

  /// Defaults used to mirror the large published corpus (140k trajectories).
  static ScenarioConfig paper_preset();
};

struct ScenarioDraw {
  BallState init;
  CameraModel camera;
  std::vector<double> sample_times;
  ScenarioKind kind = ScenarioKind::kRallyLeft;
  double fps = 0.0;
};

/// Draws one physically consistent scenario: the kind's outcome (clean rally,
/// serve, net hit, long ball) is guaranteed by rejection, and the frame times
/// are cut at the net hit or floor contact. Visibility is not checked here.
ScenarioDraw sample_scenario(std::mt19937_64& rng, const ScenarioConfig& cfg);

/// Same, for a fixed kind.
ScenarioDraw sample_scenario(std::mt19937_64& rng, const ScenarioConfig& cfg, ScenarioKind kind);

/// Random broadcast camera looking at the table.
CameraModel sample_camera(std::mt19937_64& rng, const CameraRanges& ranges,
                          const TableGeometry& table);

/// Projects a simulated trajectory and the table keypoints through `camera`.
/// Keypoints outside the image or behind the camera are marked unavailable.
/// Returns std::nullopt if any ball position leaves the image.
std::optional<SynthSample> render_sample(const BallState& init, const CameraModel& camera,
                                         std::span<const double> times, int image_w, int image_h,
                                         const PhysicsParams& physics);

/// Generates one trajectory with the per-trajectory seed derive_seed(seed, index).
SynthSample generate_sample(const ScenarioConfig& cfg, std::uint64_t seed, std::uint64_t index);

/// n independent trajectories; item i depends only on (cfg, seed, i).
std::vector<SynthSample> generate_dataset(const ScenarioConfig& cfg, std::size_t n_trajectories,
                                          std::uint64_t seed);

}  // namespace ttlift
