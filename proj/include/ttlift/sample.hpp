#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttlift/ballistics.hpp"
#include "ttlift/camera.hpp"

namespace ttlift {

enum class ScenarioKind { kRallyLeft, kRallyRight, kServe, kFaultNet, kFaultLong };

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(std::string_view name);

/// One synthetic (or detected) trajectory.
struct SynthSample {
  std::int64_t id = 0;
  std::vector<double> times_s;
  std::vector<Vec2> ball2d_px;
  std::vector<bool> ball_valid;
  TableKeypointSet keypoints;
  CameraModel camera;
  std::vector<Vec3> truth_r3d_m;
  Vec3 truth_spin = Vec3::Zero();  // omega(t_0), rad/s, world frame
  Vec3 truth_v0 = Vec3::Zero();    // v(t_0), m/s; lets the flight be re-simulated
  int image_w = 1920;
  int image_h = 1080;
  double fps = 0.0;
  ScenarioKind scenario = ScenarioKind::kRallyLeft;

  /// Optional per-frame keypoint detections (used by the detection filter).
  std::vector<TableKeypointSet> keypoint_frames;

  std::size_t size() const { return times_s.size(); }
  std::size_t valid_count() const;

  /// Initial state reconstructed from the ground truth.
  BallState initial_state() const { return {truth_r3d_m.front(), truth_v0, truth_spin}; }

  /// Throws DataError if sizes disagree or timestamps are not increasing.
  void validate() const;
};

/// Serializes one sample as a single JSON object (no trailing newline).
std::string to_json_line(const SynthSample& sample);
SynthSample from_json_line(std::string_view line);

void write_jsonl(std::ostream& out, const std::vector<SynthSample>& samples);
std::vector<SynthSample> read_jsonl(std::istream& in);

/// File helpers; write_jsonl_file writes to a temporary and renames.
void write_jsonl_file(const std::string& path, const std::vector<SynthSample>& samples);
std::vector<SynthSample> read_jsonl_file(const std::string& path);

/// Writes `contents` to `path` atomically (temporary file + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace ttlift
