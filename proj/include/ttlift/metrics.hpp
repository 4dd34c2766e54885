#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ttlift/camera.hpp"
#include "ttlift/common.hpp"
#include "ttlift/sample.hpp"

namespace ttlift {

enum class SpinClass { kTopspin, kBackspin };

std::string_view to_string(SpinClass c);

/// Fraction of predictions within x_px of the truth (inclusive).
double acc_at_px(std::span<const Vec2> preds, std::span<const Vec2> truths, double x_px);

/// Mean over frames of |project(camera, r3d) - truth2d|. Throws
/// BehindCameraError if a prediction projects behind the camera.
double two_d_reprojection_error(std::span<const Vec3> pred_traj, const CameraModel& camera,
                                std::span<const Vec2> truth2d);

/// Dataset score: mean of per-trajectory 2DRE values.
double mean_2dre(std::span<const double> per_trajectory);

/// Local ball frame: x along the horizontal part of v0, z up, y = z x x.
/// Topspin iff spin . y_loc > 0 (zero counts as backspin).
SpinClass spin_class(const Vec3& spin_world, const Vec3& v0_world);

struct ClassificationScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Accuracy and unweighted mean of the two per-class F1 scores. A class that
/// occurs in neither truth nor prediction scores F1 = 1; a class with zero
/// precision + recall scores 0.
ClassificationScores classification_scores(std::span<const SpinClass> truths,
                                           std::span<const SpinClass> preds);

struct EvalTransform {
  enum class Kind { kNone, kHalfFps, kMissingDetections, kBoth };
  Kind kind = Kind::kNone;
  double frame_drop_prob = 0.10;
  double keypoint_drop_prob = 0.10;
  std::uint64_t seed = 0;

  static Kind kind_from_string(std::string_view name);
};

std::string_view to_string(EvalTransform::Kind kind);

/// Half FPS invalidates every second frame starting at index 1; missing
/// detections invalidates frames and removes keypoints independently. The
/// random part depends only on (t.seed, sample.id) and is re-drawn until at
/// least two valid frames remain.
SynthSample apply_eval_transform(const SynthSample& sample, const EvalTransform& t);

}  // namespace ttlift
