#include "ttlift/metrics.hpp"

#include <cmath>
#include <random>
#include <string>

namespace ttlift {

std::string_view to_string(SpinClass c) {
  return c == SpinClass::kTopspin ? "topspin" : "backspin";
}

double acc_at_px(std::span<const Vec2> preds, std::span<const Vec2> truths, double x_px) {
  if (preds.size() != truths.size()) throw ContractError("acc_at_px: length mismatch");
  if (preds.empty()) throw ContractError("acc_at_px: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if ((preds[i] - truths[i]).norm() <= x_px) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double two_d_reprojection_error(std::span<const Vec3> pred_traj, const CameraModel& camera,
                                std::span<const Vec2> truth2d) {
  if (pred_traj.size() != truth2d.size()) throw ContractError("2DRE: length mismatch");
  if (pred_traj.empty()) throw ContractError("2DRE: empty trajectory");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_traj.size(); ++i)
    sum += (project(camera, pred_traj[i]) - truth2d[i]).norm();
  return sum / static_cast<double>(pred_traj.size());
}

double mean_2dre(std::span<const double> per_trajectory) {
  if (per_trajectory.empty()) throw ContractError("m2DRE: no trajectories");
  double sum = 0.0;
  for (double v : per_trajectory) sum += v;
  return sum / static_cast<double>(per_trajectory.size());
}

SpinClass spin_class(const Vec3& spin_world, const Vec3& v0_world) {
  const Vec3 horizontal(v0_world.x(), v0_world.y(), 0.0);
  const double norm = horizontal.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NumericalError("spin_class: initial velocity has no horizontal component");
  const Vec3 x_loc = horizontal / norm;
  const Vec3 y_loc = Vec3::UnitZ().cross(x_loc);
  return spin_world.dot(y_loc) > 0.0 ? SpinClass::kTopspin : SpinClass::kBackspin;
}

ClassificationScores classification_scores(std::span<const SpinClass> truths,
                                           std::span<const SpinClass> preds) {
  if (truths.size() != preds.size()) throw ContractError("classification_scores: length mismatch");
  if (truths.empty()) throw ContractError("classification_scores: empty input");

  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (truths[i] == preds[i]) ++correct;

  double f1_sum = 0.0;
  for (SpinClass c : {SpinClass::kTopspin, SpinClass::kBackspin}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      const bool t = truths[i] == c;
      const bool p = preds[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp + fp + fn == 0) {
      f1_sum += 1.0;
    } else {
      f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(truths.size()), 0.5 * f1_sum};
}

EvalTransform::Kind EvalTransform::kind_from_string(std::string_view name) {
  if (name == "none") return Kind::kNone;
  if (name == "half-fps") return Kind::kHalfFps;
  if (name == "missing" || name == "missing-detections") return Kind::kMissingDetections;
  if (name == "both") return Kind::kBoth;
  throw ConfigError("unknown transform '" + std::string(name) + "'");
}

std::string_view to_string(EvalTransform::Kind kind) {
  switch (kind) {
    case EvalTransform::Kind::kNone: return "none";
    case EvalTransform::Kind::kHalfFps: return "half-fps";
    case EvalTransform::Kind::kMissingDetections: return "missing-detections";
    case EvalTransform::Kind::kBoth: return "both";
  }
  return "none";
}

SynthSample apply_eval_transform(const SynthSample& sample, const EvalTransform& t) {
  if (!(t.frame_drop_prob >= 0.0 && t.frame_drop_prob < 1.0) ||
      !(t.keypoint_drop_prob >= 0.0 && t.keypoint_drop_prob < 1.0))
    throw ContractError("eval transform: probabilities must lie in [0, 1)");

  SynthSample out = sample;
  const bool half = t.kind == EvalTransform::Kind::kHalfFps || t.kind == EvalTransform::Kind::kBoth;
  const bool missing = t.kind == EvalTransform::Kind::kMissingDetections ||
                       t.kind == EvalTransform::Kind::kBoth;

  if (half) {
    for (std::size_t i = 1; i < out.size(); i += 2) out.ball_valid[i] = false;
  }
  if (!missing) return out;

  const std::vector<bool> base = out.ball_valid;
  const std::size_t base_valid = static_cast<std::size_t>(std::count(base.begin(), base.end(), true));
  std::mt19937_64 rng(derive_seed(t.seed, static_cast<std::uint64_t>(sample.id)));
  std::bernoulli_distribution drop_frame(t.frame_drop_prob);
  std::bernoulli_distribution drop_kp(t.keypoint_drop_prob);

  for (int attempt = 0;; ++attempt) {
    out.ball_valid = base;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (drop_frame(rng)) out.ball_valid[i] = false;
    if (out.valid_count() >= 2 || base_valid < 2 || attempt > 1000) break;
  }
  for (auto& p : out.keypoints.points)
    if (drop_kp(rng)) p.reset();
  return out;
}

}  // namespace ttlift
