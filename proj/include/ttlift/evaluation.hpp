#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ttlift/metrics.hpp"
#include "ttlift/sample.hpp"
#include "ttlift/uplift/model.hpp"

namespace ttlift {

/// Model output mapped back onto the sample's frames.
struct Prediction {
  std::vector<std::size_t> frame_index;  // sample frames that were fed (valid ones)
  std::vector<Vec3> positions;           // one per fed frame
  Vec3 spin = Vec3::Zero();
};

template <typename S>
Prediction predict(const uplift::UpliftModel<S>& model, const SynthSample& sample) {
  Prediction p;
  const uplift::UpliftInput in = uplift::make_input(sample, &p.frame_index);
  uplift::UpliftOutput out = model.forward(in);
  p.positions = std::move(out.positions);
  p.spin = out.spin;
  return p;
}

/// Initial velocity estimate from a (predicted) trajectory: per-axis linear
/// fit over the frames within `window_s` of the first one (at least two).
Vec3 estimate_initial_velocity(const std::vector<Vec3>& positions, const std::vector<double>& times_s,
                               double window_s = 0.15);

struct TrajectoryResult {
  std::int64_t id = 0;
  std::size_t n_frames = 0;  // valid frames fed to the model
  double m2dre_px = 0.0;
  SpinClass spin_truth = SpinClass::kBackspin;
  SpinClass spin_pred = SpinClass::kBackspin;
  Vec3 spin_pred_rad_s = Vec3::Zero();
};

struct EvalSummary {
  std::size_t trajectories = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double m2dre_px = 0.0;
};

struct EvalReport {
  std::string transform = "none";
  std::vector<TrajectoryResult> rows;
  EvalSummary summary;

  /// Per-trajectory rows followed by a '#'-prefixed aggregate block.
  std::string to_csv() const;
};

/// Scores one prediction against the sample's valid 2D detections and truth
/// spin (spin label of the prediction uses its own estimated initial velocity).
TrajectoryResult score_prediction(const SynthSample& sample, const Prediction& pred);

EvalSummary summarize(const std::vector<TrajectoryResult>& rows);

template <typename S>
EvalReport evaluate(const uplift::UpliftModel<S>& model, const std::vector<SynthSample>& samples,
                    const EvalTransform& transform = {}) {
  if (samples.empty()) throw ContractError("evaluate: empty dataset");
  EvalReport report;
  report.transform = std::string(to_string(transform.kind));
  for (const auto& s : samples) {
    const SynthSample t = apply_eval_transform(s, transform);
    report.rows.push_back(score_prediction(t, predict(model, t)));
  }
  report.summary = summarize(report.rows);
  return report;
}

/// Ground truth fed through the same scoring path (m2DRE must be 0).
EvalReport evaluate_oracle(const std::vector<SynthSample>& samples, const EvalTransform& transform = {});

}  // namespace ttlift
