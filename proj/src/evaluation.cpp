#include "ttlift/evaluation.hpp"

#include <iomanip>
#include <sstream>

namespace ttlift {

Vec3 estimate_initial_velocity(const std::vector<Vec3>& positions, const std::vector<double>& times_s,
                               double window_s) {
  if (positions.size() != times_s.size() || positions.size() < 2)
    throw ContractError("estimate_initial_velocity: need >= 2 matching frames");
  std::size_t n = 2;
  while (n < positions.size() && times_s[n] - times_s[0] <= window_s) ++n;
  double mt = 0.0;
  Vec3 mp = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mt += times_s[i];
    mp += positions[i];
  }
  mt /= static_cast<double>(n);
  mp /= static_cast<double>(n);
  double stt = 0.0;
  Vec3 stp = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    stt += (times_s[i] - mt) * (times_s[i] - mt);
    stp += (times_s[i] - mt) * (positions[i] - mp);
  }
  return stp / stt;
}

TrajectoryResult score_prediction(const SynthSample& sample, const Prediction& pred) {
  if (pred.positions.size() != pred.frame_index.size() || pred.positions.size() < 2)
    throw ContractError("score_prediction: malformed prediction");
  TrajectoryResult r;
  r.id = sample.id;
  r.n_frames = pred.positions.size();
  std::vector<Vec2> truth2d;
  std::vector<double> times;
  for (std::size_t i : pred.frame_index) {
    truth2d.push_back(sample.ball2d_px[i]);
    times.push_back(sample.times_s[i]);
  }
  r.m2dre_px = two_d_reprojection_error(pred.positions, sample.camera, truth2d);
  r.spin_truth = spin_class(sample.truth_spin, sample.truth_v0);
  r.spin_pred_rad_s = pred.spin;
  const Vec3 v0 = estimate_initial_velocity(pred.positions, times);
  try {
    r.spin_pred = spin_class(pred.spin, v0);
  } catch (const NumericalError&) {
    r.spin_pred = SpinClass::kBackspin;  // no horizontal motion: undefined frame, "otherwise" branch
  }
  return r;
}

EvalSummary summarize(const std::vector<TrajectoryResult>& rows) {
  if (rows.empty()) throw ContractError("summarize: no trajectories");
  std::vector<SpinClass> truths, preds;
  std::vector<double> errors;
  for (const auto& r : rows) {
    truths.push_back(r.spin_truth);
    preds.push_back(r.spin_pred);
    errors.push_back(r.m2dre_px);
  }
  const ClassificationScores scores = classification_scores(truths, preds);
  return {rows.size(), scores.accuracy, scores.macro_f1, mean_2dre(errors)};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "id,n_frames,m2dre_px,spin_truth,spin_pred\n";
  for (const auto& r : rows)
    out << r.id << ',' << r.n_frames << ',' << r.m2dre_px << ',' << to_string(r.spin_truth) << ','
        << to_string(r.spin_pred) << '\n';
  out << "# transform," << transform << '\n';
  out << "# trajectories," << summary.trajectories << '\n';
  out << "# acc," << summary.accuracy << '\n';
  out << "# f1," << summary.macro_f1 << '\n';
  out << "# m2dre_px," << summary.m2dre_px << '\n';
  return out.str();
}

EvalReport evaluate_oracle(const std::vector<SynthSample>& samples, const EvalTransform& transform) {
  if (samples.empty()) throw ContractError("evaluate: empty dataset");
  EvalReport report;
  report.transform = std::string(to_string(transform.kind));
  for (const auto& s : samples) {
    const SynthSample t = apply_eval_transform(s, transform);
    Prediction p;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!t.ball_valid[i]) continue;
      p.frame_index.push_back(i);
      p.positions.push_back(t.truth_r3d_m[i]);
    }
    p.spin = t.truth_spin;
    report.rows.push_back(score_prediction(t, p));
  }
  report.summary = summarize(report.rows);
  return report;
}

}  // namespace ttlift
