// Command-line front end: generate, train, eval, plot, filter, calibrate.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttlift/camera.hpp"
#include "ttlift/evaluation.hpp"
#include "ttlift/kv_config.hpp"
#include "ttlift/perception.hpp"
#include "ttlift/sample.hpp"
#include "ttlift/svg_plot.hpp"
#include "ttlift/synthesis.hpp"
#include "ttlift/training.hpp"
#include "ttlift/uplift/checkpoint.hpp"

namespace {

using namespace ttlift;
using nlohmann::json;

constexpr std::size_t kPaperTrajectories = 140000;

enum ExitCode { kOk = 0, kConfigExit = 2, kDataExit = 3, kNumericalExit = 4 };

/// defaults < config file < --set flags
KvMap merged_settings(const std::string& config_path, const std::vector<std::string>& sets) {
  KvMap kv = config_path.empty() ? KvMap{} : read_kv_file(config_path);
  for (const auto& s : sets) {
    auto [k, v] = parse_kv_assignment(s);
    kv[k] = v;
  }
  return kv;
}

void bind_range(KvBinder& kv, const std::string& prefix, Range& r) {
  kv.bind(prefix + "_min", r.min);
  kv.bind(prefix + "_max", r.max);
}

void bind(KvBinder& kv, ScenarioConfig& c) {
  kv.bind("weight_rally_left", c.kind_weights[0]);
  kv.bind("weight_rally_right", c.kind_weights[1]);
  kv.bind("weight_serve", c.kind_weights[2]);
  kv.bind("weight_fault_net", c.kind_weights[3]);
  kv.bind("weight_fault_long", c.kind_weights[4]);
  bind_range(kv, "rally_speed", c.rally_speed);
  bind_range(kv, "rally_elevation_deg", c.rally_elevation_deg);
  bind_range(kv, "serve_speed", c.serve_speed);
  bind_range(kv, "serve_elevation_deg", c.serve_elevation_deg);
  bind_range(kv, "heading_deg", c.heading_deg);
  bind_range(kv, "spin", c.spin_magnitude);
  kv.bind("spin_side_ratio", c.spin_side_ratio);
  kv.bind("spin_cork_ratio", c.spin_cork_ratio);
  bind_range(kv, "fps", c.fps);
  bind_range(kv, "duration_s", c.duration_s);
  bind_range(kv, "camera_distance_m", c.camera.distance_m);
  bind_range(kv, "camera_height_m", c.camera.height_m);
  bind_range(kv, "camera_azimuth_deg", c.camera.azimuth_deg);
  bind_range(kv, "focal_px", c.camera.focal_px);
  kv.bind("look_jitter_deg", c.camera.look_jitter_deg);
  kv.bind("principal_offset_frac", c.camera.principal_offset_frac);
  kv.bind("image_w", c.camera.image_w);
  kv.bind("image_h", c.camera.image_h);
  kv.bind("max_attempts", c.max_attempts);
  kv.bind("drag", c.physics.drag);
  kv.bind("magnus", c.physics.magnus);
  kv.bind("restitution", c.physics.restitution);
  kv.bind("tangential_retention", c.physics.tangential_retention);
  kv.bind("spin_coupling", c.physics.spin_coupling);
  kv.bind("spin_retention", c.physics.spin_retention);
}

json range_json(const Range& r) { return json::array({r.min, r.max}); }

json scenario_json(const ScenarioConfig& c) {
  return {{"kind_weights", c.kind_weights},
          {"rally_start", {range_json(c.rally_start_x), range_json(c.rally_start_y), range_json(c.rally_start_z)}},
          {"rally_speed", range_json(c.rally_speed)},
          {"rally_elevation_deg", range_json(c.rally_elevation_deg)},
          {"serve_start", {range_json(c.serve_start_x), range_json(c.serve_start_y), range_json(c.serve_start_z)}},
          {"serve_speed", range_json(c.serve_speed)},
          {"serve_elevation_deg", range_json(c.serve_elevation_deg)},
          {"heading_deg", range_json(c.heading_deg)},
          {"spin", range_json(c.spin_magnitude)},
          {"spin_side_ratio", c.spin_side_ratio},
          {"spin_cork_ratio", c.spin_cork_ratio},
          {"fps", range_json(c.fps)},
          {"duration_s", range_json(c.duration_s)},
          {"camera",
           {{"distance_m", range_json(c.camera.distance_m)},
            {"height_m", range_json(c.camera.height_m)},
            {"azimuth_deg", range_json(c.camera.azimuth_deg)},
            {"focal_px", range_json(c.camera.focal_px)},
            {"look_jitter_deg", c.camera.look_jitter_deg},
            {"principal_offset_frac", c.camera.principal_offset_frac},
            {"image", {c.camera.image_w, c.camera.image_h}}}},
          {"physics",
           {{"drag", c.physics.drag},
            {"magnus", c.physics.magnus},
            {"restitution", c.physics.restitution},
            {"tangential_retention", c.physics.tangential_retention},
            {"spin_coupling", c.physics.spin_coupling},
            {"spin_retention", c.physics.spin_retention}}},
          {"max_attempts", c.max_attempts}};
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
  std::string preset;
  bool confirm_long_run = false;
  std::string config;
  std::vector<std::string> sets;
};

int cmd_generate(const GenerateArgs& a) {
  ScenarioConfig cfg;
  std::size_t n = a.n;
  if (!a.preset.empty()) {
    if (a.preset != "paper") throw ConfigError("generate: unknown preset '" + a.preset + "'");
    cfg = ScenarioConfig::paper_preset();
    if (n == 0) n = kPaperTrajectories;
    if (!a.confirm_long_run)
      throw ConfigError("generate: --preset paper requests " + std::to_string(n) +
                        " trajectories; pass --yes-long-run to confirm");
  }
  KvBinder kv(merged_settings(a.config, a.sets));
  bind(kv, cfg);
  kv.reject_unknown();
  if (n < 1) throw ConfigError("generate: --n must be >= 1");
  cfg.validate();

  const std::vector<SynthSample> samples = generate_dataset(cfg, n, a.seed);
  std::ostringstream body;
  write_jsonl(body, samples);
  write_file_atomic(a.out, body.str());

  std::size_t positions = 0;
  std::map<std::string, std::size_t> kinds;
  for (const auto& s : samples) {
    positions += s.size();
    ++kinds[std::string(to_string(s.scenario))];
  }
  const json config = scenario_json(cfg);
  const json manifest = {{"seed", a.seed},
                         {"trajectories", samples.size()},
                         {"ball_positions", positions},
                         {"scenarios", kinds},
                         {"config_hash", fnv1a_hex(config.dump())},
                         {"config", config},
                         {"output", std::filesystem::path(a.out).filename().string()}};
  const std::string manifest_path = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  std::cout << "generated " << samples.size() << " trajectories, " << positions << " ball positions -> " << a.out
            << "\n";
  return kOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string train;
  std::string val;
  std::string out;
  std::string history;
  std::string state;
  std::string resume;
  std::string preset;
  std::string config;
  std::vector<std::string> sets;
  int stop_after = 0;  // 0 = run to the configured epoch count
};

int cmd_train(const TrainArgs& a) {
  uplift::ModelConfig mcfg;
  TrainConfig tcfg;
  if (a.preset == "smoke") {
    mcfg.d = 16;
    mcfg.layers = 6;
    mcfg.heads = 2;
    tcfg.epochs = 5;
    tcfg.batch_size = 4;
    tcfg.learning_rate = 1e-3;
  } else if (a.preset == "desk") {
    // Sized for 5000 trajectories in well under two hours on one core.
    mcfg.d = 64;
    mcfg.layers = 8;
    tcfg.epochs = 64;
    tcfg.batch_size = 16;
    tcfg.learning_rate = 2e-3;
    tcfg.warmup_steps = 300;
    tcfg.min_lr_ratio = 0.02;
    tcfg.grad_clip = 1.0;
  } else if (!a.preset.empty()) {
    throw ConfigError("train: unknown preset '" + a.preset + "'");
  }
  KvBinder kv(merged_settings(a.config, a.sets));
  bind(kv, mcfg);
  bind(kv, tcfg);
  kv.reject_unknown();
  mcfg.validate();
  tcfg.validate();

  const std::vector<SynthSample> train_set = read_jsonl_file(a.train);
  const std::vector<SynthSample> val_set = read_jsonl_file(a.val.empty() ? a.train : a.val);
  if (train_set.empty() || val_set.empty()) throw DataError("train: empty dataset");

  Trainer trainer = a.resume.empty() ? Trainer(mcfg, tcfg)
                                     : Trainer::resume(uplift::load_checkpoint(a.resume), tcfg);
  const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
  std::cout << "epoch,loss,f1,m2dre_px,acc,seconds" << std::endl;
  try {
    for (int done = 0; trainer.epoch() < tcfg.epochs && (a.stop_after <= 0 || done < a.stop_after); ++done) {
      const EpochRecord& e = trainer.run_epoch(train_set, val_set);
      std::cout << e.epoch << ',' << e.loss << ',';
      if (e.validated) std::cout << e.f1 << ',' << e.m2dre_px << ',' << e.accuracy;
      else std::cout << ",,";
      std::cout << ',' << e.seconds << std::endl;
      write_file_atomic(history_path, trainer.history().to_csv());
      if (!a.state.empty()) uplift::save_checkpoint(a.state, trainer.state_checkpoint());
    }
  } catch (const TrainingError& e) {
    write_file_atomic(history_path, e.history().to_csv());
    throw;
  }
  uplift::save_checkpoint(a.out, trainer.best_checkpoint());
  std::cout << "selected epoch " << trainer.best_epoch() << " -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string transform = "none";
  std::uint64_t seed = 0;
  bool oracle = false;
};

int cmd_eval(const EvalArgs& a) {
  EvalTransform t;
  t.kind = EvalTransform::kind_from_string(a.transform);
  t.seed = a.seed;
  const std::vector<SynthSample> samples = read_jsonl_file(a.data);
  if (samples.empty()) throw DataError("eval: empty dataset");
  EvalReport report;
  if (a.oracle) {
    report = evaluate_oracle(samples, t);
  } else {
    if (a.model.empty()) throw ConfigError("eval: --model is required unless --oracle is given");
    const auto model = uplift::model_from_checkpoint<float>(uplift::load_checkpoint(a.model));
    report = evaluate(model, samples, t);
  }
  const std::string csv = report.to_csv();
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_file_atomic(a.out, csv);
    std::cout << "transform=" << report.transform << " acc=" << report.summary.accuracy
              << " f1=" << report.summary.macro_f1 << " m2dre_px=" << report.summary.m2dre_px << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------- plot

struct PlotArgs {
  std::string data;
  std::string model;
  std::string out;
  std::size_t index = 0;
  bool oracle = false;
};

int cmd_plot(const PlotArgs& a) {
  const std::vector<SynthSample> samples = read_jsonl_file(a.data);
  if (a.index >= samples.size())
    throw DataError("plot: index " + std::to_string(a.index) + " out of range (" + std::to_string(samples.size()) + " samples)");
  const SynthSample& s = samples[a.index];
  std::vector<Vec3> predicted;
  if (a.oracle) {
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.ball_valid[i]) predicted.push_back(s.truth_r3d_m[i]);
  } else if (!a.model.empty()) {
    const auto model = uplift::model_from_checkpoint<float>(uplift::load_checkpoint(a.model));
    predicted = predict(model, s).positions;
  }
  write_file_atomic(a.out, render_overlay_svg(s, predicted));
  return kOk;
}

// -------------------------------------------------------------------- filter

struct FilterArgs {
  std::string primary;
  std::string auxiliary;
  std::string out;
  double ball_threshold = kBallAgreementPx;
  double keypoint_threshold = kKeypointAgreementPx;
  double eps = kDefaultDbscanEpsPx;
  int min_pts = 0;  // 0 = default rule
};

TableKeypointSet agree_keypoints(const TableKeypointSet& p, const TableKeypointSet& x, double threshold) {
  TableKeypointSet out;
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k)
    if (p.points[k] && x.points[k] && (*p.points[k] - *x.points[k]).norm() <= threshold) out.points[k] = p.points[k];
  return out;
}

SynthSample filter_sample(const SynthSample& p, const SynthSample& x, const FilterArgs& a) {
  if (p.times_s != x.times_s) throw DataError("filter: sample " + std::to_string(p.id) + ": timestamps differ");
  if (p.keypoint_frames.size() != x.keypoint_frames.size())
    throw DataError("filter: sample " + std::to_string(p.id) + ": keypoint frame counts differ");
  DetectionTrack tp, tx;
  tp.times_s = p.times_s;
  tx.times_s = x.times_s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    tp.points.push_back(p.ball_valid[i] ? std::optional<Vec2>(p.ball2d_px[i]) : std::nullopt);
    tx.points.push_back(x.ball_valid[i] ? std::optional<Vec2>(x.ball2d_px[i]) : std::nullopt);
  }
  const DetectionTrack kept = agreement_filter(tp, tx, a.ball_threshold);
  SynthSample out = p;
  for (std::size_t i = 0; i < out.size(); ++i) out.ball_valid[i] = kept.points[i].has_value();

  if (p.keypoint_frames.empty()) {
    out.keypoints = agree_keypoints(p.keypoints, x.keypoints, a.keypoint_threshold);
  } else {
    for (std::size_t f = 0; f < p.keypoint_frames.size(); ++f)
      out.keypoint_frames[f] = agree_keypoints(p.keypoint_frames[f], x.keypoint_frames[f], a.keypoint_threshold);
    const std::size_t min_pts =
        a.min_pts > 0 ? static_cast<std::size_t>(a.min_pts) : default_min_pts(out.keypoint_frames.size());
    out.keypoints = consolidate_keypoints(out.keypoint_frames, a.eps, min_pts);
  }
  return out;
}

int cmd_filter(const FilterArgs& a) {
  if (!(a.ball_threshold >= 0.0) || !(a.keypoint_threshold >= 0.0) || !(a.eps > 0.0))
    throw ConfigError("filter: thresholds must be >= 0 and eps > 0");
  const auto primary = read_jsonl_file(a.primary);
  const auto auxiliary = read_jsonl_file(a.auxiliary);
  if (primary.size() != auxiliary.size()) throw DataError("filter: the two inputs hold different sample counts");
  std::vector<SynthSample> out;
  std::size_t kept = 0, total = 0;
  for (std::size_t i = 0; i < primary.size(); ++i) {
    if (primary[i].id != auxiliary[i].id) throw DataError("filter: sample ids differ at line " + std::to_string(i + 1));
    out.push_back(filter_sample(primary[i], auxiliary[i], a));
    kept += out.back().valid_count();
    total += out.back().size();
  }
  write_jsonl_file(a.out, out);
  std::cout << "kept " << kept << " of " << total << " ball frames -> " << a.out << "\n";
  return kOk;
}

// ----------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string data;
  std::string out;
  std::size_t index = 0;
  double tau = 3.0;
  int iterations = 500;
  std::uint64_t seed = 0;
};

int cmd_calibrate(const CalibrateArgs& a) {
  if (!(a.tau > 0.0) || a.iterations < 1) throw ConfigError("calibrate: need tau > 0 and iterations >= 1");
  const auto samples = read_jsonl_file(a.data);
  if (a.index >= samples.size()) throw DataError("calibrate: index out of range");
  const SynthSample& s = samples[a.index];
  const auto world = table_keypoints_3d();
  std::vector<Correspondence> corr;
  std::vector<std::size_t> which;
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
    if (!s.keypoints.points[k]) continue;
    corr.push_back({world[k], *s.keypoints.points[k]});
    which.push_back(k);
  }
  if (corr.size() < 6)
    throw DataError("calibrate: " + std::to_string(corr.size()) + " keypoints available, need at least 6");
  std::mt19937_64 rng(a.seed);
  const RansacResult r = ransac_calibrate(corr, a.tau, a.iterations, rng);

  std::vector<json> errors(kNumTableKeypoints, nullptr);
  std::vector<json> inlier(kNumTableKeypoints, nullptr);
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double e = reprojection_error(r.camera, corr[i]);
    errors[which[i]] = e;
    inlier[which[i]] = static_cast<bool>(r.inliers[i]);
    sum += e;
  }
  const json out = {{"camera_P", r.camera.to_row_major()},
                    {"keypoint_error_px", errors},
                    {"keypoint_inlier", inlier},
                    {"table_m2dre_px", sum / static_cast<double>(corr.size())},
                    {"tau_px", a.tau}};
  const std::string text = out.dump(2) + "\n";
  if (a.out.empty()) std::cout << text;
  else write_file_atomic(a.out, text);
  return kOk;
}

int report(int code, const char* kind, const std::exception& e) {
  std::cerr << "error: " << kind << ": " << e.what() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table tennis 2D-to-3D uplifting toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic JSONL dataset and manifest");
  g->add_option("--n", gen.n, "Number of trajectories");
  g->add_option("--seed", gen.seed, "Base seed");
  g->add_option("--out", gen.out, "Output JSONL path")->required();
  g->add_option("--manifest", gen.manifest, "Manifest path (default: <out>.manifest.json)");
  g->add_option("--preset", gen.preset, "Named preset: paper (140000 trajectories)");
  g->add_flag("--yes-long-run", gen.confirm_long_run, "Confirm a long-running preset");
  g->add_option("--config", gen.config, "key=value config file");
  g->add_option("--set", gen.sets, "Override a config key (key=value), repeatable");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an uplifting model");
  t->add_option("--train", tr.train, "Training JSONL")->required();
  t->add_option("--val", tr.val, "Validation JSONL (default: training set)");
  t->add_option("--out", tr.out, "Selected-model checkpoint path")->required();
  t->add_option("--history", tr.history, "History CSV path (default: <out>.history.csv)");
  t->add_option("--state", tr.state, "Training-state checkpoint written after every epoch");
  t->add_option("--resume", tr.resume, "Resume from a training-state checkpoint");
  t->add_option("--preset", tr.preset, "Named preset: smoke, desk");
  t->add_option("--config", tr.config, "key=value config file");
  t->add_option("--set", tr.sets, "Override a config key (key=value), repeatable");
  t->add_option("--stop-after", tr.stop_after, "Stop after this many epochs (resume later with --resume)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--model", ev.model, "Checkpoint");
  e->add_option("--data", ev.data, "Dataset JSONL")->required();
  e->add_option("--out", ev.out, "Report CSV (default: stdout)");
  e->add_option("--transform", ev.transform, "none | half-fps | missing | both");
  e->add_option("--seed", ev.seed, "Seed of the missing-detections transform");
  e->add_flag("--oracle", ev.oracle, "Score the ground truth instead of a model");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render an SVG overlay for one trajectory");
  p->add_option("--data", pl.data, "Dataset JSONL")->required();
  p->add_option("--index", pl.index, "Sample index (0-based line number)");
  p->add_option("--model", pl.model, "Checkpoint for the predicted trajectory");
  p->add_flag("--oracle", pl.oracle, "Plot the ground-truth trajectory as the prediction");
  p->add_option("--out", pl.out, "SVG path")->required();

  FilterArgs fi;
  auto* f = app.add_subcommand("filter", "Agreement-filter two detection streams");
  f->add_option("--primary", fi.primary, "Primary detections JSONL")->required();
  f->add_option("--auxiliary", fi.auxiliary, "Auxiliary detections JSONL")->required();
  f->add_option("--out", fi.out, "Filtered JSONL")->required();
  f->add_option("--ball-threshold", fi.ball_threshold, "Ball agreement distance, px");
  f->add_option("--keypoint-threshold", fi.keypoint_threshold, "Keypoint agreement distance, px");
  f->add_option("--eps", fi.eps, "DBSCAN radius, px");
  f->add_option("--min-pts", fi.min_pts, "DBSCAN min points (default: max(4, 5% of frames))");

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "RANSAC camera calibration from table keypoints");
  c->add_option("--data", ca.data, "JSONL holding the keypoints")->required();
  c->add_option("--index", ca.index, "Sample index");
  c->add_option("--out", ca.out, "Camera JSON (default: stdout)");
  c->add_option("--tau", ca.tau, "Inlier threshold, px");
  c->add_option("--iterations", ca.iterations, "RANSAC iterations");
  c->add_option("--seed", ca.seed, "RANSAC seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: config: " << ex.what() << std::endl;
    return kConfigExit;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*p) return cmd_plot(pl);
    if (*f) return cmd_filter(fi);
    if (*c) return cmd_calibrate(ca);
  } catch (const ConfigError& ex) {
    return report(kConfigExit, "config", ex);
  } catch (const NumericalError& ex) {
    return report(kNumericalExit, "numerical", ex);
  } catch (const DataError& ex) {
    return report(kDataExit, "data", ex);
  } catch (const ContractError& ex) {
    return report(kDataExit, "data", ex);
  }
  return kOk;
}
