#include "ttlift/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ttlift/evaluation.hpp"

namespace ttlift {

using uplift::Checkpoint;
using uplift::Mat;
using uplift::Param;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(drop_prob_ball >= 0.0 && drop_prob_ball < 1.0)) throw ConfigError("train: drop_prob_ball must lie in [0, 1)");
  if (!(drop_prob_keypoint >= 0.0 && drop_prob_keypoint < 1.0))
    throw ConfigError("train: drop_prob_keypoint must lie in [0, 1)");
  if (!(fps_min > 0.0) || !(fps_min <= fps_max)) throw ConfigError("train: need 0 < fps_min <= fps_max");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) throw ConfigError("train: min_lr_ratio must lie in [0, 1]");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
  if (lambda_traj < 0.0 || lambda_spin < 0.0) throw ConfigError("train: loss weights must be >= 0");
  if (validate_every < 1) throw ConfigError("train: validate_every must be >= 1");
}

void bind(KvBinder& kv, TrainConfig& c) {
  kv.bind("learning_rate", c.learning_rate);
  kv.bind("batch_size", c.batch_size);
  kv.bind("epochs", c.epochs);
  kv.bind("seed", c.seed);
  kv.bind("drop_prob_ball", c.drop_prob_ball);
  kv.bind("drop_prob_keypoint", c.drop_prob_keypoint);
  kv.bind("fps_min", c.fps_min);
  kv.bind("fps_max", c.fps_max);
  kv.bind("augment", c.augment);
  kv.bind("adam_beta1", c.adam_beta1);
  kv.bind("adam_beta2", c.adam_beta2);
  kv.bind("adam_eps", c.adam_eps);
  kv.bind("weight_decay", c.weight_decay);
  kv.bind("warmup_steps", c.warmup_steps);
  kv.bind("min_lr_ratio", c.min_lr_ratio);
  kv.bind("grad_clip", c.grad_clip);
  kv.bind("lambda_traj", c.lambda_traj);
  kv.bind("lambda_spin", c.lambda_spin);
  kv.bind("validate_every", c.validate_every);
}

void bind(KvBinder& kv, uplift::ModelConfig& c) {
  kv.bind("d", c.d);
  kv.bind("layers", c.layers);
  kv.bind("heads", c.heads);
  kv.bind("embed_blocks", c.embed_blocks);
  kv.bind("spin_blocks", c.spin_blocks);
  kv.bind("mlp_ratio", c.mlp_ratio);
  kv.bind("delta_t", c.delta_t);
  kv.bind("rope_base", c.rope_base);
  kv.bind("spin_scale", c.spin_scale);
  kv.bind("init_seed", c.init_seed);
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "epoch,loss,f1,m2dre,accuracy\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',';
    if (e.validated) {
      out << e.f1 << ',' << e.m2dre_px << ',' << e.accuracy;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

int select_epoch(const TrainHistory& history) {
  int best = -1;
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    if (!e.validated) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    const auto& b = history.epochs[static_cast<std::size_t>(best)];
    if (e.f1 > b.f1 || (e.f1 == b.f1 && e.m2dre_px < b.m2dre_px)) best = static_cast<int>(i);
  }
  return best;
}

SynthSample augment_sample(const SynthSample& sample, std::mt19937_64& rng, const TrainConfig& cfg,
                           const PhysicsParams& physics) {
  SynthSample out = sample;
  const double fps = cfg.fps_min == cfg.fps_max
                         ? cfg.fps_min
                         : std::uniform_real_distribution<double>(cfg.fps_min, cfg.fps_max)(rng);
  if (fps != sample.fps && !sample.truth_r3d_m.empty()) {
    std::vector<double> times;
    const double end = sample.times_s.back();
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) / fps;
      if (t > end) break;
      times.push_back(t);
    }
    if (times.size() >= 2) {
      const std::vector<BallState> states = simulate_trajectory(sample.initial_state(), physics, times);
      if (states.size() >= 2) {
        const std::size_t n = states.size();
        out.times_s.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n));
        out.truth_r3d_m.clear();
        out.ball2d_px.clear();
        for (const auto& s : states) {
          out.truth_r3d_m.push_back(s.r);
          out.ball2d_px.push_back(project(sample.camera, s.r));
        }
        out.ball_valid.assign(n, true);
        out.fps = fps;
        out.keypoint_frames.clear();
      }
    }
  }

  const std::vector<bool> base = out.ball_valid;
  const auto base_valid = static_cast<std::size_t>(std::count(base.begin(), base.end(), true));
  if (cfg.drop_prob_ball > 0.0 && base_valid > 2) {
    std::bernoulli_distribution drop(cfg.drop_prob_ball);
    do {
      out.ball_valid = base;
      for (std::size_t i = 0; i < out.size(); ++i)
        if (out.ball_valid[i] && drop(rng)) out.ball_valid[i] = false;
    } while (out.valid_count() < 2);
  }
  if (cfg.drop_prob_keypoint > 0.0) {
    std::bernoulli_distribution drop(cfg.drop_prob_keypoint);
    for (auto& p : out.keypoints.points)
      if (p && drop(rng)) p.reset();
  }
  return out;
}

// ------------------------------------------------------------------ Trainer

namespace {

std::vector<Param<float>*> parameters(Trainer::Model& model) {
  std::vector<Param<float>*> out;
  model.visit([&](const std::string&, Param<float>& p) { out.push_back(&p); });
  return out;
}

std::vector<std::string> parameter_names(const Trainer::Model& model) {
  std::vector<std::string> out;
  model.visit([&](const std::string& name, const Param<float>&) { out.push_back(name); });
  return out;
}

nlohmann::json history_json(const TrainHistory& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : h.epochs)
    out.push_back({{"epoch", e.epoch},
                   {"loss", e.loss},
                   {"validated", e.validated},
                   {"f1", e.f1},
                   {"accuracy", e.accuracy},
                   {"m2dre_px", e.m2dre_px}});
  return out;
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  for (const auto& e : j) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.loss = e.at("loss").get<double>();
    r.validated = e.at("validated").get<bool>();
    r.f1 = e.at("f1").get<double>();
    r.accuracy = e.at("accuracy").get<double>();
    r.m2dre_px = e.at("m2dre_px").get<double>();
    h.epochs.push_back(r);
  }
  return h;
}

void true_positions_of(const SynthSample& s, std::vector<Vec3>& out) {
  out.clear();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.ball_valid[i]) out.push_back(s.truth_r3d_m[i]);
}

}  // namespace

Trainer::Trainer(const uplift::ModelConfig& model_cfg, const TrainConfig& cfg) : cfg_(cfg), model_(model_cfg) {
  cfg_.validate();
  for (Param<float>* p : parameters(model_)) {
    adam_m_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
    adam_v_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
  }
  best_ = model_;
}

Trainer Trainer::resume(const Checkpoint& state, const TrainConfig& cfg) {
  if (!state.meta.contains("trainer")) throw DataError("resume: checkpoint holds no training state");
  Trainer t(state.model, cfg);
  t.model_ = uplift::model_from_checkpoint<float>(state);
  const auto names = parameter_names(t.model_);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto* m = state.find("adam.m." + names[i]);
    const auto* v = state.find("adam.v." + names[i]);
    if (!m || !v) throw DataError("resume: missing optimizer state for '" + names[i] + "'");
    t.adam_m_[i] = m->value.cast<float>();
    t.adam_v_[i] = v->value.cast<float>();
  }
  const auto& meta = state.meta["trainer"];
  try {
    t.epoch_ = meta.at("epoch").get<int>();
    t.step_ = meta.at("step").get<std::int64_t>();
    t.best_epoch_ = meta.at("best_epoch").get<int>();
    t.history_ = history_from_json(meta.at("history"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("resume: bad training state: ") + e.what());
  }
  t.best_ = t.model_;
  if (t.best_epoch_ > 0) {
    t.best_.visit([&](const std::string& name, Param<float>& p) {
      const auto* b = state.find("best." + name);
      if (!b) throw DataError("resume: missing best-model tensor '" + name + "'");
      p.value = b->value.cast<float>();
    });
  }
  return t;
}

double Trainer::learning_rate_at(std::int64_t step, std::int64_t total_steps) const {
  const double base = cfg_.learning_rate;
  if (step < cfg_.warmup_steps) return base * static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup_steps);
  const auto decay_steps = std::max<std::int64_t>(1, total_steps - cfg_.warmup_steps);
  const double progress =
      std::clamp(static_cast<double>(step - cfg_.warmup_steps) / static_cast<double>(decay_steps), 0.0, 1.0);
  const double cosine = 0.5 * (1.0 + std::cos(M_PI * progress));
  return base * (cfg_.min_lr_ratio + (1.0 - cfg_.min_lr_ratio) * cosine);
}

double Trainer::train_step(const std::vector<const SynthSample*>& batch, std::int64_t total_steps,
                           const std::vector<std::uint64_t>& sample_seeds) {
  model_.zero_grad();
  const uplift::LossWeights weights{cfg_.lambda_traj, cfg_.lambda_spin};
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  std::vector<Vec3> truth;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::mt19937_64 rng(sample_seeds[b]);
    const SynthSample s = cfg_.augment ? augment_sample(*batch[b], rng, cfg_) : *batch[b];
    true_positions_of(s, truth);
    const uplift::UpliftInput in = uplift::make_input(s);
    loss_sum += model_.accumulate_gradients(in, truth, s.truth_spin, weights, scale);
  }
  const double loss = loss_sum * scale;
  if (!std::isfinite(loss)) return loss;

  std::vector<Param<float>*> params = parameters(model_);
  double clip = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double norm_sq = 0.0;
    for (const Param<float>* p : params) norm_sq += p->grad.cast<double>().squaredNorm();
    const double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm)) return std::numeric_limits<double>::quiet_NaN();
    if (norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;
  }

  ++step_;
  const double lr = learning_rate_at(step_ - 1, total_steps);
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step_));
  const auto b1 = static_cast<float>(cfg_.adam_beta1);
  const auto b2 = static_cast<float>(cfg_.adam_beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg_.adam_eps);
  const auto decay = static_cast<float>(lr * cfg_.weight_decay);
  const auto names = parameter_names(model_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<float>& p = *params[i];
    const Mat<float> g = p.grad * static_cast<float>(clip);
    adam_m_[i] = b1 * adam_m_[i] + (1.0f - b1) * g;
    adam_v_[i] = b2 * adam_v_[i] + (1.0f - b2) * g.cwiseProduct(g);
    if (decay > 0.0f && names[i].ends_with(".weight")) p.value *= (1.0f - decay);
    p.value.array() -= step_size * adam_m_[i].array() / (adam_v_[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
  return loss;
}

const EpochRecord& Trainer::run_epoch(const std::vector<SynthSample>& train_set,
                                      const std::vector<SynthSample>& val_set) {
  if (train_set.empty() || val_set.empty()) throw ContractError("train: datasets must be nonempty");
  const uplift::DenormalsAreZero ftz;
  const auto t0 = std::chrono::steady_clock::now();
  const int epoch = epoch_ + 1;
  const auto batch_size = static_cast<std::size_t>(cfg_.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((train_set.size() + batch_size - 1) / batch_size);
  const std::int64_t total_steps = steps_per_epoch * cfg_.epochs;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, 0x73687566u, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochRecord rec;
  rec.epoch = epoch;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<const SynthSample*> batch;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&train_set[order[i]]);
      seeds.push_back(derive_seed(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch)), order[i]));
    }
    const double loss = train_step(batch, total_steps, seeds);
    if (!std::isfinite(loss)) {
      rec.loss = loss;
      history_.epochs.push_back(rec);
      throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step_),
                          history_);
    }
    loss_sum += loss * static_cast<double>(end - start);
  }
  rec.loss = loss_sum / static_cast<double>(order.size());

  if (epoch % cfg_.validate_every == 0 || epoch >= cfg_.epochs) {
    rec.validated = true;
    try {
      const EvalReport report = evaluate(model_, val_set);
      rec.f1 = report.summary.macro_f1;
      rec.accuracy = report.summary.accuracy;
      rec.m2dre_px = report.summary.m2dre_px;
    } catch (const BehindCameraError&) {
      rec.m2dre_px = std::numeric_limits<double>::infinity();
    }
  }
  epoch_ = epoch;
  history_.epochs.push_back(rec);
  if (rec.validated && select_epoch(history_) == static_cast<int>(history_.epochs.size()) - 1) {
    best_ = model_;
    best_epoch_ = epoch;
  }
  history_.epochs.back().seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return history_.epochs.back();
}

void Trainer::run(const std::vector<SynthSample>& train_set, const std::vector<SynthSample>& val_set,
                  const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch) {
  while (epoch_ < cfg_.epochs) {
    const EpochRecord& rec = run_epoch(train_set, val_set);
    if (on_epoch) on_epoch(*this, rec);
  }
}

Checkpoint Trainer::state_checkpoint() const {
  Checkpoint c;
  c.model = model_.config();
  uplift::append_parameters(model_, c.tensors);
  const auto names = parameter_names(model_);
  for (std::size_t i = 0; i < names.size(); ++i)
    c.tensors.push_back({"adam.m." + names[i], adam_m_[i].cast<double>()});
  for (std::size_t i = 0; i < names.size(); ++i)
    c.tensors.push_back({"adam.v." + names[i], adam_v_[i].cast<double>()});
  if (best_epoch_ > 0) {
    std::vector<uplift::NamedTensor> best;
    uplift::append_parameters(best_, best);
    for (auto& t : best) c.tensors.push_back({"best." + t.name, std::move(t.value)});
  }
  c.meta["trainer"] = {{"epoch", epoch_},
                       {"step", step_},
                       {"best_epoch", best_epoch_},
                       {"history", history_json(history_)}};
  return c;
}

Checkpoint Trainer::best_checkpoint() const {
  Checkpoint c;
  c.model = model_.config();
  uplift::append_parameters(best_model(), c.tensors);
  c.meta["selected_epoch"] = best_epoch_;
  c.meta["history"] = history_json(history_);
  return c;
}

TrainResult train(const uplift::ModelConfig& model_cfg, const std::vector<SynthSample>& train_set,
                  const std::vector<SynthSample>& val_set, const TrainConfig& cfg) {
  Trainer t(model_cfg, cfg);
  t.run(train_set, val_set);
  return {t.best_model(), t.best_epoch(), t.history()};
}

}  // namespace ttlift
