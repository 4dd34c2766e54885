#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ttlift/ballistics.hpp"
#include "ttlift/common.hpp"
#include "ttlift/kv_config.hpp"
#include "ttlift/sample.hpp"
#include "ttlift/uplift/checkpoint.hpp"
#include "ttlift/uplift/model.hpp"

namespace ttlift {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 0;
  double drop_prob_ball = 0.05;
  double drop_prob_keypoint = 0.05;
  double fps_min = 20.0;
  double fps_max = 60.0;
  bool augment = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;   // decoupled, applied to matrices only
  int warmup_steps = 0;        // linear warmup before the cosine decay
  double min_lr_ratio = 0.0;   // cosine floor as a fraction of learning_rate
  double grad_clip = 0.0;      // global-norm clip, 0 = off
  double lambda_traj = 1.0;
  double lambda_spin = 1.0;
  int validate_every = 1;      // epochs between validations (the last epoch is always validated)

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Reads every TrainConfig field from `kv` (keys as the member names).
void bind(KvBinder& kv, TrainConfig& cfg);
void bind(KvBinder& kv, uplift::ModelConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  bool validated = false;
  double f1 = 0.0;
  double accuracy = 0.0;
  double m2dre_px = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// CSV with header epoch,loss,f1,m2dre,accuracy; wall time is left out.
  std::string to_csv() const;
};

/// Index of the selected epoch: maximum validation F1, ties broken by the
/// lowest m2DRE, then by the earliest epoch. Returns -1 if none validated.
int select_epoch(const TrainHistory& history);

class TrainingError : public NumericalError {
public:
  TrainingError(const std::string& what, TrainHistory history)
      : NumericalError(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

private:
  TrainHistory history_;
};

/// Robustness augmentation: new frame rate drawn from [fps_min, fps_max]
/// with the flight re-simulated from the stored initial state, then random
/// ball-frame and keypoint drops. At least two valid frames always remain.
SynthSample augment_sample(const SynthSample& sample, std::mt19937_64& rng, const TrainConfig& cfg,
                           const PhysicsParams& physics = {});

/// Adam state plus the training position; everything needed to resume.
class Trainer {
public:
  using Model = uplift::UpliftModel<float>;

  Trainer(const uplift::ModelConfig& model_cfg, const TrainConfig& cfg);

  /// Restores a state written by state_checkpoint(). `cfg` must match the
  /// original run (the epoch count shapes the learning-rate schedule).
  static Trainer resume(const uplift::Checkpoint& state, const TrainConfig& cfg);

  /// One epoch over `train_set` (validated on `val_set` per validate_every).
  /// Throws TrainingError on a non-finite loss.
  const EpochRecord& run_epoch(const std::vector<SynthSample>& train_set,
                               const std::vector<SynthSample>& val_set);

  /// Runs the remaining epochs; `on_epoch` is called after each one.
  void run(const std::vector<SynthSample>& train_set, const std::vector<SynthSample>& val_set,
           const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch = {});

  int epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  const TrainHistory& history() const { return history_; }
  const Model& model() const { return model_; }
  /// Parameters of the selected epoch (current model if nothing validated yet).
  const Model& best_model() const { return best_epoch_ > 0 ? best_ : model_; }
  int best_epoch() const { return best_epoch_; }
  const TrainConfig& config() const { return cfg_; }

  double learning_rate_at(std::int64_t step, std::int64_t total_steps) const;

  /// Full training state (model, Adam moments, best model, history).
  uplift::Checkpoint state_checkpoint() const;
  /// Inference checkpoint of the selected model.
  uplift::Checkpoint best_checkpoint() const;

private:
  double train_step(const std::vector<const SynthSample*>& batch, std::int64_t total_steps,
                    const std::vector<std::uint64_t>& sample_seeds);

  TrainConfig cfg_;
  Model model_;
  Model best_;
  std::vector<uplift::Mat<float>> adam_m_;
  std::vector<uplift::Mat<float>> adam_v_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  int best_epoch_ = 0;
  TrainHistory history_;
};

/// Convenience wrapper: a fresh Trainer run to completion.
struct TrainResult {
  uplift::UpliftModel<float> best;
  int best_epoch = 0;
  TrainHistory history;
};

TrainResult train(const uplift::ModelConfig& model_cfg, const std::vector<SynthSample>& train_set,
                  const std::vector<SynthSample>& val_set, const TrainConfig& cfg);

}  // namespace ttlift
