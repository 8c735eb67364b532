#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interpgaze/data/sampler.hpp"
#include "interpgaze/data/synthetic.hpp"
#include "interpgaze/nn/adam.hpp"
#include "interpgaze/trainer/objective.hpp"

namespace interpgaze {

/// Where training images come from.
struct DatasetSource {
  std::string kind = "synthetic";  ///< synthetic | synthetic_dir | columbia
  SyntheticDatasetSpec synthetic;
  std::string path;  ///< for synthetic_dir / columbia
};

/// Loss weights of the default run. Distillation and the adversarial terms
/// produce gradients about a thousand times larger than the perceptual
/// terms, so they are scaled down; the latent path is switched on.
inline LossWeights default_train_weights() {
  LossWeights w;
  w.lambda_distill = 0.005;
  w.lambda_gan_E = 0.05;
  w.lambda_gan_C = 0.05;
  w.lambda_p = 10.0;
  w.lambda_C_path = 10.0;
  return w;
}

/// Model of the default run: the critic judges decoded images, which is what
/// keeps interpolated frames from turning into cross-fades.
inline ModelConfig default_train_model() {
  ModelConfig m;
  m.critic_on = CriticInput::images;
  return m;
}

/// Training schedule and everything needed to reproduce a run. The defaults
/// train the 3000-image synthetic set in under an hour on one CPU core.
struct TrainConfig {
  long long steps = 2000;     ///< generator iterations
  int batch_size = 16;
  int n_critic = 1;
  double lr_critic = 1e-3;
  double lr_generator = 1e-3;
  double lr_decay_start = 0.5;  ///< fraction of steps after which both rates fall linearly to 0
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::uint64_t seed = 1;
  double p_full = 0.25;          ///< fraction of full-move control vectors
  double cross_fraction = 0.25;  ///< fraction of cross-subject rows (needs rendered targets)
  LossWeights weights = default_train_weights();
  ModelConfig model = default_train_model();
  DatasetSource data;
  long long checkpoint_interval = 500;
  long long eval_interval = 0;  ///< 0 disables periodic evaluation
  bool deterministic = true;

  void validate() const;
  std::uint64_t hash() const;  ///< FNV-1a of the canonical JSON
  /// Learning-rate multiplier for the iteration after `done` completed ones.
  double lr_scale(long long done) const;
};
void to_json(nlohmann::json& j, const DatasetSource& d);
void from_json(const nlohmann::json& j, DatasetSource& d);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// True when INTERPGAZE_DETERMINISTIC=1 is set.
bool deterministic_env();

/// Four independent U[0,1) draws; with probability p_full the three primary
/// components are then set to exactly 1.
ControlVector sample_control_vector(Rng& rng, double p_full = 0.25);

Dataset load_training_data(const DatasetSource& src, const ModelConfig& model);

/// Draws pair batches (and their exact renderings for synthetic data).
class BatchBuilder {
 public:
  BatchBuilder(const Dataset& data, const Binning& binning, double p_full, double cross_fraction);

  PairBatch<float> next(Rng& rng, int batch_size, bool with_targets) const;

 private:
  const Dataset* data_;
  PairSampler sampler_;
  Binning binning_;
  double p_full_;
  double cross_fraction_;
  bool can_render_;
  bool can_cross_;
};

/// All trainable state: model, both optimisers, RNG, step counter.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Dataset& data);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  LossReport train_step_critic(const PairBatch<float>& batch);
  LossReport train_step_generator(const PairBatch<float>& batch);

  /// n_critic critic steps then one generator step; returns the generator
  /// report with the last critic terms merged in.
  LossReport iteration();

  void save_checkpoint(const std::string& path) const;
  /// Restores weights, optimiser moments, RNG state and step. The file's
  /// config hash must match this trainer's config.
  void load_checkpoint(const std::string& path);

  long long step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  ModelBundle<float>& model() { return model_; }
  const ModelBundle<float>& model() const { return model_; }
  Rng& rng() { return rng_; }

 private:
  struct Snapshot;
  Snapshot snapshot();
  void restore(const Snapshot& s);

  TrainConfig cfg_;
  ModelBundle<float> model_;
  std::unique_ptr<nn::Adam<float>> opt_critic_;
  std::unique_ptr<nn::Adam<float>> opt_generator_;
  BatchBuilder batches_;
  Rng rng_;
  long long step_ = 0;
  LossTerms last_critic_;
};

/// Contents of a checkpoint archive.
struct CheckpointBundle {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, nn::RowMatrix<float>>> arrays;

  const nn::RowMatrix<float>& array(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const CheckpointBundle& ckpt);
CheckpointBundle read_checkpoint(const std::string& path);

/// Model weights (including the frozen pyramid) from a checkpoint.
ModelBundle<float> load_model(const std::string& path);

struct FitOptions {
  std::string out_dir;                 ///< checkpoints + train_log.jsonl
  std::optional<std::string> resume;   ///< checkpoint to continue from
  std::ostream* log = nullptr;         ///< optional extra sink for JSON lines
  /// Optional evaluation hook called every eval_interval steps.
  std::function<nlohmann::json(const ModelBundle<float>&)> evaluate;
};

struct FitResult {
  long long step = 0;
  std::string final_checkpoint;
  std::vector<std::string> checkpoints;
  std::vector<LossReport> reports;
};

/// Runs the schedule. Writes `ckpt_<step>.igz` every checkpoint_interval
/// steps and at the final step. A non-finite loss restores the last good
/// state, writes `ckpt_last_good.igz` and rethrows.
FitResult fit(const TrainConfig& cfg, const Dataset& data, const FitOptions& opts);

}  // namespace interpgaze
