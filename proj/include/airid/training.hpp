#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "airid/autograd/adam.hpp"
#include "airid/checkpoint.hpp"
#include "airid/losses.hpp"
#include "airid/model.hpp"
#include "airid/retrieval.hpp"
#include "airid/synthdata.hpp"
#include "json.hpp"

namespace airid {

struct TrainConfig {
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
  int pretrain_epochs = 100;
  int joint_epochs = 300;
  int batch_size = 128;
  double lr_attribute = 0.01;
  double lr_image = 0.001;
  double lr_pretrain = 0.01;
  double lr_discriminator = 0.01;
  double lambda_g = 0.001;
  double lambda_d = 0.5;
  double semantic_consistency_weight = 1.0;
  double alignment_weight = 1.0;
  double weight_decay = 5e-4;
  WeightDecayMode weight_decay_mode = WeightDecayMode::kDecoupled;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int d_steps_per_g_step = 1;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  bool freeze_image = false;

  void validate() const;
  LossWeights weights() const;
  AdamOptions optimizer_options(double lr) const;

  nlohmann::json to_json() const;
  /// Overlays the keys of `j` on `base`. Unknown keys raise ConfigError
  /// naming the key.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Model dimensions implied by a dataset, with architecture knobs taken
/// from `base`.
ModelConfig model_config_for(const DatasetSplit& split, ModelConfig base = {});

/// Seed used to initialise the networks of a run.
std::uint64_t init_seed(std::uint64_t seed);

template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;
  Tensor<Scalar> attributes;
  std::vector<int> ids;

  Index size() const { return images.rows(); }
};

/// Training images, their attribute vectors and semantic ids as row-aligned
/// matrices.
template <typename Scalar>
struct TrainingData {
  Matrix<Scalar> images;
  Matrix<Scalar> attributes;
  std::vector<int> ids;

  static TrainingData from_split(const DatasetSplit& split);
  std::size_t size() const { return ids.size(); }
  Batch<Scalar> batch(std::span<const int> rows) const;
};

/// Seeded shuffle of 0..n-1 cut into batches; a trailing batch with fewer
/// than two rows is dropped (batch normalisation needs two).
std::vector<std::vector<int>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int stage, int epoch);

inline constexpr int kPretrainStage = 0;
inline constexpr int kJointStage = 1;

/// Values of the individual loss terms for one step; NaN marks a term the
/// step did not compute.
struct StepLosses {
  double image = std::numeric_limits<double>::quiet_NaN();
  double adv_discriminator = std::numeric_limits<double>::quiet_NaN();
  double adv_generator = std::numeric_limits<double>::quiet_NaN();
  double semantic = std::numeric_limits<double>::quiet_NaN();
  double alignment = std::numeric_limits<double>::quiet_NaN();
  double generator_objective = std::numeric_limits<double>::quiet_NaN();

  /// Fills terms that are NaN here from `other`.
  void merge(const StepLosses& other);
};

/// One training_log.csv row: per-epoch means, 0 for terms never computed.
struct LogRow {
  int epoch = 0;
  std::string variant;
  double image = 0;
  double adv_discriminator = 0;
  double adv_generator = 0;
  double semantic = 0;
  double alignment = 0;
  double generator_objective = 0;
};

std::string log_header();
std::string log_line(const LogRow& row);
void write_training_log(const std::filesystem::path& path, const std::vector<LogRow>& rows);

/// Owns the optimizer state of one run over a model it borrows.
template <typename Scalar>
class Trainer {
 public:
  Trainer(JointModel<Scalar>& model, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  JointModel<Scalar>& model() { return model_; }

  /// l_I step on the image extractor and classifier.
  StepLosses pretrain_step(const Batch<Scalar>& batch);
  /// lambda_D * l_adv^D step on the discriminator alone, with both concept
  /// producers run without gradient.
  StepLosses discriminator_step(const Batch<Scalar>& batch);
  /// Generator, classifier and image step with the discriminator frozen.
  StepLosses generator_step(const Batch<Scalar>& batch);
  /// d_steps_per_g_step discriminator steps (adversarial variants only),
  /// then one generator step.
  StepLosses joint_step(const Batch<Scalar>& batch);

  LogRow pretrain_epoch(const TrainingData<Scalar>& data, int epoch);
  LogRow joint_epoch(const TrainingData<Scalar>& data, int epoch);

  /// Model, batch-norm statistics, optimizer moments and progress.
  Checkpoint checkpoint(const std::string& stage, int epochs_done);
  /// Restores everything `checkpoint` saved. Optimizer state is only
  /// restored for groups present in the checkpoint.
  void restore(const Checkpoint& ckpt);

  Adam<Scalar>& group(const std::string& name);
  std::vector<std::string> group_names() const;

 private:
  struct Concepts {
    Tensor<Scalar> image;
    Tensor<Scalar> attribute;
  };

  Concepts produce(const Batch<Scalar>& batch, Mode image_mode, Mode generator_mode);
  void step_groups(std::initializer_list<const char*> names);

  JointModel<Scalar>& model_;
  TrainConfig config_;
  std::vector<std::pair<std::string, Adam<Scalar>>> groups_;
};

/// Progress stored in a trainer checkpoint.
struct Progress {
  std::string stage;
  int epochs_done = 0;
};
Progress checkpoint_progress(const Checkpoint& ckpt);

using CheckpointSink = std::function<void(const Checkpoint& ckpt, int epoch)>;

struct StageResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

/// Image-branch pretraining from a fresh initialisation (or from `resume`
/// when it holds a partial pretraining checkpoint).
template <typename Scalar>
StageResult pretrain(const DatasetSplit& split, const TrainConfig& config, const ModelConfig& model_config = {},
                     const Checkpoint* resume = nullptr, const CheckpointSink& sink = {});

/// Joint training starting from a pretraining checkpoint, or resuming a
/// partial joint checkpoint.
template <typename Scalar>
StageResult train_joint(const DatasetSplit& split, const TrainConfig& config, const Checkpoint& start,
                        const CheckpointSink& sink = {});

template <typename Scalar>
EvaluationReport evaluate_checkpoint(const DatasetSplit& split, const Checkpoint& ckpt, int threads = 1);

struct ExperimentResult {
  EvaluationReport report;
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

/// train_joint from `pretrained` then evaluate, in float.
ExperimentResult run_experiment(const DatasetSplit& split, const TrainConfig& config, const Checkpoint& pretrained,
                                int threads = 1);

enum class SweepParam { kLambdaG, kLambdaD };
SweepParam parse_sweep_param(const std::string& name);
std::string sweep_param_name(SweepParam p);

struct SweepRow {
  std::string param;
  double value = 0;
  double rank1 = 0;
  double rank5 = 0;
  double rank10 = 0;
  double mean_ap = 0;
};

/// One train+evaluate per value, rows in input order.
std::vector<SweepRow> sweep(const DatasetSplit& split, SweepParam param, const std::vector<double>& values,
                            const TrainConfig& config, const Checkpoint& pretrained, int threads = 1);

/// Two-stage protocol: lambda_D fixed at 1 while lambda_G is swept, then
/// lambda_G fixed at the best rank-1 value while lambda_D is swept.
std::vector<SweepRow> lambda_protocol(const DatasetSplit& split, const std::vector<double>& lambda_g_values,
                                      const std::vector<double>& lambda_d_values, const TrainConfig& config,
                                      const Checkpoint& pretrained, int threads = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace airid
