#include "airid/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "airid/errors.hpp"

namespace airid {

namespace {

const char* const kTrainKeys[] = {"variant",
                                  "seed",
                                  "pretrain_epochs",
                                  "joint_epochs",
                                  "batch_size",
                                  "lr_attribute",
                                  "lr_image",
                                  "lr_pretrain",
                                  "lr_discriminator",
                                  "lambda_G",
                                  "lambda_D",
                                  "semantic_consistency_weight",
                                  "alignment_weight",
                                  "weight_decay",
                                  "weight_decay_mode",
                                  "optimizer",
                                  "d_steps_per_g_step",
                                  "checkpoint_every",
                                  "freeze_image"};

template <typename T>
T get_key(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

// Clears requires_grad on every parameter under `prefix` while alive.
template <typename Scalar>
class FreezeGuard {
 public:
  FreezeGuard(JointModel<Scalar>& model, std::string prefix) : model_(model), prefix_(std::move(prefix)) {
    model_.set_requires_grad(prefix_, false);
  }
  ~FreezeGuard() { model_.set_requires_grad(prefix_, true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  JointModel<Scalar>& model_;
  std::string prefix_;
};

template <typename Scalar>
double value_of(const Tensor<Scalar>& t) {
  return t.defined() ? static_cast<double>(t.item()) : std::numeric_limits<double>::quiet_NaN();
}

struct EpochMeans {
  std::array<double, 6> sums{};
  std::array<int, 6> counts{};

  void add(const StepLosses& s) {
    const double v[6] = {s.image, s.adv_discriminator, s.adv_generator, s.semantic, s.alignment, s.generator_objective};
    for (int i = 0; i < 6; ++i) {
      if (!std::isnan(v[i])) {
        sums[i] += v[i];
        ++counts[i];
      }
    }
  }

  LogRow row(int epoch, std::string variant) const {
    auto m = [&](int i) { return counts[i] ? sums[i] / counts[i] : 0.0; };
    return LogRow{epoch, std::move(variant), m(0), m(1), m(2), m(3), m(4), m(5)};
  }
};

std::string with_context(const std::string& stage, int epoch, std::size_t batch, const std::string& what) {
  return stage + " epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + ": " + what;
}

}  // namespace

void TrainConfig::validate() const {
  if (pretrain_epochs < 0 || joint_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (lr_attribute < 0 || lr_image < 0 || lr_pretrain < 0 || lr_discriminator < 0) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (d_steps_per_g_step < 1) throw ConfigError("d_steps_per_g_step must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  weights().validate();
}

LossWeights TrainConfig::weights() const {
  LossWeights w;
  w.lambda_g = lambda_g;
  w.lambda_d = lambda_d;
  w.semantic_consistency = semantic_consistency_weight;
  w.alignment = alignment_weight;
  return w;
}

AdamOptions TrainConfig::optimizer_options(double lr) const {
  AdamOptions o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  o.decay_mode = weight_decay_mode;
  o.kind = optimizer;
  return o;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"variant", variant_name(variant)},
          {"seed", seed},
          {"pretrain_epochs", pretrain_epochs},
          {"joint_epochs", joint_epochs},
          {"batch_size", batch_size},
          {"lr_attribute", lr_attribute},
          {"lr_image", lr_image},
          {"lr_pretrain", lr_pretrain},
          {"lr_discriminator", lr_discriminator},
          {"lambda_G", lambda_g},
          {"lambda_D", lambda_d},
          {"semantic_consistency_weight", semantic_consistency_weight},
          {"alignment_weight", alignment_weight},
          {"weight_decay", weight_decay},
          {"weight_decay_mode", weight_decay_mode == WeightDecayMode::kDecoupled ? "decoupled" : "l2"},
          {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "sgd_momentum"},
          {"d_steps_per_g_step", d_steps_per_g_step},
          {"checkpoint_every", checkpoint_every},
          {"freeze_image", freeze_image}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  TrainConfig c = base;
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kTrainKeys), std::end(kTrainKeys), key) == std::end(kTrainKeys)) {
      throw ConfigError("unknown config key 'train." + key + "'");
    }
  }
  if (j.contains("variant")) c.variant = parse_variant(get_key<std::string>(j, "variant"));
  if (j.contains("seed")) c.seed = get_key<std::uint64_t>(j, "seed");
  if (j.contains("pretrain_epochs")) c.pretrain_epochs = get_key<int>(j, "pretrain_epochs");
  if (j.contains("joint_epochs")) c.joint_epochs = get_key<int>(j, "joint_epochs");
  if (j.contains("batch_size")) c.batch_size = get_key<int>(j, "batch_size");
  if (j.contains("lr_attribute")) c.lr_attribute = get_key<double>(j, "lr_attribute");
  if (j.contains("lr_image")) c.lr_image = get_key<double>(j, "lr_image");
  if (j.contains("lr_pretrain")) c.lr_pretrain = get_key<double>(j, "lr_pretrain");
  if (j.contains("lr_discriminator")) c.lr_discriminator = get_key<double>(j, "lr_discriminator");
  if (j.contains("lambda_G")) c.lambda_g = get_key<double>(j, "lambda_G");
  if (j.contains("lambda_D")) c.lambda_d = get_key<double>(j, "lambda_D");
  if (j.contains("semantic_consistency_weight")) {
    c.semantic_consistency_weight = get_key<double>(j, "semantic_consistency_weight");
  }
  if (j.contains("alignment_weight")) c.alignment_weight = get_key<double>(j, "alignment_weight");
  if (j.contains("weight_decay")) c.weight_decay = get_key<double>(j, "weight_decay");
  if (j.contains("weight_decay_mode")) {
    const auto m = get_key<std::string>(j, "weight_decay_mode");
    if (m == "decoupled") {
      c.weight_decay_mode = WeightDecayMode::kDecoupled;
    } else if (m == "l2") {
      c.weight_decay_mode = WeightDecayMode::kL2;
    } else {
      throw ConfigError("weight_decay_mode must be 'decoupled' or 'l2', got '" + m + "'");
    }
  }
  if (j.contains("optimizer")) {
    const auto o = get_key<std::string>(j, "optimizer");
    if (o == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else if (o == "sgd_momentum") {
      c.optimizer = OptimizerKind::kSgdMomentum;
    } else {
      throw ConfigError("optimizer must be 'adam' or 'sgd_momentum', got '" + o + "'");
    }
  }
  if (j.contains("d_steps_per_g_step")) c.d_steps_per_g_step = get_key<int>(j, "d_steps_per_g_step");
  if (j.contains("checkpoint_every")) c.checkpoint_every = get_key<int>(j, "checkpoint_every");
  if (j.contains("freeze_image")) c.freeze_image = get_key<bool>(j, "freeze_image");
  c.validate();
  return c;
}

ModelConfig model_config_for(const DatasetSplit& split, ModelConfig base) {
  base.attribute_size = split.schema.attribute_size();
  base.num_train_ids = split.num_train_ids;
  base.image_height = split.geometry.height;
  base.image_width = split.geometry.width;
  base.image_channels = split.geometry.channels;
  return base;
}

std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, 0x1417); }

template <typename Scalar>
TrainingData<Scalar> TrainingData<Scalar>::from_split(const DatasetSplit& split) {
  if (split.train.size() < 2) throw DataError("training needs at least two training images");
  TrainingData d;
  d.images = image_matrix<Scalar>(split.train);
  std::vector<AttributeVector> attrs;
  for (const auto& s : split.train) {
    attrs.push_back(s.attributes);
    if (s.semantic_id < 0 || s.semantic_id >= split.num_train_ids) {
      throw DataError("training image " + std::to_string(s.image_index) + " has semantic id " +
                      std::to_string(s.semantic_id) + " outside the training ids");
    }
    d.ids.push_back(s.semantic_id);
  }
  d.attributes = attribute_matrix<Scalar>(attrs);
  return d;
}

template <typename Scalar>
Batch<Scalar> TrainingData<Scalar>::batch(std::span<const int> rows) const {
  Matrix<Scalar> im(static_cast<Index>(rows.size()), images.cols());
  Matrix<Scalar> at(static_cast<Index>(rows.size()), attributes.cols());
  Batch<Scalar> b;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    im.row(static_cast<Index>(i)) = images.row(rows[i]);
    at.row(static_cast<Index>(i)) = attributes.row(rows[i]);
    b.ids.push_back(ids[static_cast<std::size_t>(rows[i])]);
  }
  b.images = Tensor<Scalar>(std::move(im));
  b.attributes = Tensor<Scalar>(std::move(at));
  return b;
}

std::vector<std::vector<int>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int stage, int epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(stage) * 1000000u + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void StepLosses::merge(const StepLosses& o) {
  auto fill = [](double& a, double b) {
    if (std::isnan(a)) a = b;
  };
  fill(image, o.image);
  fill(adv_discriminator, o.adv_discriminator);
  fill(adv_generator, o.adv_generator);
  fill(semantic, o.semantic);
  fill(alignment, o.alignment);
  fill(generator_objective, o.generator_objective);
}

std::string log_header() { return "epoch,variant,l_I,l_adv_D,l_adv_G,l_sc,alignment_loss,generator_objective"; }

std::string log_line(const LogRow& r) {
  std::ostringstream out;
  out.precision(9);
  out << r.epoch << ',' << r.variant << ',' << r.image << ',' << r.adv_discriminator << ',' << r.adv_generator << ','
      << r.semantic << ',' << r.alignment << ',' << r.generator_objective;
  return out.str();
}

void write_training_log(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << log_header() << '\n';
  for (const auto& r : rows) out << log_line(r) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

template <typename Scalar>
Trainer<Scalar>::Trainer(JointModel<Scalar>& model, TrainConfig config) : model_(model), config_(config) {
  config_.validate();
  auto image_and_classifier = model_.parameters_with_prefix("image");
  for (auto& p : model_.parameters_with_prefix("classifier")) image_and_classifier.push_back(p);
  groups_.emplace_back("pretrain", Adam<Scalar>(image_and_classifier, config_.optimizer_options(config_.lr_pretrain)));
  groups_.emplace_back("generator", Adam<Scalar>(model_.parameters_with_prefix("generator"),
                                                 config_.optimizer_options(config_.lr_attribute)));
  groups_.emplace_back("image",
                       Adam<Scalar>(model_.parameters_with_prefix("image"), config_.optimizer_options(config_.lr_image)));
  groups_.emplace_back("classifier", Adam<Scalar>(model_.parameters_with_prefix("classifier"),
                                                  config_.optimizer_options(config_.lr_image)));
  groups_.emplace_back("discriminator", Adam<Scalar>(model_.parameters_with_prefix("discriminator"),
                                                     config_.optimizer_options(config_.lr_discriminator)));
}

template <typename Scalar>
Adam<Scalar>& Trainer<Scalar>::group(const std::string& name) {
  for (auto& [n, opt] : groups_) {
    if (n == name) return opt;
  }
  throw Error("no optimizer group '" + name + "'");
}

template <typename Scalar>
std::vector<std::string> Trainer<Scalar>::group_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups_) names.push_back(g.first);
  return names;
}

template <typename Scalar>
void Trainer<Scalar>::step_groups(std::initializer_list<const char*> names) {
  for (const char* n : names) group(n).step();
}

template <typename Scalar>
typename Trainer<Scalar>::Concepts Trainer<Scalar>::produce(const Batch<Scalar>& batch, Mode image_mode,
                                                            Mode generator_mode) {
  return Concepts{model_.image.forward(batch.images, image_mode), model_.generator.forward(batch.attributes, generator_mode)};
}

template <typename Scalar>
StepLosses Trainer<Scalar>::pretrain_step(const Batch<Scalar>& batch) {
  model_.zero_grad();
  Tape<Scalar> tape;
  auto concepts = model_.image.forward(batch.images, Mode::kTrain);
  auto loss = image_concept_loss(model_.classifier.forward(concepts), batch.ids);
  StepLosses out;
  out.image = value_of(loss);
  tape.backward(loss);
  step_groups({"pretrain"});
  model_.zero_grad();
  return out;
}

template <typename Scalar>
StepLosses Trainer<Scalar>::discriminator_step(const Batch<Scalar>& batch) {
  if (!uses_adversary(config_.variant)) {
    throw Error("variant '" + variant_name(config_.variant) + "' has no discriminator to train");
  }
  model_.zero_grad();
  Tensor<Scalar> real, fake;
  {
    // Producers run on a scratch tape that is discarded, so nothing reaches them.
    Tape<Scalar> scratch;
    auto c = produce(batch, Mode::kBatchStats, Mode::kBatchStats);
    const bool img2a = config_.variant == Variant::kImg2a;
    real = detach(img2a ? c.attribute : c.image);
    fake = detach(img2a ? c.image : c.attribute);
  }
  Tape<Scalar> tape;
  auto d = model_.discriminator.forward(concat(real, fake, 0), Mode::kTrain);
  LossParts<Scalar> parts;
  parts.adv_discriminator = adv_d_loss(slice_rows(d, 0, real.rows()), slice_rows(d, real.rows(), fake.rows()));
  auto objectives = compose_losses(parts, config_.weights(), config_.variant);
  StepLosses out;
  out.adv_discriminator = value_of(parts.adv_discriminator);
  tape.backward(objectives.discriminator);
  step_groups({"discriminator"});
  model_.zero_grad();
  return out;
}

template <typename Scalar>
StepLosses Trainer<Scalar>::generator_step(const Batch<Scalar>& batch) {
  const Variant v = config_.variant;
  model_.zero_grad();
  Tape<Scalar> tape;
  auto c = produce(batch, config_.freeze_image ? Mode::kBatchStats : Mode::kTrain, Mode::kTrain);
  const bool img2a = v == Variant::kImg2a;
  const Tensor<Scalar>& real_side = img2a ? c.attribute : c.image;
  const Tensor<Scalar>& generated = img2a ? c.image : c.attribute;

  LossParts<Scalar> parts;
  parts.image = image_concept_loss(model_.classifier.forward(real_side), batch.ids);
  parts.semantic = semantic_consistency_loss(model_.classifier.forward(generated), batch.ids);
  if (uses_adversary(v)) {
    FreezeGuard<Scalar> frozen(model_, "discriminator");
    auto d = model_.discriminator.forward(concat(detach(real_side), generated, 0), Mode::kBatchStats);
    parts.adv_generator = adv_g_loss(slice_rows(d, real_side.rows(), generated.rows()));
  }
  if (v == Variant::kMmd) parts.alignment = mmd_loss(c.image, c.attribute);
  if (v == Variant::kCoral) parts.alignment = coral_loss(c.image, c.attribute);

  auto objectives = compose_losses(parts, config_.weights(), v);
  StepLosses out;
  out.image = value_of(parts.image);
  out.adv_generator = value_of(parts.adv_generator);
  out.semantic = value_of(parts.semantic);
  out.alignment = value_of(parts.alignment);
  out.generator_objective = value_of(objectives.generator);

  tape.backward(add(objectives.generator, objectives.image));
  if (config_.freeze_image) {
    step_groups({"generator", "classifier"});
  } else {
    step_groups({"generator", "classifier", "image"});
  }
  model_.zero_grad();
  return out;
}

template <typename Scalar>
StepLosses Trainer<Scalar>::joint_step(const Batch<Scalar>& batch) {
  StepLosses out;
  if (uses_adversary(config_.variant)) {
    for (int k = 0; k < config_.d_steps_per_g_step; ++k) out.merge(discriminator_step(batch));
  }
  out.merge(generator_step(batch));
  return out;
}

template <typename Scalar>
LogRow Trainer<Scalar>::pretrain_epoch(const TrainingData<Scalar>& data, int epoch) {
  EpochMeans means;
  const auto batches = epoch_batches(data.size(), config_.batch_size, config_.seed, kPretrainStage, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    try {
      means.add(pretrain_step(data.batch(batches[b])));
    } catch (const NumericError& e) {
      throw NumericError(with_context("pretrain", epoch, b, e.what()));
    }
  }
  return means.row(epoch, "pretrain");
}

template <typename Scalar>
LogRow Trainer<Scalar>::joint_epoch(const TrainingData<Scalar>& data, int epoch) {
  EpochMeans means;
  const auto batches = epoch_batches(data.size(), config_.batch_size, config_.seed, kJointStage, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    try {
      means.add(joint_step(data.batch(batches[b])));
    } catch (const NumericError& e) {
      throw NumericError(with_context("joint", epoch, b, e.what()));
    }
  }
  return means.row(epoch, variant_name(config_.variant));
}

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint(const std::string& stage, int epochs_done) {
  Checkpoint ckpt = model_checkpoint(model_);
  ckpt.metadata["train_config"] = config_.to_json();
  ckpt.metadata["progress"] = {{"stage", stage}, {"epochs_done", epochs_done}};
  std::vector<std::string> names;
  model_.visit_parameters([&](const std::string& n, Tensor<Scalar>&) { names.push_back(n); });
  nlohmann::json steps = nlohmann::json::object();
  for (auto& [gname, opt] : groups_) {
    const auto& states = opt.states();
    if (states.empty() || states.front().step == 0) continue;
    steps[gname] = states.front().step;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& p = opt.params()[i];
      std::string pname;
      model_.visit_parameters([&](const std::string& n, Tensor<Scalar>& q) {
        if (q.same_storage(p)) pname = n;
      });
      ckpt.records.push_back(detail::to_record(
          "opt." + gname + ".m." + pname, p.shape(), states[i].first_moment));
      ckpt.records.push_back(detail::to_record(
          "opt." + gname + ".v." + pname, p.shape(), states[i].second_moment));
    }
  }
  ckpt.metadata["optimizer_steps"] = steps;
  return ckpt;
}

template <typename Scalar>
void Trainer<Scalar>::restore(const Checkpoint& ckpt) {
  load_model(model_, ckpt);
  if (!ckpt.metadata.contains("optimizer_steps")) return;
  const auto& steps = ckpt.metadata.at("optimizer_steps");
  for (auto& [gname, opt] : groups_) {
    auto& states = opt.states();
    if (!steps.contains(gname)) {
      for (auto& s : states) s = AdamState<Scalar>{};
      continue;
    }
    const auto step = steps.at(gname).template get<std::int64_t>();
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& p = opt.params()[i];
      std::string pname;
      model_.visit_parameters([&](const std::string& n, Tensor<Scalar>& q) {
        if (q.same_storage(p)) pname = n;
      });
      states[i].first_moment = Matrix<Scalar>::Zero(p.rows(), p.cols());
      states[i].second_moment = Matrix<Scalar>::Zero(p.rows(), p.cols());
      detail::from_record(ckpt.at("opt." + gname + ".m." + pname), states[i].first_moment);
      detail::from_record(ckpt.at("opt." + gname + ".v." + pname), states[i].second_moment);
      states[i].step = step;
    }
  }
}

Progress checkpoint_progress(const Checkpoint& ckpt) {
  Progress p;
  if (!ckpt.metadata.contains("progress")) return p;
  const auto& j = ckpt.metadata.at("progress");
  p.stage = j.value("stage", "");
  p.epochs_done = j.value("epochs_done", 0);
  return p;
}

template <typename Scalar>
StageResult pretrain(const DatasetSplit& split, const TrainConfig& config, const ModelConfig& model_config,
                     const Checkpoint* resume, const CheckpointSink& sink) {
  config.validate();
  JointModel<Scalar> model(model_config_for(split, model_config), init_seed(config.seed));
  Trainer<Scalar> trainer(model, config);
  int start = 0;
  if (resume != nullptr) {
    const auto progress = checkpoint_progress(*resume);
    if (progress.stage != "pretrain") throw DataError("resume checkpoint is not a pretraining checkpoint");
    trainer.restore(*resume);
    start = progress.epochs_done;
  }
  const auto data = TrainingData<Scalar>::from_split(split);
  StageResult result;
  for (int epoch = start; epoch < config.pretrain_epochs; ++epoch) {
    result.log.push_back(trainer.pretrain_epoch(data, epoch));
    if (sink && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      sink(trainer.checkpoint("pretrain", epoch + 1), epoch + 1);
    }
  }
  result.checkpoint = trainer.checkpoint("pretrain", std::max(start, config.pretrain_epochs));
  return result;
}

template <typename Scalar>
StageResult train_joint(const DatasetSplit& split, const TrainConfig& config, const Checkpoint& start_ckpt,
                        const CheckpointSink& sink) {
  config.validate();
  if (!start_ckpt.metadata.contains("model")) throw DataError("starting checkpoint carries no model metadata");
  const auto stored = ModelConfig::from_json(start_ckpt.metadata.at("model"));
  if (stored != model_config_for(split, stored)) {
    throw DataError("starting checkpoint dimensions do not match the dataset");
  }
  JointModel<Scalar> model(stored, init_seed(config.seed));
  Trainer<Scalar> trainer(model, config);
  int start = 0;
  const auto progress = checkpoint_progress(start_ckpt);
  if (progress.stage == "joint") {
    trainer.restore(start_ckpt);
    start = progress.epochs_done;
  } else {
    load_model(model, start_ckpt);
  }
  const auto data = TrainingData<Scalar>::from_split(split);
  StageResult result;
  for (int epoch = start; epoch < config.joint_epochs; ++epoch) {
    result.log.push_back(trainer.joint_epoch(data, epoch));
    if (sink && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      sink(trainer.checkpoint("joint", epoch + 1), epoch + 1);
    }
  }
  result.checkpoint = trainer.checkpoint("joint", std::max(start, config.joint_epochs));
  return result;
}

template <typename Scalar>
EvaluationReport evaluate_checkpoint(const DatasetSplit& split, const Checkpoint& ckpt, int threads) {
  auto model = model_from_checkpoint<Scalar>(ckpt);
  if (model.config() != model_config_for(split, model.config())) {
    throw DataError("checkpoint dimensions do not match the dataset");
  }
  return evaluate(split, model, threads);
}

ExperimentResult run_experiment(const DatasetSplit& split, const TrainConfig& config, const Checkpoint& pretrained,
                                int threads) {
  auto stage = train_joint<float>(split, config, pretrained);
  ExperimentResult r;
  r.report = evaluate_checkpoint<float>(split, stage.checkpoint, threads);
  r.checkpoint = std::move(stage.checkpoint);
  r.log = std::move(stage.log);
  return r;
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "lambda_G" || name == "lambda_g" || name == "lambda-g") return SweepParam::kLambdaG;
  if (name == "lambda_D" || name == "lambda_d" || name == "lambda-d") return SweepParam::kLambdaD;
  throw ConfigError("sweep parameter must be lambda_G or lambda_D, got '" + name + "'");
}

std::string sweep_param_name(SweepParam p) { return p == SweepParam::kLambdaG ? "lambda_G" : "lambda_D"; }

std::vector<SweepRow> sweep(const DatasetSplit& split, SweepParam param, const std::vector<double>& values,
                            const TrainConfig& config, const Checkpoint& pretrained, int threads) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double value : values) {
    TrainConfig c = config;
    (param == SweepParam::kLambdaG ? c.lambda_g : c.lambda_d) = value;
    const auto r = run_experiment(split, c, pretrained, threads);
    rows.push_back(
        SweepRow{sweep_param_name(param), value, r.report.rank1, r.report.rank5, r.report.rank10, r.report.mean_ap});
  }
  return rows;
}

std::vector<SweepRow> lambda_protocol(const DatasetSplit& split, const std::vector<double>& lambda_g_values,
                                      const std::vector<double>& lambda_d_values, const TrainConfig& config,
                                      const Checkpoint& pretrained, int threads) {
  TrainConfig stage1 = config;
  stage1.lambda_d = 1.0;
  auto rows = sweep(split, SweepParam::kLambdaG, lambda_g_values, stage1, pretrained, threads);
  const auto best = std::max_element(rows.begin(), rows.end(),
                                     [](const SweepRow& a, const SweepRow& b) { return a.rank1 < b.rank1; });
  TrainConfig stage2 = config;
  stage2.lambda_g = best->value;
  auto second = sweep(split, SweepParam::kLambdaD, lambda_d_values, stage2, pretrained, threads);
  rows.insert(rows.end(), second.begin(), second.end());
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << "param,value,rank1,rank5,rank10,mAP\n";
  for (const auto& r : rows) {
    out << r.param << ',' << r.value << ',' << r.rank1 << ',' << r.rank5 << ',' << r.rank10 << ',' << r.mean_ap << '\n';
  }
  return out.str();
}

template struct TrainingData<float>;
template struct TrainingData<double>;
template class Trainer<float>;
template class Trainer<double>;
template StageResult pretrain<float>(const DatasetSplit&, const TrainConfig&, const ModelConfig&, const Checkpoint*,
                                     const CheckpointSink&);
template StageResult pretrain<double>(const DatasetSplit&, const TrainConfig&, const ModelConfig&, const Checkpoint*,
                                      const CheckpointSink&);
template StageResult train_joint<float>(const DatasetSplit&, const TrainConfig&, const Checkpoint&,
                                        const CheckpointSink&);
template StageResult train_joint<double>(const DatasetSplit&, const TrainConfig&, const Checkpoint&,
                                         const CheckpointSink&);
template EvaluationReport evaluate_checkpoint<float>(const DatasetSplit&, const Checkpoint&, int);
template EvaluationReport evaluate_checkpoint<double>(const DatasetSplit&, const Checkpoint&, int);

}  // namespace airid
