#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "airid/autograd/ops.hpp"
#include "airid/autograd/tensor.hpp"
#include "airid/checkpoint.hpp"
#include "airid/errors.hpp"
#include "json.hpp"

namespace airid {

/// How batch normalisation computes its statistics.
enum class Mode {
  kTrain,       // batch statistics, running statistics updated
  kBatchStats,  // batch statistics, running statistics untouched
  kEval,        // running statistics
};

enum class Activation { kNone, kRelu, kLeakyRelu, kTanh, kSigmoid };

struct ModelConfig {
  int attribute_size = 14;
  int embedding_size = 128;
  int num_train_ids = 40;
  int image_height = 16;
  int image_width = 8;
  int image_channels = 3;
  std::vector<int> generator_hidden{128, 256, 512};
  std::vector<int> image_hidden{512, 256};
  std::vector<int> discriminator_hidden{256, 64};
  double leaky_slope = 0.2;
  bool image_head_tanh = false;

  int image_input_size() const { return image_height * image_width * image_channels; }

  nlohmann::json to_json() const {
    return {{"attribute_size", attribute_size},
            {"embedding_size", embedding_size},
            {"num_train_ids", num_train_ids},
            {"image_height", image_height},
            {"image_width", image_width},
            {"image_channels", image_channels},
            {"generator_hidden", generator_hidden},
            {"image_hidden", image_hidden},
            {"discriminator_hidden", discriminator_hidden},
            {"leaky_slope", leaky_slope},
            {"image_head_tanh", image_head_tanh}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.attribute_size = j.at("attribute_size").get<int>();
      c.embedding_size = j.at("embedding_size").get<int>();
      c.num_train_ids = j.at("num_train_ids").get<int>();
      c.image_height = j.at("image_height").get<int>();
      c.image_width = j.at("image_width").get<int>();
      c.image_channels = j.at("image_channels").get<int>();
      c.generator_hidden = j.at("generator_hidden").get<std::vector<int>>();
      c.image_hidden = j.at("image_hidden").get<std::vector<int>>();
      c.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<int>>();
      c.leaky_slope = j.at("leaky_slope").get<double>();
      c.image_head_tanh = j.at("image_head_tanh").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("model metadata: ") + e.what());
    }
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using ParameterVisitor = std::function<void(const std::string& name, Tensor<Scalar>& param)>;
template <typename Scalar>
using BufferVisitor = std::function<void(const std::string& name, Matrix<Scalar>& buffer)>;

/// y = x W + b with W stored [in x out].
template <typename Scalar>
class Linear {
 public:
  Linear(int in, int out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<Scalar> w(in, out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    weight_ = Tensor<Scalar>(std::move(w), true);
    bias_ = Tensor<Scalar>::zeros({out}, true);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const { return add(matmul(x, weight_), bias_); }

  void visit(const std::string& prefix, const ParameterVisitor<Scalar>& fn) {
    fn(prefix + ".weight", weight_);
    fn(prefix + ".bias", bias_);
  }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }
  int in_features() const { return static_cast<int>(weight_.rows()); }
  int out_features() const { return static_cast<int>(weight_.cols()); }

 private:
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class BatchNorm1d {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  explicit BatchNorm1d(int features)
      : gamma_(Tensor<Scalar>::vector(Matrix<Scalar>::Ones(1, features), true)),
        beta_(Tensor<Scalar>::zeros({features}, true)),
        running_mean_(Matrix<Scalar>::Zero(1, features)),
        running_var_(Matrix<Scalar>::Ones(1, features)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    const auto eps = static_cast<Scalar>(kEps);
    if (mode == Mode::kEval) return batch_norm_inference(x, gamma_, beta_, running_mean_, running_var_, eps);
    Matrix<Scalar> mu, var;
    auto y = batch_norm(x, gamma_, beta_, eps, &mu, &var);
    if (mode == Mode::kTrain) {
      const auto m = static_cast<Scalar>(kMomentum);
      running_mean_ = running_mean_ * (Scalar(1) - m) + mu * m;
      running_var_ = running_var_ * (Scalar(1) - m) + var * m;
    }
    return y;
  }

  void visit(const std::string& prefix, const ParameterVisitor<Scalar>& fn) {
    fn(prefix + ".gamma", gamma_);
    fn(prefix + ".beta", beta_);
  }

  void visit_buffers(const std::string& prefix, const BufferVisitor<Scalar>& fn) {
    fn(prefix + ".running_mean", running_mean_);
    fn(prefix + ".running_var", running_var_);
  }

  Tensor<Scalar>& gamma() { return gamma_; }
  Tensor<Scalar>& beta() { return beta_; }
  Matrix<Scalar>& running_mean() { return running_mean_; }
  Matrix<Scalar>& running_var() { return running_var_; }

 private:
  Tensor<Scalar> gamma_;
  Tensor<Scalar> beta_;
  Matrix<Scalar> running_mean_;
  Matrix<Scalar> running_var_;
};

template <typename Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& x, Activation act, Scalar leaky_slope) {
  switch (act) {
    case Activation::kNone:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kLeakyRelu:
      return leaky_relu(x, leaky_slope);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
  }
  return x;
}

/// fc -> BN -> activation for each hidden width, then a final fc and an
/// optional output activation.
template <typename Scalar>
class FeedForward {
 public:
  FeedForward(int in, const std::vector<int>& hidden, int out, Activation hidden_act, Activation out_act,
              double leaky_slope, std::mt19937_64& rng)
      : in_(in), hidden_act_(hidden_act), out_act_(out_act), slope_(static_cast<Scalar>(leaky_slope)) {
    int width = in;
    for (int h : hidden) {
      fcs_.emplace_back(width, h, rng);
      bns_.emplace_back(h);
      width = h;
    }
    fcs_.emplace_back(width, out, rng);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    if (x.rank() != 2 || x.cols() != in_) {
      throw ShapeError("network input has shape " + shape_string(x.shape()) + ", expected [batch x " +
                       std::to_string(in_) + "]");
    }
    Tensor<Scalar> h = x;
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      h = activate(bns_[i].forward(fcs_[i].forward(h), mode), hidden_act_, slope_);
    }
    return activate(fcs_.back().forward(h), out_act_, slope_);
  }

  void visit(const std::string& prefix, const ParameterVisitor<Scalar>& fn) {
    for (std::size_t i = 0; i < fcs_.size(); ++i) {
      fcs_[i].visit(prefix + ".fc" + std::to_string(i + 1), fn);
      if (i < bns_.size()) bns_[i].visit(prefix + ".bn" + std::to_string(i + 1), fn);
    }
  }

  void visit_buffers(const std::string& prefix, const BufferVisitor<Scalar>& fn) {
    for (std::size_t i = 0; i < bns_.size(); ++i) bns_[i].visit_buffers(prefix + ".bn" + std::to_string(i + 1), fn);
  }

  std::vector<Linear<Scalar>>& layers() { return fcs_; }
  std::vector<BatchNorm1d<Scalar>>& norms() { return bns_; }
  int input_size() const { return in_; }

 private:
  int in_;
  Activation hidden_act_;
  Activation out_act_;
  Scalar slope_;
  std::vector<Linear<Scalar>> fcs_;
  std::vector<BatchNorm1d<Scalar>> bns_;
};

/// Attribute branch: fc/BN/ReLU x3 then fc and Tanh; outputs in (-1, 1).
template <typename Scalar>
class ConceptGenerator : public FeedForward<Scalar> {
 public:
  ConceptGenerator(const ModelConfig& c, std::mt19937_64& rng)
      : FeedForward<Scalar>(c.attribute_size, c.generator_hidden, c.embedding_size, Activation::kRelu,
                            Activation::kTanh, c.leaky_slope, rng) {}
};

/// Image branch: flattened pixels through fc/BN/LeakyReLU stacks to a linear
/// concept head.
template <typename Scalar>
class ImageConceptExtractor : public FeedForward<Scalar> {
 public:
  ImageConceptExtractor(const ModelConfig& c, std::mt19937_64& rng)
      : FeedForward<Scalar>(c.image_input_size(), c.image_hidden, c.embedding_size, Activation::kLeakyRelu,
                            c.image_head_tanh ? Activation::kTanh : Activation::kNone, c.leaky_slope, rng) {}
};

/// Concept discriminator: probability that a concept came from an image.
template <typename Scalar>
class ConceptDiscriminator : public FeedForward<Scalar> {
 public:
  ConceptDiscriminator(const ModelConfig& c, std::mt19937_64& rng)
      : FeedForward<Scalar>(c.embedding_size, c.discriminator_hidden, 1, Activation::kLeakyRelu, Activation::kSigmoid,
                            c.leaky_slope, rng) {}
};

/// Semantic-id classifier shared by image concepts and generated concepts.
template <typename Scalar>
class SemanticClassifier {
 public:
  SemanticClassifier(const ModelConfig& c, std::mt19937_64& rng) : fc_(c.embedding_size, c.num_train_ids, rng) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& concepts) const { return fc_.forward(concepts); }
  void visit(const std::string& prefix, const ParameterVisitor<Scalar>& fn) { fc_.visit(prefix + ".fc", fn); }
  Linear<Scalar>& layer() { return fc_; }

 private:
  Linear<Scalar> fc_;
};

/// Every network of the framework, initialised from one seed.
template <typename Scalar>
class JointModel {
 public:
  JointModel(const ModelConfig& config, std::uint64_t seed)
      : config_(config),
        rng_(seed),
        image(config, rng_),
        classifier(config, rng_),
        generator(config, rng_),
        discriminator(config, rng_) {}

  // Copies would alias parameter storage.
  JointModel(const JointModel&) = delete;
  JointModel& operator=(const JointModel&) = delete;
  JointModel(JointModel&&) = default;

  const ModelConfig& config() const { return config_; }

  void visit_parameters(const ParameterVisitor<Scalar>& fn) {
    image.visit("image", fn);
    classifier.visit("classifier", fn);
    generator.visit("generator", fn);
    discriminator.visit("discriminator", fn);
  }

  void visit_buffers(const BufferVisitor<Scalar>& fn) {
    image.visit_buffers("image", fn);
    generator.visit_buffers("generator", fn);
    discriminator.visit_buffers("discriminator", fn);
  }

  std::vector<Tensor<Scalar>> parameters_with_prefix(const std::string& prefix) {
    std::vector<Tensor<Scalar>> out;
    visit_parameters([&](const std::string& name, Tensor<Scalar>& p) {
      if (name.rfind(prefix + ".", 0) == 0) out.push_back(p);
    });
    return out;
  }

  std::size_t parameter_count(const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& p : parameters_with_prefix(prefix)) n += static_cast<std::size_t>(p.size());
    return n;
  }

  void zero_grad() {
    visit_parameters([](const std::string&, Tensor<Scalar>& p) { p.zero_grad(); });
  }

  void set_requires_grad(const std::string& prefix, bool flag) {
    for (auto& p : parameters_with_prefix(prefix)) p.set_requires_grad(flag);
  }

 private:
  ModelConfig config_;
  std::mt19937_64 rng_;

 public:
  ImageConceptExtractor<Scalar> image;
  SemanticClassifier<Scalar> classifier;
  ConceptGenerator<Scalar> generator;
  ConceptDiscriminator<Scalar> discriminator;
};

namespace detail {

template <typename Scalar>
CheckpointRecord to_record(const std::string& name, const Shape& shape, const Matrix<Scalar>& m) {
  CheckpointRecord r;
  r.name = name;
  for (Index d : shape) r.dims.push_back(static_cast<std::uint32_t>(d));
  r.data.resize(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) r.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return r;
}

template <typename Scalar>
void from_record(const CheckpointRecord& r, Matrix<Scalar>& m) {
  if (r.data.size() != static_cast<std::size_t>(m.size())) {
    throw DataError("checkpoint record '" + r.name + "' has " + std::to_string(r.data.size()) + " values, expected " +
                    std::to_string(m.size()));
  }
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(r.data[static_cast<std::size_t>(i)]);
}

}  // namespace detail

/// Appends model parameters and batch-norm running statistics as records and
/// stores the model config under metadata["model"].
template <typename Scalar>
void append_model(Checkpoint& ckpt, JointModel<Scalar>& model) {
  ckpt.metadata["model"] = model.config().to_json();
  model.visit_parameters([&](const std::string& name, Tensor<Scalar>& p) {
    ckpt.records.push_back(detail::to_record(name, p.shape(), p.value()));
  });
  model.visit_buffers([&](const std::string& name, Matrix<Scalar>& b) {
    ckpt.records.push_back(detail::to_record<Scalar>(name, Shape{b.cols()}, b));
  });
}

template <typename Scalar>
Checkpoint model_checkpoint(JointModel<Scalar>& model) {
  Checkpoint ckpt;
  append_model(ckpt, model);
  return ckpt;
}

/// Overwrites parameters and buffers from a checkpoint written for the same
/// model config.
template <typename Scalar>
void load_model(JointModel<Scalar>& model, const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model")) throw DataError("checkpoint carries no model metadata");
  const auto stored = ModelConfig::from_json(ckpt.metadata.at("model"));
  if (stored != model.config()) throw DataError("checkpoint model config does not match the requested model");
  model.visit_parameters(
      [&](const std::string& name, Tensor<Scalar>& p) { detail::from_record(ckpt.at(name), p.mutable_value()); });
  model.visit_buffers([&](const std::string& name, Matrix<Scalar>& b) { detail::from_record(ckpt.at(name), b); });
}

template <typename Scalar>
JointModel<Scalar> model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model")) throw DataError("checkpoint carries no model metadata");
  JointModel<Scalar> model(ModelConfig::from_json(ckpt.metadata.at("model")), 0);
  load_model(model, ckpt);
  return model;
}

}  // namespace airid
