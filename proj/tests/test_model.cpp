#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include <unistd.h>

#include "airid/autograd/adam.hpp"
#include "airid/losses.hpp"
#include "airid/model.hpp"
#include "support/gradcheck.hpp"

using namespace airid;
using namespace airid::testing;

namespace {

std::size_t fc(std::size_t in, std::size_t out) { return in * out + out; }

template <typename S>
void zero_all(FeedForward<S>& net) {
  for (auto& l : net.layers()) {
    l.weight().mutable_value().setZero();
    l.bias().mutable_value().setZero();
  }
}

}  // namespace

TEST(Model, ParameterCountsAreClosedForm) {
  ModelConfig c;
  JointModel<float> m(c, 1);
  const std::size_t a = 14, e = 128, k = 40, px = 16 * 8 * 3;
  const std::size_t generator = fc(a, 128) + fc(128, 256) + fc(256, 512) + fc(512, e) + 2 * (128 + 256 + 512);
  const std::size_t image = fc(px, 512) + fc(512, 256) + fc(256, e) + 2 * (512 + 256);
  const std::size_t discriminator = fc(e, 256) + fc(256, 64) + fc(64, 1) + 2 * (256 + 64);
  EXPECT_EQ(m.parameter_count("generator"), generator);
  EXPECT_EQ(m.parameter_count("image"), image);
  EXPECT_EQ(m.parameter_count("discriminator"), discriminator);
  EXPECT_EQ(m.parameter_count("classifier"), fc(e, k));
}

TEST(Model, OutputShapesAndRanges) {
  ModelConfig c;
  JointModel<double> m(c, 2);
  std::mt19937_64 rng(1);
  T attrs(random_matrix(rng, 5, 14, 0, 1));
  T images(random_matrix(rng, 5, c.image_input_size(), 0, 1));
  auto ca = m.generator.forward(attrs, Mode::kTrain);
  auto ci = m.image.forward(images, Mode::kTrain);
  EXPECT_EQ(ca.shape(), (Shape{5, 128}));
  EXPECT_EQ(ci.shape(), (Shape{5, 128}));
  EXPECT_LT(ca.value().cwiseAbs().maxCoeff(), 1.0);
  EXPECT_TRUE(ci.value().allFinite());
  // A linear head is free to leave (-1, 1).
  EXPECT_GT(ci.value().cwiseAbs().maxCoeff(), 1.0);
  auto d = m.discriminator.forward(ca, Mode::kTrain);
  EXPECT_EQ(d.shape(), (Shape{5, 1}));
  EXPECT_GT(d.value().minCoeff(), 0.0);
  EXPECT_LT(d.value().maxCoeff(), 1.0);
  EXPECT_EQ(m.classifier.forward(ci).shape(), (Shape{5, 40}));
}

TEST(Model, ZeroWeightsGiveTanhZeroAndHalfProbability) {
  ModelConfig c;
  JointModel<double> m(c, 3);
  zero_all(m.generator);
  std::mt19937_64 rng(2);
  T attrs(random_matrix(rng, 4, 14, 0, 1));
  EXPECT_EQ(m.generator.forward(attrs, Mode::kTrain).value(), Mat::Zero(4, 128));

  m.discriminator.layers().back().weight().mutable_value().setZero();
  m.discriminator.layers().back().bias().mutable_value().setZero();
  T x(random_matrix(rng, 4, 128));
  EXPECT_EQ(m.discriminator.forward(x, Mode::kTrain).value(), Mat::Constant(4, 1, 0.5));
}

TEST(Model, ImageHeadTanhToggle) {
  ModelConfig c;
  c.image_head_tanh = true;
  JointModel<double> m(c, 4);
  std::mt19937_64 rng(3);
  T images(random_matrix(rng, 6, c.image_input_size(), 0, 1));
  EXPECT_LT(m.image.forward(images, Mode::kTrain).value().cwiseAbs().maxCoeff(), 1.0);
}

TEST(Model, InitialisationIsSeeded) {
  ModelConfig c;
  JointModel<float> a(c, 9), b(c, 9), other(c, 10);
  EXPECT_EQ(a.generator.layers()[0].weight().value(), b.generator.layers()[0].weight().value());
  EXPECT_NE(a.generator.layers()[0].weight().value(), other.generator.layers()[0].weight().value());
  const double bound = std::sqrt(6.0 / (14 + 128));
  EXPECT_LE(a.generator.layers()[0].weight().value().cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.generator.layers()[0].bias().value(), Matrix<float>::Zero(1, 128));
  EXPECT_EQ(a.generator.norms()[0].gamma().value(), Matrix<float>::Ones(1, 128));
}

TEST(Model, InputWidthIsChecked) {
  ModelConfig c;
  JointModel<double> m(c, 1);
  EXPECT_THROW(m.generator.forward(T(Mat::Ones(3, 13)), Mode::kTrain), ShapeError);
  EXPECT_THROW(m.image.forward(T(Mat::Ones(1, c.image_input_size())), Mode::kTrain), ShapeError);
  EXPECT_NO_THROW(m.image.forward(T(Mat::Ones(1, c.image_input_size())), Mode::kEval));
}

TEST(BatchNorm, ModesAndRunningStatistics) {
  BatchNorm1d<double> bn(3);
  std::mt19937_64 rng(5);
  T x(random_matrix(rng, 8, 3, -2, 3));
  const auto train = bn.forward(x, Mode::kBatchStats).value();
  EXPECT_EQ(bn.running_mean(), Mat::Zero(1, 3));
  const auto eval = bn.forward(x, Mode::kEval).value();
  EXPECT_GT((train - eval).cwiseAbs().maxCoeff(), 1e-3);

  // One kTrain pass moves running stats by momentum 0.1 towards the batch.
  const Mat mu = x.value().colwise().mean();
  const Mat var = (x.value().rowwise() - mu.row(0)).array().square().colwise().mean();
  bn.forward(x, Mode::kTrain);
  EXPECT_TRUE(bn.running_mean().isApprox(0.1 * mu));
  EXPECT_TRUE(bn.running_var().isApprox(0.9 * Mat::Ones(1, 3) + 0.1 * var));

  bn.running_mean() = mu;
  bn.running_var() = var;
  const auto matched = bn.forward(x, Mode::kEval).value();
  EXPECT_LT((train - matched).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, SharedClassifierServesBothBranches) {
  // A step driven only by l_sc on generated concepts changes the logits of
  // image concepts.
  ModelConfig c;
  JointModel<double> m(c, 6);
  std::mt19937_64 rng(7);
  T attrs(random_matrix(rng, 4, 14, 0, 1));
  T images(random_matrix(rng, 4, c.image_input_size(), 0, 1));
  const std::vector<int> ids{0, 1, 2, 3};
  const auto ci = detach(m.image.forward(images, Mode::kEval));
  const Mat before = m.classifier.forward(ci).value();
  {
    Tape<double> tape;
    auto loss = semantic_consistency_loss(m.classifier.forward(m.generator.forward(attrs, Mode::kTrain)),
                                          std::span<const int>(ids));
    tape.backward(loss);
  }
  Adam<double> opt(m.parameters_with_prefix("classifier"), AdamOptions{});
  opt.step();
  EXPECT_GT((m.classifier.forward(ci).value() - before).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Model, CheckpointEvalIsBitExact) {
  ModelConfig c;
  JointModel<float> m(c, 8);
  std::mt19937_64 rng(9);
  Tensor<float> images(random_matrix(rng, 16, c.image_input_size(), 0, 1).cast<float>());
  Tensor<float> attrs(random_matrix(rng, 16, 14, 0, 1).cast<float>());
  // Populate running statistics with something other than the defaults.
  for (int i = 0; i < 3; ++i) {
    m.image.forward(images, Mode::kTrain);
    m.generator.forward(attrs, Mode::kTrain);
  }
  const auto path = std::filesystem::temp_directory_path() / ("airid_model_" + std::to_string(::getpid()) + ".airc");
  write_checkpoint(path, model_checkpoint(m));
  auto restored = model_from_checkpoint<float>(read_checkpoint(path));
  std::filesystem::remove(path);

  const auto a = m.image.forward(images, Mode::kEval).value();
  const auto b = restored.image.forward(images, Mode::kEval).value();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
  const auto ga = m.generator.forward(attrs, Mode::kEval).value();
  const auto gb = restored.generator.forward(attrs, Mode::kEval).value();
  EXPECT_EQ(ga, gb);
}

TEST(Model, CheckpointRejectsOtherConfig) {
  ModelConfig c;
  JointModel<float> m(c, 1);
  auto ckpt = model_checkpoint(m);
  ModelConfig other = c;
  other.embedding_size = 64;
  JointModel<float> n(other, 1);
  EXPECT_THROW(load_model(n, ckpt), DataError);
  ckpt.records.pop_back();
  EXPECT_THROW(load_model(m, ckpt), DataError);
}

TEST(Model, FreezingClearsRequiresGrad) {
  ModelConfig c;
  JointModel<double> m(c, 1);
  m.set_requires_grad("discriminator", false);
  for (auto& p : m.parameters_with_prefix("discriminator")) EXPECT_FALSE(p.requires_grad());
  for (auto& p : m.parameters_with_prefix("generator")) EXPECT_TRUE(p.requires_grad());
}
