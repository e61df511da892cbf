#include <gtest/gtest.h>

#include <cmath>

#include "airid/autograd/adam.hpp"
#include "support/gradcheck.hpp"

using namespace airid;
using namespace airid::testing;

namespace {

// Scalar reference written from the textbook update rule.
struct ScalarAdam {
  double lr, b1, b2, eps, wd;
  bool decoupled;
  double m = 0, v = 0;
  int t = 0;

  double step(double p, double g) {
    ++t;
    if (decoupled) {
      p -= lr * wd * p;
    } else {
      g += wd * p;
    }
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

void set_grad(T& p, const Mat& g) {
  p.zero_grad();
  p.node()->accumulate(g);
}

}  // namespace

TEST(Adam, MatchesScalarReference) {
  for (bool decoupled : {true, false}) {
    AdamOptions opt;
    opt.lr = 0.05;
    opt.weight_decay = 0.01;
    opt.decay_mode = decoupled ? WeightDecayMode::kDecoupled : WeightDecayMode::kL2;
    std::mt19937_64 rng(3);
    Mat start = random_matrix(rng, 3, 4);
    T p(start, true);
    AdamState<double> state;
    std::vector<ScalarAdam> ref(12, ScalarAdam{opt.lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay, decoupled});
    Mat expected = start;
    for (int step = 0; step < 20; ++step) {
      Mat g = random_matrix(rng, 3, 4);
      set_grad(p, g);
      adam_step(p, state, opt);
      for (Index i = 0; i < 12; ++i) expected.data()[i] = ref[i].step(expected.data()[i], g.data()[i]);
    }
    EXPECT_EQ(state.step, 20);
    for (Index i = 0; i < 12; ++i) EXPECT_NEAR(p.value().data()[i], expected.data()[i], 1e-13);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps).
  AdamOptions opt;
  opt.lr = 0.01;
  opt.weight_decay = 0;
  T p(Mat::Constant(1, 3, 1.0), true);
  Mat g(1, 3);
  g << 2.0, -0.5, 1e3;
  set_grad(p, g);
  AdamState<double> s;
  adam_step(p, s, opt);
  EXPECT_NEAR(p.value()(0, 0), 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.value()(0, 1), 1.0 + 0.01, 1e-9);
  EXPECT_NEAR(p.value()(0, 2), 1.0 - 0.01, 1e-9);
}

TEST(Adam, ZeroLearningRateIsBitIdentical) {
  std::mt19937_64 rng(9);
  Mat start = random_matrix(rng, 5, 5);
  T p(start, true);
  AdamOptions opt;
  opt.lr = 0;
  AdamState<double> s;
  for (int i = 0; i < 10; ++i) {
    set_grad(p, random_matrix(rng, 5, 5));
    adam_step(p, s, opt);
  }
  EXPECT_EQ(std::memcmp(p.value().data(), start.data(), sizeof(double) * 25), 0);
}

TEST(Adam, ZeroGradientZeroDecayLeavesParamAndCountsStep) {
  T p(Mat::Constant(2, 2, 0.3), true);
  set_grad(p, Mat::Zero(2, 2));
  AdamOptions opt;
  opt.weight_decay = 0;
  AdamState<double> s;
  adam_step(p, s, opt);
  EXPECT_EQ(p.value(), Mat::Constant(2, 2, 0.3));
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, MissingGradientThrows) {
  T p(Mat::Ones(2, 2), true);
  AdamState<double> s;
  EXPECT_THROW(adam_step(p, s, AdamOptions{}), Error);
}

TEST(Adam, MomentShapeMismatchThrows) {
  T p(Mat::Ones(2, 2), true);
  set_grad(p, Mat::Ones(2, 2));
  AdamState<double> s;
  s.first_moment = Mat::Zero(3, 3);
  s.second_moment = Mat::Zero(3, 3);
  EXPECT_THROW(adam_step(p, s, AdamOptions{}), ShapeError);
}

TEST(Adam, GroupsKeepIndependentMoments) {
  T a(Mat::Ones(1, 2), true), b(Mat::Ones(1, 2), true);
  AdamOptions fast, slow;
  fast.lr = 0.1;
  slow.lr = 0.001;
  Adam<double> ga({a}, fast), gb({b}, slow);
  set_grad(a, Mat::Ones(1, 2));
  set_grad(b, Mat::Ones(1, 2));
  ga.step();
  EXPECT_EQ(gb.states()[0].step, 0);
  EXPECT_EQ(b.value(), Mat::Ones(1, 2));
  gb.step();
  EXPECT_NEAR(1.0 - a.value()(0, 0), 100 * (1.0 - b.value()(0, 0)), 1e-6);
  ga.zero_grad();
  EXPECT_FALSE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
}

TEST(Adam, SgdMomentumFallback) {
  AdamOptions opt;
  opt.kind = OptimizerKind::kSgdMomentum;
  opt.lr = 0.1;
  opt.weight_decay = 0;
  T p(Mat::Zero(1, 1), true);
  AdamState<double> s;
  set_grad(p, Mat::Ones(1, 1));
  adam_step(p, s, opt);
  set_grad(p, Mat::Ones(1, 1));
  adam_step(p, s, opt);
  // v1 = 1, v2 = 0.9 + 1; p = -0.1 * (1 + 1.9)
  EXPECT_NEAR(p.value()(0, 0), -0.29, 1e-12);
}

TEST(Adam, MinimisesQuadratic) {
  T p(Mat::Constant(1, 3, 4.0), true);
  AdamOptions opt;
  opt.lr = 0.05;
  opt.weight_decay = 0;
  Adam<double> adam({p}, opt);
  for (int i = 0; i < 2000; ++i) {
    Tape<double> tape;
    tape.backward(sum(square(add_scalar(p, -1.5))));
    adam.step();
    adam.zero_grad();
  }
  EXPECT_TRUE(p.value().isApprox(Mat::Constant(1, 3, 1.5), 1e-3));
}
