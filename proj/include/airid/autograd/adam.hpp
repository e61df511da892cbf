#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "airid/autograd/tensor.hpp"
#include "airid/errors.hpp"

namespace airid {

enum class WeightDecayMode {
  kDecoupled,  // param <- param - lr * wd * param, before the moment update
  kL2,         // grad <- grad + wd * param
};

enum class OptimizerKind { kAdam, kSgdMomentum };

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
  WeightDecayMode decay_mode = WeightDecayMode::kDecoupled;
  OptimizerKind kind = OptimizerKind::kAdam;
};

/// Per-parameter optimizer state. For SGD-with-momentum `first_moment`
/// holds the velocity and `second_moment` stays zero.
template <typename Scalar>
struct AdamState {
  Matrix<Scalar> first_moment;
  Matrix<Scalar> second_moment;
  std::int64_t step = 0;
};

template <typename Scalar>
void adam_step(Tensor<Scalar>& param, AdamState<Scalar>& state, const AdamOptions& options) {
  if (!param.has_grad()) throw Error("adam_step: parameter has no gradient " + shape_string(param.shape()));
  auto& p = param.mutable_value();
  if (state.first_moment.size() == 0) {
    state.first_moment = Matrix<Scalar>::Zero(p.rows(), p.cols());
    state.second_moment = Matrix<Scalar>::Zero(p.rows(), p.cols());
  }
  if (state.first_moment.rows() != p.rows() || state.first_moment.cols() != p.cols()) {
    throw ShapeError("adam_step: moment buffers do not match parameter " + shape_string(param.shape()));
  }
  const auto lr = static_cast<Scalar>(options.lr);
  const auto wd = static_cast<Scalar>(options.weight_decay);
  Matrix<Scalar> g = param.grad();
  ++state.step;

  if (options.decay_mode == WeightDecayMode::kDecoupled) {
    p -= p * (lr * wd);
  } else {
    g += p * wd;
  }

  const auto beta1 = static_cast<Scalar>(options.beta1);
  if (options.kind == OptimizerKind::kSgdMomentum) {
    state.first_moment = state.first_moment * beta1 + g;
    p -= state.first_moment * lr;
    return;
  }

  const auto beta2 = static_cast<Scalar>(options.beta2);
  const auto eps = static_cast<Scalar>(options.eps);
  state.first_moment = state.first_moment * beta1 + g * (Scalar(1) - beta1);
  state.second_moment = state.second_moment * beta2 + g.cwiseProduct(g) * (Scalar(1) - beta2);
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar correction1 = Scalar(1) - std::pow(beta1, t);
  const Scalar correction2 = Scalar(1) - std::pow(beta2, t);
  const auto m_hat = state.first_moment.array() / correction1;
  const auto v_hat = state.second_moment.array() / correction2;
  p.array() -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// A named parameter group sharing one set of hyperparameters, with
/// independent moment buffers per parameter.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<Scalar>> params, AdamOptions options)
      : params_(std::move(params)), states_(params_.size()), options_(options) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i], states_[i], options_);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor<Scalar>>& params() const { return params_; }
  std::vector<AdamState<Scalar>>& states() { return states_; }
  const std::vector<AdamState<Scalar>>& states() const { return states_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<AdamState<Scalar>> states_;
  AdamOptions options_;
};

}  // namespace airid
