#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "airid/autograd/tensor.hpp"
#include "airid/errors.hpp"

namespace airid {

namespace detail {

template <typename Scalar>
void check_finite(std::string_view op, const Matrix<Scalar>& value) {
  if (!value.allFinite()) throw NumericError("non-finite output produced by op '" + std::string(op) + "'");
}

template <typename Scalar>
Tensor<Scalar> make_output(std::string_view op, Shape shape, Matrix<Scalar> value) {
  check_finite(op, value);
  return Tensor<Scalar>(std::move(shape), std::move(value), false);
}

// Records `out` on the active tape when any input participates in autodiff.
template <typename Scalar>
void record(std::string_view op, Tensor<Scalar>& out, std::initializer_list<const Tensor<Scalar>*> inputs,
            typename Tape<Scalar>::BackwardFn backward) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (tape == nullptr) return;
  bool any = false;
  std::vector<typename Tensor<Scalar>::NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const Tensor<Scalar>* in : inputs) {
    any = any || in->requires_grad();
    nodes.push_back(in->node());
  }
  if (!any) return;
  out.node()->requires_grad = true;
  out.node()->is_leaf = false;
  tape->record(op, std::move(nodes), out.node(), std::move(backward));
}

inline ShapeError shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  return ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

// True when `b` can be broadcast across the rows of `a` (a row vector of
// a's width).
template <typename Scalar>
bool row_broadcastable(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.rank() == 2 && b.rank() <= 2 && b.rows() == 1 && b.cols() == a.cols();
}

inline std::atomic<long>& clamp_warning_count() {
  static std::atomic<long> count{0};
  return count;
}

}  // namespace detail

/// Number of times log_clamp had to clamp an input since process start.
inline long clamp_warnings() { return detail::clamp_warning_count().load(); }

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) throw detail::shape_mismatch("matmul", a.shape(), b.shape());
  auto out = detail::make_output<Scalar>("matmul", {a.rows(), b.cols()}, a.value() * b.value());
  detail::record<Scalar>("matmul", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
    if (an->requires_grad) an->accumulate(g * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
  });
  return out;
}

/// Elementwise sum; `b` may also be a row vector broadcast over a's rows.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() == b.shape()) {
    auto out = detail::make_output<Scalar>("add", a.shape(), a.value() + b.value());
    detail::record<Scalar>("add", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(g);
    });
    return out;
  }
  if (!detail::row_broadcastable(a, b)) throw detail::shape_mismatch("add", a.shape(), b.shape());
  Matrix<Scalar> v = a.value().rowwise() + b.value().row(0);
  auto out = detail::make_output<Scalar>("add", a.shape(), std::move(v));
  detail::record<Scalar>("add", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
    if (an->requires_grad) an->accumulate(g);
    if (bn->requires_grad) bn->accumulate(g.colwise().sum());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() == b.shape()) {
    auto out = detail::make_output<Scalar>("sub", a.shape(), a.value() - b.value());
    detail::record<Scalar>("sub", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(-g);
    });
    return out;
  }
  if (!detail::row_broadcastable(a, b)) throw detail::shape_mismatch("sub", a.shape(), b.shape());
  Matrix<Scalar> v = a.value().rowwise() - b.value().row(0);
  auto out = detail::make_output<Scalar>("sub", a.shape(), std::move(v));
  detail::record<Scalar>("sub", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
    if (an->requires_grad) an->accumulate(g);
    if (bn->requires_grad) bn->accumulate(-g.colwise().sum());
  });
  return out;
}

/// Elementwise (Hadamard) product of equally shaped tensors.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw detail::shape_mismatch("mul", a.shape(), b.shape());
  Matrix<Scalar> v = a.value().cwiseProduct(b.value());
  auto out = detail::make_output<Scalar>("mul", a.shape(), std::move(v));
  detail::record<Scalar>("mul", out, {&a, &b}, [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
    if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  auto out = detail::make_output<Scalar>("scale", a.shape(), a.value() * factor);
  detail::record<Scalar>("scale", out, {&a}, [an = a.node(), factor](const Matrix<Scalar>& g) {
    an->accumulate(g * factor);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  Matrix<Scalar> v = a.value().array() + offset;
  auto out = detail::make_output<Scalar>("add_scalar", a.shape(), std::move(v));
  detail::record<Scalar>("add_scalar", out, {&a}, [an = a.node()](const Matrix<Scalar>& g) { an->accumulate(g); });
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  Matrix<Scalar> v = a.value().cwiseMax(Scalar(0));
  auto out = detail::make_output<Scalar>("relu", a.shape(), std::move(v));
  detail::record<Scalar>("relu", out, {&a}, [an = a.node()](const Matrix<Scalar>& g) {
    an->accumulate((an->value.array() > Scalar(0)).select(g.array(), Scalar(0)).matrix());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& a, Scalar slope) {
  Matrix<Scalar> v = (a.value().array() > Scalar(0)).select(a.value().array(), a.value().array() * slope).matrix();
  auto out = detail::make_output<Scalar>("leaky_relu", a.shape(), std::move(v));
  detail::record<Scalar>("leaky_relu", out, {&a}, [an = a.node(), slope](const Matrix<Scalar>& g) {
    an->accumulate((an->value.array() > Scalar(0)).select(g.array(), g.array() * slope).matrix());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  Matrix<Scalar> v = a.value().array().tanh();
  auto out = detail::make_output<Scalar>("tanh", a.shape(), v);
  detail::record<Scalar>("tanh", out, {&a}, [an = a.node(), y = std::move(v)](const Matrix<Scalar>& g) {
    an->accumulate((g.array() * (Scalar(1) - y.array().square())).matrix());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  // Split on sign so exp never overflows.
  Matrix<Scalar> v = a.value().unaryExpr([](Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  });
  auto out = detail::make_output<Scalar>("sigmoid", a.shape(), v);
  detail::record<Scalar>("sigmoid", out, {&a}, [an = a.node(), y = std::move(v)](const Matrix<Scalar>& g) {
    an->accumulate((g.array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  Matrix<Scalar> v = a.value().array().square();
  auto out = detail::make_output<Scalar>("square", a.shape(), std::move(v));
  detail::record<Scalar>("square", out, {&a}, [an = a.node()](const Matrix<Scalar>& g) {
    an->accumulate((g.array() * an->value.array() * Scalar(2)).matrix());
  });
  return out;
}

/// log(max(x, eps)); clamped entries receive zero gradient and bump the
/// clamp warning counter.
template <typename Scalar>
Tensor<Scalar> log_clamp(const Tensor<Scalar>& a, Scalar eps) {
  const Index clamped = (a.value().array() < eps).count();
  if (clamped > 0) {
    if (detail::clamp_warning_count().fetch_add(1) == 0) {
      std::cerr << "warning: log_clamp clamped " << clamped << " value(s) below " << eps << '\n';
    }
  }
  Matrix<Scalar> v = a.value().cwiseMax(eps).array().log();
  auto out = detail::make_output<Scalar>("log_clamp", a.shape(), std::move(v));
  detail::record<Scalar>("log_clamp", out, {&a}, [an = a.node(), eps](const Matrix<Scalar>& g) {
    an->accumulate((an->value.array() < eps).select(Scalar(0), g.array() / an->value.array()).matrix());
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  Matrix<Scalar> v(1, 1);
  v(0, 0) = a.value().sum();
  auto out = detail::make_output<Scalar>("sum", {}, std::move(v));
  detail::record<Scalar>("sum", out, {&a}, [an = a.node()](const Matrix<Scalar>& g) {
    an->accumulate(Matrix<Scalar>::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(a.size());
  Matrix<Scalar> v(1, 1);
  v(0, 0) = a.value().sum() / n;
  auto out = detail::make_output<Scalar>("mean", {}, std::move(v));
  detail::record<Scalar>("mean", out, {&a}, [an = a.node(), n](const Matrix<Scalar>& g) {
    an->accumulate(Matrix<Scalar>::Constant(an->value.rows(), an->value.cols(), g(0, 0) / n));
  });
  return out;
}

/// Per-column mean over the batch (rows): [n x d] -> [d].
template <typename Scalar>
Tensor<Scalar> batch_mean(const Tensor<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(a.rows());
  Matrix<Scalar> v = a.value().colwise().sum() / n;
  auto out = detail::make_output<Scalar>("batch_mean", {a.cols()}, std::move(v));
  detail::record<Scalar>("batch_mean", out, {&a}, [an = a.node(), n](const Matrix<Scalar>& g) {
    Matrix<Scalar> full = (g / n).replicate(an->value.rows(), 1);
    an->accumulate(full);
  });
  return out;
}

/// Frobenius norm of the whole tensor.
template <typename Scalar>
Tensor<Scalar> l2_norm(const Tensor<Scalar>& a) {
  const Scalar norm = a.value().norm();
  Matrix<Scalar> v(1, 1);
  v(0, 0) = norm;
  auto out = detail::make_output<Scalar>("l2_norm", {}, std::move(v));
  detail::record<Scalar>("l2_norm", out, {&a}, [an = a.node(), norm](const Matrix<Scalar>& g) {
    if (norm == Scalar(0)) {
      an->accumulate(Matrix<Scalar>::Zero(an->value.rows(), an->value.cols()));
    } else {
      an->accumulate(an->value * (g(0, 0) / norm));
    }
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  if (a.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor, got " + shape_string(a.shape()));
  Matrix<Scalar> v = a.value().transpose();
  auto out = detail::make_output<Scalar>("transpose", {a.cols(), a.rows()}, std::move(v));
  detail::record<Scalar>("transpose", out, {&a}, [an = a.node()](const Matrix<Scalar>& g) {
    an->accumulate(g.transpose());
  });
  return out;
}

/// Concatenates rank-2 tensors along `axis` (0 stacks rows, 1 joins columns).
template <typename Scalar>
Tensor<Scalar> concat(const Tensor<Scalar>& a, const Tensor<Scalar>& b, int axis) {
  if (a.rank() != 2 || b.rank() != 2) throw detail::shape_mismatch("concat", a.shape(), b.shape());
  Matrix<Scalar> v;
  Shape shape;
  if (axis == 0) {
    if (a.cols() != b.cols()) throw detail::shape_mismatch("concat", a.shape(), b.shape());
    v.resize(a.rows() + b.rows(), a.cols());
    v << a.value(), b.value();
    shape = {a.rows() + b.rows(), a.cols()};
  } else if (axis == 1) {
    if (a.rows() != b.rows()) throw detail::shape_mismatch("concat", a.shape(), b.shape());
    v.resize(a.rows(), a.cols() + b.cols());
    v << a.value(), b.value();
    shape = {a.rows(), a.cols() + b.cols()};
  } else {
    throw ShapeError("concat: axis must be 0 or 1");
  }
  auto out = detail::make_output<Scalar>("concat", std::move(shape), std::move(v));
  detail::record<Scalar>("concat", out, {&a, &b}, [an = a.node(), bn = b.node(), axis](const Matrix<Scalar>& g) {
    if (axis == 0) {
      if (an->requires_grad) an->accumulate(g.topRows(an->value.rows()));
      if (bn->requires_grad) bn->accumulate(g.bottomRows(bn->value.rows()));
    } else {
      if (an->requires_grad) an->accumulate(g.leftCols(an->value.cols()));
      if (bn->requires_grad) bn->accumulate(g.rightCols(bn->value.cols()));
    }
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index begin, Index count) {
  if (a.rank() != 2 || begin < 0 || count <= 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(a.shape()));
  }
  Matrix<Scalar> v = a.value().middleRows(begin, count);
  auto out = detail::make_output<Scalar>("slice_rows", {count, a.cols()}, std::move(v));
  detail::record<Scalar>("slice_rows", out, {&a}, [an = a.node(), begin, count](const Matrix<Scalar>& g) {
    Matrix<Scalar> full = Matrix<Scalar>::Zero(an->value.rows(), an->value.cols());
    full.middleRows(begin, count) = g;
    an->accumulate(full);
  });
  return out;
}

/// Mean over the batch of -log softmax(logits)[target]; max-subtracted for
/// stability.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<Index>(targets.size()) != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const Index n = logits.rows();
  const Index k = logits.cols();
  for (Index i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] >= k) {
      throw DataError("softmax_cross_entropy: class index " + std::to_string(targets[i]) + " at row " +
                      std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  Matrix<Scalar> probs(n, k);
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    const auto row = logits.value().row(i);
    const Scalar m = row.maxCoeff();
    const auto shifted = (row.array() - m).exp();
    const Scalar z = shifted.sum();
    probs.row(i) = shifted / z;
    total += std::log(z) + m - row(targets[i]);
  }
  Matrix<Scalar> v(1, 1);
  v(0, 0) = total / static_cast<Scalar>(n);
  auto out = detail::make_output<Scalar>("softmax_cross_entropy", {}, std::move(v));
  std::vector<int> tgt(targets.begin(), targets.end());
  detail::record<Scalar>("softmax_cross_entropy", out, {&logits},
                         [ln = logits.node(), p = std::move(probs), tgt = std::move(tgt)](const Matrix<Scalar>& g) {
                           Matrix<Scalar> d = p;
                           for (std::size_t i = 0; i < tgt.size(); ++i) d(static_cast<Index>(i), tgt[i]) -= Scalar(1);
                           ln->accumulate(d * (g(0, 0) / static_cast<Scalar>(tgt.size())));
                         });
  return out;
}

/// Training-mode batch normalisation over rows with biased batch variance.
/// Writes the batch statistics to `batch_mean_out` / `batch_var_out` when
/// provided.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta, Scalar eps,
                          Matrix<Scalar>* batch_mean_out = nullptr, Matrix<Scalar>* batch_var_out = nullptr) {
  if (x.rank() != 2 || gamma.cols() != x.cols() || beta.cols() != x.cols() || gamma.rows() != 1 || beta.rows() != 1) {
    throw detail::shape_mismatch("batch_norm", x.shape(), gamma.shape());
  }
  const Index n = x.rows();
  if (n < 2) throw ShapeError("batch_norm: training mode needs a batch of at least 2, got " + shape_string(x.shape()));
  const Matrix<Scalar> mu = x.value().colwise().mean();
  const Matrix<Scalar> centered = x.value().rowwise() - mu.row(0);
  const Matrix<Scalar> var = centered.array().square().colwise().sum() / static_cast<Scalar>(n);
  const Matrix<Scalar> inv_std = (var.array() + eps).rsqrt();
  Matrix<Scalar> xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix<Scalar> y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  if (batch_mean_out) *batch_mean_out = mu;
  if (batch_var_out) *batch_var_out = var;
  auto out = detail::make_output<Scalar>("batch_norm", x.shape(), std::move(y));
  detail::record<Scalar>(
      "batch_norm", out, {&x, &gamma, &beta},
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat), inv_std](const Matrix<Scalar>& g) {
        const Scalar count = static_cast<Scalar>(g.rows());
        if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bn->requires_grad) bn->accumulate(g.colwise().sum());
        if (xn->requires_grad) {
          const Matrix<Scalar> dxhat = g.array().rowwise() * gn->value.row(0).array();
          const Matrix<Scalar> sum_d = dxhat.colwise().sum();
          const Matrix<Scalar> sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix<Scalar> dx = (dxhat * count).rowwise() - sum_d.row(0);
          dx -= (xhat.array().rowwise() * sum_dx.row(0).array()).matrix();
          dx = (dx.array().rowwise() * (inv_std.row(0).array() / count)).matrix();
          xn->accumulate(dx);
        }
      });
  return out;
}

/// Inference-mode batch normalisation with fixed statistics.
template <typename Scalar>
Tensor<Scalar> batch_norm_inference(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                                    const Matrix<Scalar>& mean_stat, const Matrix<Scalar>& var_stat, Scalar eps) {
  if (x.rank() != 2 || gamma.cols() != x.cols() || beta.cols() != x.cols() || mean_stat.cols() != x.cols() ||
      var_stat.cols() != x.cols()) {
    throw detail::shape_mismatch("batch_norm_inference", x.shape(), gamma.shape());
  }
  const Matrix<Scalar> inv_std = (var_stat.array() + eps).rsqrt();
  Matrix<Scalar> xhat = (x.value().rowwise() - mean_stat.row(0)).array().rowwise() * inv_std.row(0).array();
  Matrix<Scalar> y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  auto out = detail::make_output<Scalar>("batch_norm_inference", x.shape(), std::move(y));
  detail::record<Scalar>(
      "batch_norm_inference", out, {&x, &gamma, &beta},
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat), inv_std](const Matrix<Scalar>& g) {
        if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bn->requires_grad) bn->accumulate(g.colwise().sum());
        if (xn->requires_grad) {
          xn->accumulate((g.array().rowwise() * (gn->value.row(0).array() * inv_std.row(0).array())).matrix());
        }
      });
  return out;
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}

template <typename Scalar>
Tensor<Scalar> operator*(Scalar factor, const Tensor<Scalar>& a) {
  return scale(a, factor);
}

}  // namespace airid
