#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "airid/errors.hpp"

namespace airid {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

// Logical dimensions of a tensor. Rank 0 and rank 1 tensors are stored as a
// single row; rank 2 tensors are stored rows x cols, row-major.
using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until populated by backward
  Shape shape;
  bool requires_grad = false;
  bool is_leaf = true;

  void accumulate(const Matrix<Scalar>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

inline Index storage_rows(const Shape& shape) { return shape.size() == 2 ? shape[0] : 1; }

inline Index storage_cols(const Shape& shape) {
  if (shape.empty()) return 1;
  return shape.size() == 1 ? shape[0] : shape[1];
}

}  // namespace detail

/// Dense real tensor of rank 0, 1 or 2 with optional participation in the
/// active gradient tape. Copies share the underlying node.
template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() = default;

  explicit Tensor(Mat value, bool requires_grad = false) {
    Shape shape{value.rows(), value.cols()};
    *this = Tensor(std::move(shape), std::move(value), requires_grad);
  }

  Tensor(Shape shape, Mat value, bool requires_grad = false) : node_(std::make_shared<detail::Node<Scalar>>()) {
    if (shape.size() > 2) throw ShapeError("tensor rank above 2 is not supported: " + shape_string(shape));
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
    }
    if (value.rows() != detail::storage_rows(shape) || value.cols() != detail::storage_cols(shape)) {
      throw ShapeError("storage " + shape_string({value.rows(), value.cols()}) + " does not hold shape " +
                       shape_string(shape));
    }
    node_->value = std::move(value);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    Mat m(1, 1);
    m(0, 0) = v;
    return Tensor(Shape{}, std::move(m), requires_grad);
  }

  static Tensor vector(const Mat& row, bool requires_grad = false) {
    Mat m(1, row.size());
    Index k = 0;
    for (Index r = 0; r < row.rows(); ++r) {
      for (Index c = 0; c < row.cols(); ++c) m(0, k++) = row(r, c);
    }
    return Tensor(Shape{row.size()}, std::move(m), requires_grad);
  }

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return Tensor(shape, Mat::Zero(detail::storage_rows(shape), detail::storage_cols(shape)), requires_grad);
  }

  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  const Mat& value() const { return node_->value; }
  // Direct write access, for optimizers and initialisers only.
  Mat& mutable_value() { return node_->value; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const Mat& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  const NodePtr& node() const { return node_; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  NodePtr node_;
};

/// Records differentiable ops executed while it is alive on the current
/// thread. Tapes nest; the innermost one is active.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;
  using BackwardFn = std::function<void(const Mat& output_grad)>;

  struct Entry {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  Tape() : previous_(current_) { current_ = this; }
  ~Tape() { current_ = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return current_; }

  void record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward) {
    entries_.push_back(Entry{std::string(op), std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Populates grad on every requires_grad node reachable from `loss`,
  /// visiting entries in exact reverse order of recording, then resets the tape.
  void backward(const Tensor<Scalar>& loss) {
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got " + shape_string(loss.shape()));
    if (entries_.empty()) throw Error("backward called on an empty tape");
    if (!loss.requires_grad()) throw Error("backward: loss does not depend on any requires_grad tensor");
    loss.node()->accumulate(Mat::Ones(1, 1));
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output->grad.size() == 0) continue;
      it->backward(it->output->grad);
    }
    // Intermediate gradients are only meaningful during the sweep.
    for (auto& entry : entries_) entry.output->grad.resize(0, 0);
    entries_.clear();
  }

 private:
  static inline thread_local Tape* current_ = nullptr;
  Tape* previous_;
  std::vector<Entry> entries_;
};

template <typename Scalar>
void backward(const Tensor<Scalar>& loss, Tape<Scalar>& tape) {
  tape.backward(loss);
}

/// Same value, cut from the graph.
template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.shape(), t.value(), false);
}

}  // namespace airid
