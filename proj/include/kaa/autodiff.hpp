#pragma once

// Dense 64-bit tensors with reverse-mode differentiation over a recorded tape.
//
// A Tensor is a plain Eigen matrix: shape is (rows, cols); vectors are stored
// as single columns. Values on the tape are immutable once recorded. A Var is
// a lightweight handle (tape, node index) and is only meaningful while its
// tape is alive.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kaa/error.hpp"

namespace kaa {

using Tensor = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// "3x4" style rendering used in shape error messages.
std::string shape_string(Index rows, Index cols);

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

/// Negative slope used by every LeakyReLU in the library.
inline constexpr double kLeakySlope = 0.2;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Single-owner record of a computation. Not thread-safe; use one tape per task.
class Tape {
 public:
  /// Propagates the gradient of a node to its parents via accumulate().
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an operation node. `backward` is dropped when no parent needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, std::span<const Var> parents, Backward backward);

  const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

  /// Adds `g` into the gradient slot of `target`; no-op for constants.
  template <typename Derived>
  void accumulate(const Var& target, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[target.id_];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  /// Reverse sweep from a scalar loss. Gradients from a previous sweep are discarded.
  void backward(const Var& loss);

  /// Gradient after backward(); zeros of the value's shape when unreachable.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------
// Linear algebra and arithmetic

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cwise_product(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Adds a 1 x cols row vector to every row of x.
Var add_row_bias(const Var& x, const Var& bias);
/// Elementwise product with a constant mask (dropout, fixed weights).
Var mul_constant(const Var& x, const Tensor& mask);

inline Var operator*(const Var& a, const Var& b) { return matmul(a, b); }
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator-(const Var& x);

// ---------------------------------------------------------------------------
// Elementwise nonlinearities. Kinks use subgradient 0.

enum class ElementwiseKind { relu, leaky_relu, abs, neg, silu, elu, tanh, identity };

struct Elementwise {
  ElementwiseKind kind = ElementwiseKind::identity;
  double slope = kLeakySlope;  // leaky_relu only
};

Var elementwise(const Var& x, Elementwise op);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope = kLeakySlope);
Var abs(const Var& x);
Var silu(const Var& x);
Var elu(const Var& x);
Var tanh(const Var& x);

/// Row-wise cosine similarity of two equally shaped matrices; E x 1 result.
/// Throws DegenerateInputError when any row has zero norm.
Var cosine_rows(const Var& a, const Var& b);

/// Row-wise inner product; E x 1 result.
Var row_dot(const Var& a, const Var& b);

// ---------------------------------------------------------------------------
// Reductions and structure

Var sum(const Var& x);
Var mean(const Var& x);
Var gather_rows(const Var& x, std::span<const Index> rows);
Var concat_cols(std::span<const Var> parts);

// ---------------------------------------------------------------------------
// Graph segment operations. `segments[e]` is the segment of entry e.

/// Softmax within each segment with per-segment max subtraction.
Var segment_softmax(const Var& scores, std::span<const Index> segments, Index num_segments);
/// out[s] = sum over entries e in s of weights[e] * messages.row(e).
Var segment_weighted_sum(const Var& weights, const Var& messages,
                         std::span<const Index> segments, Index num_segments);
/// Row mean of x within each segment.
Var segment_mean(const Var& x, std::span<const Index> segments, Index num_segments);

// ---------------------------------------------------------------------------
// Losses

/// Mean negative log-likelihood of `labels[r]` over the listed rows of `logits`.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels,
                          std::span<const Index> rows);
/// Mean binary cross-entropy of an E x 1 logit column against 0/1 targets.
Var bce_with_logits(const Var& logits, const Vector& targets);

}  // namespace ad

// ---------------------------------------------------------------------------
// Tape-free kernels shared with the tape ops.

/// Softmax within segments. Throws ContractError for out-of-range ids or empty segments.
Vector segment_softmax(const Vector& scores, std::span<const Index> segments,
                       Index num_segments);

}  // namespace kaa
