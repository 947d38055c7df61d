#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dpse/errors.hpp"

/// Minimal reverse-mode automatic differentiation over dense row-major
/// tensors of rank <= 2 (a scalar is 1x1, a batch of vectors is B x D).
namespace dpse::ad {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Op {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  Shift,
  MatMul,
  Affine,
  Tanh,
  Sigmoid,
  Softplus,
  Log,
  Exp,
  Sqrt,
  Square,
  ClampMin,
  Sum,
  Mean,
  SumRows,
  Concat,
  Slice,
  Reshape,
  L1Norm,
  L1Rows,
  Min,
  MinRows,
  SmoothMin,
  SmoothMinRows,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, const Tensor&)>;

struct TapeNode {
  Op op = Op::Leaf;
  std::vector<std::size_t> inputs;
  Tensor value;
  bool requires_grad = false;
  BackwardFn backward;  // routes this node's gradient into its inputs
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var push(Op op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  /// Reverse sweep from a 1x1 root. Gradients of earlier calls are discarded.
  void backward(Var root);
  /// Gradient w.r.t. a node after backward(); zeros if not on any path.
  Tensor grad(Var v) const;

  const TapeNode& node(std::size_t id) const { return nodes_[id]; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].requires_grad) return;
    if (!has_grad_[id]) {
      grads_[id] = g;
      has_grad_[id] = true;
    } else {
      grads_[id] += g;
    }
  }

 private:
  std::vector<TapeNode> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var shift(Var a, double offset);
Var matmul(Var a, Var b);
/// x W + b, with the 1 x out bias broadcast over rows.
Var affine(Var x, Var weight, Var bias);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var log(Var a);
Var exp(Var a);
Var sqrt(Var a);
Var square(Var a);
Var clamp_min(Var a, double lower);
Var sum(Var a);
Var mean(Var a);
/// Row-wise sum: B x D -> B x 1.
Var sum_rows(Var a);
/// Column concatenation of equal-height tensors.
Var concat(std::span<const Var> parts);
/// Columns [start, start + count).
Var slice(Var a, Eigen::Index start, Eigen::Index count);
/// Row-major reinterpretation with the same element count.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var l1_norm(Var a);
Var l1_rows(Var a);
/// Exact minimum; the subgradient goes to the first argmin (row-major order).
Var min_reduce(Var a);
Var min_rows(Var a);
/// -tau log sum exp(-a / tau); lower bound of min within tau log(n).
Var smooth_min(Var a, double tau);
Var smooth_min_rows(Var a, double tau);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }
inline Var operator-(double c, Var a) { return shift(scale(a, -1.0), c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step = 0;
};

/// One bias-corrected adaptive-moment update, in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, const AdamConfig& cfg);

}  // namespace dpse::ad
