#pragma once

#include "dawn/diff/parameters.hpp"

#include <array>
#include <functional>
#include <vector>

namespace dawn::diff {

enum class OpTag {
  Constant,
  Input,
  Param,
  MatMul,
  AddBias,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Relu,
  Tanh,
  Exp,
  Log,
  Square,
  Clamp,
  Minimum,
  ConcatCols,
  SliceCols,
  SumRows,
  MeanRows,
  MeanAll,
  SumAll,
  LayerNorm,
  Hyperspherical,
  Softmax,
  LogSoftmax,
  QuantileHuber,
};

const char* op_name(OpTag tag);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  double item() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode computation graph.
///
/// Nodes are appended in evaluation order, so reverse creation order is a valid
/// topological order and the graph is acyclic by construction. Parameters are
/// referenced, not copied: backward() accumulates into Parameter::grad.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Matrix value;
    Matrix grad;  // empty until backward reaches the node
    OpTag tag = OpTag::Constant;
    std::array<int, 3> parents{-1, -1, -1};
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var constant(Matrix value);
  Var input(Matrix value, bool requires_grad);
  /// A trainable=false parameter behaves like a constant (frozen critic during the actor step).
  Var param(Parameter& p, bool trainable = true);

  Var push(Matrix value, OpTag tag, std::array<int, 3> parents, BackwardFn backward);

  /// Seeds d(output)/d(output) = 1 and propagates. Output must be 1x1.
  void backward(Var output);

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g into the gradient of node id (allocating zeros on first touch).
  void accumulate(int id, const Matrix& g);
  bool needs_grad(int id) const { return id >= 0 && node(id).requires_grad; }

 private:
  std::vector<Node> nodes_;
};

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b);
/// x (B x n) + bias (1 x n) broadcast over rows.
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Values clamped to [lo, hi]; gradient passes only where lo < x < hi.
Var clamp(Var a, double lo, double hi);
/// Elementwise minimum; ties route the gradient to the first operand.
Var minimum(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var sum_rows(Var a);   // B x n -> B x 1
Var mean_rows(Var a);  // B x n -> B x 1
Var mean_all(Var a);   // -> 1 x 1
Var sum_all(Var a);    // -> 1 x 1
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

/// Row-wise layer normalization with per-feature affine parameters (1 x F each).
Var layer_norm(Var x, Var gamma, Var beta, double eps);

/// Hyperspherical layer: y_bj = s_j * (w_j / |w_j|) . (x_b / |x_b|).
/// weight is (out x in) with rows as directions, scale is (1 x out).
/// Rows of x with norm below zero_guard map to zero output.
Var hyperspherical(Var x, Var weight, Var scale, double zero_guard = 1e-12);

/// Mean over batch and over all (current, target) pairs of the quantile Huber loss.
/// theta: B x N current quantiles; targets: B x M constants; taus: N fractions.
Var quantile_huber(Var theta, const Matrix& targets, const Vector& taus, double kappa);

}  // namespace dawn::diff
