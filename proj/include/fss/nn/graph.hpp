#pragma once

#include "fss/types.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace fss::nn {

/// A named trainable tensor.  `grad` always has the shape of `value` and is
/// accumulated into by Graph::backward.
struct Parameter {
  std::string name;
  MatX value;
  MatX grad;

  Parameter() = default;
  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)), value(MatX::Zero(rows, cols)), grad(MatX::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

class Graph;

/// Lightweight handle to a node in a Graph.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  bool valid() const { return g != nullptr; }
  const MatX& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  double scalar() const;
};

/// Dynamic computation tape.  Node construction order is a topological
/// order; backward() walks it in reverse.  Every op checks its result for
/// NaN/Inf and throws on the first non-finite value.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant leaf (no gradient flows into it).
  Var constant(MatX v);

  /// Trainable leaf bound to a persistent parameter; backward() accumulates
  /// into p.grad.  In inference mode parameters enter as constants and no
  /// backward closures are built at all.
  Var param(Parameter& p);

  void set_inference(bool on) { inference_ = on; }
  bool inference() const { return inference_; }

  /// General node; used by ops and by custom losses with externally
  /// computed gradients (e.g. CTC).
  Var make_node(MatX value, std::vector<int> parents, BackwardFn back, const char* op_name);

  void backward(Var loss);

  const MatX& value(int id) const { return nodes_[id].value; }
  MatX& grad(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Accumulate into a parent's gradient only when it participates in
  /// training; no-op for constants.
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    if (nodes_[id].needs_grad) grad(id) += g;
  }

  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    MatX value;
    MatX grad;  // empty until touched
    std::vector<int> parents;
    BackwardFn back;
    Parameter* bound = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool inference_ = false;
};

// ---- ops ------------------------------------------------------------------
// All binary ops require operands from the same graph and throw
// std::invalid_argument naming the op and both shapes on any mismatch.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
/// alpha * a + beta (coefficient-wise).
Var affine(Var a, double alpha, double beta);
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }
/// Broadcast-add a column vector to every column of a.
Var add_colwise(Var a, Var bias);
/// Multiply / shift every coefficient by a trainable 1x1 scalar.
Var scalar_mul(Var a, Var s);
Var scalar_add(Var a, Var s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var square(Var a);
/// Copy of the p x q block at (i, j); backward scatters into the parent.
Var block(Var a, int i, int j, int p, int q);
Var hcat(const std::vector<Var>& parts);
Var vcat(const std::vector<Var>& parts);
Var select_cols(Var a, const std::vector<int>& cols);
/// Gather scattered coefficients into an n x 1 column.
Var gather(Var a, const std::vector<std::pair<int, int>>& coords);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
/// Scale every column to unit L2 norm; throws on a (near-)zero column.
Var normalize_cols(Var a);
Var softmax_cols(Var a);
/// Row-wise max over sliding windows of width k and the given stride
/// ("valid": windows fully inside the input).
Var max_pool_time(Var a, int k, int stride);
/// 1-D convolution over time with zero padding that preserves length.
/// x is Cin x T, w is Cout x (Cin*k), bias is Cout x 1.
Var conv1d_same(Var x, Var w, Var bias, int k);
/// Mean binary cross-entropy between sigmoid(logits) and targets in [0,1].
Var bce_with_logits_mean(Var logits, const MatX& targets);
/// Smooth-L1 (Huber) between pred and a constant target, summed over all
/// coefficients: quadratic within +-delta of the target, linear outside.
Var huber_sum(Var pred, const MatX& target, double delta = 1.0);

/// 1 - a.b/(|a||b|) for column vectors; range [0, 2]. Throws on zero vectors.
Var cosine_distance(Var a, Var b);
double cosine_distance(const VecX& a, const VecX& b);

}  // namespace fss::nn
