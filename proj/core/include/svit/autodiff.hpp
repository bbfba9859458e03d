#pragma once

// Minimal reverse-mode differentiation over Matrix values.
//
// A Tape records every operation applied to Vars in creation order, which is
// also a valid topological order. backward() walks the records in reverse and
// accumulates adjoints. Leaves created with a gradient sink add their adjoint
// into that sink, so several tapes can share one gradient buffer layout.
//
// Non-smooth primitives (abs, min, max, clamp, relu) fold their branch
// decisions into a running signature; two evaluations with equal signatures
// were evaluated on the same smooth piece, which the finite-difference checker
// relies on.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "svit/matrix.hpp"

namespace svit::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose adjoint is added into *grad_sink by backward(); a null sink
  /// makes the leaf a constant.
  Var leaf(Matrix value, Matrix* grad_sink);

  Var record(Matrix value, std::vector<std::size_t> parents, Backward fn);

  /// Propagates d(root)/d(.) scaled by seed into every leaf sink.
  void backward(Var root, double seed = 1.0);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Adjoint buffer of a node, allocated on first use. Only valid during
  /// backward() and only for nodes that require a gradient.
  Matrix& grad_buffer(std::size_t id);

  void note_branch(bool taken);
  std::uint64_t branch_signature() const { return signature_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    Backward backward;
    Matrix* sink = nullptr;
    bool requires_grad = false;
  };

  Var make_var(std::size_t id) { return Var(this, id); }

  std::vector<Node> nodes_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
  std::uint64_t branch_count_ = 0;
};

// Linear algebra.
Var matmul(Var a, Var b);     // (m x k)(k x n)
Var matmul_nt(Var a, Var b);  // (m x k)(n x k)^T
Var linear(Var x, Var weight, Var bias);  // x W + b, bias is 1 x n

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// Smooth unary maps.
Var sigmoid(Var a);
Var gelu(Var a);

// Non-smooth unary/binary maps; each records its branch decisions.
Var abs(Var a);
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);

// Row-wise normalisations.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);

// Structural.
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var table, std::vector<std::size_t> indices);

// Reductions.
Var mean_rows(Var x);                           // 1 x cols
Var mean_row_groups(Var x, std::size_t group);  // (rows/group) x cols
Var sum_all(Var x);                             // 1 x 1
Var mean_all(Var x);                            // 1 x 1

// Losses with fused, numerically stable gradients. Both are elementwise /
// row-wise; reduce with mean_all.
Var bce_with_logits(Var logits, const Matrix& targets);
Var cross_entropy_rows(Var logits, std::vector<std::size_t> labels);  // rows x 1

}  // namespace svit::ad
