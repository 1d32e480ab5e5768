#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mto/common.hpp"

// Reverse-mode automatic differentiation over matrix-valued expressions.
// A Tape records one forward pass; backward() replays it in reverse and
// accumulates gradients into every leaf that was marked trainable.
// Scalars are 1x1 matrices. Replaying the same graph twice produces
// bit-identical gradients: traversal order is the recording order.
namespace mto::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() : tape_(nullptr), id_(-1) {}
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_;
  int id_;
};

class Tape {
 public:
  // Trainable input: gradients accumulate here.
  Var leaf(const Matrix& value);
  // Recorded value that never receives a gradient.
  Var constant(const Matrix& value);
  Var scalar(double value);  // 1x1 constant

  // Generic node builder used by all op helpers and by external custom ops
  // (e.g. a linear solve with a hand-written adjoint). `pull` receives the
  // node's output gradient and must accumulate() into the parents it cares
  // about. When no parent is differentiable the closure is dropped.
  Var op(const Matrix& value, const std::vector<Var>& parents,
         const std::function<void(Tape&, const Matrix& grad_out)>& pull);

  void accumulate(Var v, const Matrix& g);

  // Seeds root (must be 1x1) with 1 and sweeps the tape in reverse.
  // Gradients from a previous backward() are discarded first.
  void backward(Var root);

  const Matrix& val(Var v) const;
  Matrix grad(Var v) const;  // zero matrix if nothing reached v
  bool needs_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool touched = false;
    std::function<void(Tape&)> backward;
  };
  std::vector<Node> nodes_;
  const Node& node(Var v) const;
  Node& node(Var v);
};

// Elementwise and linear-algebra primitives. Shapes are validated eagerly;
// mul/div accept equal shapes or a 1x1 on either side (scalar broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double k);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var add_rowvec(Var a, Var r);  // broadcast a 1xM row over an NxM matrix
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var vexp(Var a);
Var vlog(Var a);
Var vsin(Var a);
Var vcos(Var a);
Var vsqrt(Var a);
Var sum(Var a);   // 1x1
Var mean(Var a);  // 1x1
Var dot(Var a, Var b);
Var cols(Var a, int j0, int n);  // column block

}  // namespace mto::ad
