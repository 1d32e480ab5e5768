#include "mto/autodiff.hpp"

#include <cmath>

namespace mto::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail_numeric(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                 std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                 std::to_string(b.cols()));
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

Tape& same_tape(Var a, Var b, const char* what) {
  require(a.valid() && b.valid() && a.tape() == b.tape(), ErrorKind::Numeric,
          std::string(what) + ": operands from different tapes");
  return *a.tape();
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  require(v.valid() && v.tape() == this && v.id() < static_cast<int>(nodes_.size()),
          ErrorKind::Numeric, "tape: stale or foreign variable");
  return nodes_[static_cast<std::size_t>(v.id())];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::leaf(const Matrix& value) {
  Node n;
  n.value = value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(const Matrix& value) {
  Node n;
  n.value = value;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(m);
}

Var Tape::op(const Matrix& value, const std::vector<Var>& parents,
             const std::function<void(Tape&, const Matrix& grad_out)>& pull) {
  require(value.allFinite(), ErrorKind::Numeric, "tape: op produced a non-finite value");
  Node n;
  n.value = value;
  for (Var p : parents) {
    require(p.valid() && p.tape() == this, ErrorKind::Numeric, "tape: parent from another tape");
    if (node(p).needs_grad) n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  if (nodes_[static_cast<std::size_t>(id)].needs_grad && pull)
    nodes_[static_cast<std::size_t>(id)].backward = [pull, id](Tape& t) {
      pull(t, t.nodes_[static_cast<std::size_t>(id)].grad);
    };
  return Var(this, id);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  check_same_shape(n.value, g, "accumulate");
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
  n.touched = true;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  require(is_scalar(r.value), ErrorKind::Numeric, "backward: root must be 1x1");
  require(r.needs_grad, ErrorKind::Numeric, "backward: root does not depend on any leaf");
  for (Node& n : nodes_) {
    n.grad.resize(0, 0);
    n.touched = false;
  }
  r.grad = Matrix::Ones(1, 1);
  r.touched = true;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.touched && n.backward) n.backward(*this);
  }
}

const Matrix& Tape::val(Var v) const { return node(v).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.touched) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tape::needs_grad(Var v) const { return node(v).needs_grad; }

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  check_same_shape(t.val(a), t.val(b), "add");
  return t.op(t.val(a) + t.val(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  check_same_shape(t.val(a), t.val(b), "sub");
  return t.op(t.val(a) - t.val(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, Matrix(-g));
  });
}

Var neg(Var a) {
  Tape& t = *a.tape();
  return t.op(-t.val(a), {a},
              [a](Tape& tp, const Matrix& g) { tp.accumulate(a, Matrix(-g)); });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Matrix& va = t.val(a);
  const Matrix& vb = t.val(b);
  if (is_scalar(va) && !is_scalar(vb)) return mul(b, a);
  if (!is_scalar(va) && is_scalar(vb)) {
    return t.op(va * vb(0, 0), {a, b}, [a, b](Tape& tp, const Matrix& g) {
      tp.accumulate(a, Matrix(g * tp.val(b)(0, 0)));
      Matrix gb(1, 1);
      gb(0, 0) = (g.array() * tp.val(a).array()).sum();
      tp.accumulate(b, gb);
    });
  }
  check_same_shape(va, vb, "mul");
  return t.op(va.cwiseProduct(vb), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g.cwiseProduct(tp.val(b))));
    tp.accumulate(b, Matrix(g.cwiseProduct(tp.val(a))));
  });
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b, "div");
  const Matrix& va = t.val(a);
  const Matrix& vb = t.val(b);
  if (!is_scalar(vb)) check_same_shape(va, vb, "div");
  Matrix out = is_scalar(vb) ? Matrix(va / vb(0, 0)) : Matrix(va.cwiseQuotient(vb));
  return t.op(out, {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& pa = tp.val(a);
    const Matrix& pb = tp.val(b);
    if (pb.rows() == 1 && pb.cols() == 1) {
      tp.accumulate(a, Matrix(g / pb(0, 0)));
      Matrix gb(1, 1);
      gb(0, 0) = -(g.array() * pa.array()).sum() / (pb(0, 0) * pb(0, 0));
      tp.accumulate(b, gb);
    } else {
      tp.accumulate(a, Matrix(g.cwiseQuotient(pb)));
      tp.accumulate(b, Matrix(-g.cwiseProduct(pa).cwiseQuotient(pb.cwiseProduct(pb))));
    }
  });
}

Var scale(Var a, double k) {
  Tape& t = *a.tape();
  return t.op(t.val(a) * k, {a},
              [a, k](Tape& tp, const Matrix& g) { tp.accumulate(a, Matrix(g * k)); });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape();
  return t.op(t.val(a).array() + c, {a},
              [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  require(t.val(a).cols() == t.val(b).rows(), ErrorKind::Numeric,
          "matmul: inner dimensions disagree");
  return t.op(t.val(a) * t.val(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g * tp.val(b).transpose()));
    tp.accumulate(b, Matrix(tp.val(a).transpose() * g));
  });
}

Var add_rowvec(Var a, Var r) {
  Tape& t = same_tape(a, r, "add_rowvec");
  const Matrix& va = t.val(a);
  const Matrix& vr = t.val(r);
  require(vr.rows() == 1 && vr.cols() == va.cols(), ErrorKind::Numeric,
          "add_rowvec: row vector width must match matrix");
  Matrix out = va;
  out.rowwise() += vr.row(0);
  return t.op(out, {a, r}, [a, r](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(r, Matrix(g.colwise().sum()));
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Matrix out = t.val(a).unaryExpr(sig);
  return t.op(out, {a}, [a, sig](Tape& tp, const Matrix& g) {
    Matrix s = tp.val(a).unaryExpr(sig);
    tp.accumulate(a, Matrix(g.array() * s.array() * (1.0 - s.array())));
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape();
  Matrix out = t.val(a).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return t.op(out, {a}, [a, slope](Tape& tp, const Matrix& g) {
    Matrix m = tp.val(a).unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    tp.accumulate(a, Matrix(g.cwiseProduct(m)));
  });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var vexp(Var a) {
  Tape& t = *a.tape();
  Matrix out = t.val(a).array().exp();
  return t.op(out, {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g.array() * tp.val(a).array().exp()));
  });
}

Var vlog(Var a) {
  Tape& t = *a.tape();
  return t.op(t.val(a).array().log(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g.cwiseQuotient(tp.val(a))));
  });
}

Var vsin(Var a) {
  Tape& t = *a.tape();
  return t.op(t.val(a).array().sin(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g.array() * tp.val(a).array().cos()));
  });
}

Var vcos(Var a) {
  Tape& t = *a.tape();
  return t.op(t.val(a).array().cos(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(-g.array() * tp.val(a).array().sin()));
  });
}

Var vsqrt(Var a) {
  Tape& t = *a.tape();
  Matrix out = t.val(a).array().sqrt();
  return t.op(out, {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g.array() * 0.5 / tp.val(a).array().sqrt()));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = t.val(a).sum();
  return t.op(out, {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& va = tp.val(a);
    tp.accumulate(a, Matrix(Matrix::Constant(va.rows(), va.cols(), g(0, 0))));
  });
}

Var mean(Var a) {
  Tape& t = *a.tape();
  double n = static_cast<double>(t.val(a).size());
  return scale(sum(a), 1.0 / n);
}

Var dot(Var a, Var b) {
  Tape& t = same_tape(a, b, "dot");
  check_same_shape(t.val(a), t.val(b), "dot");
  Matrix out(1, 1);
  out(0, 0) = (t.val(a).array() * t.val(b).array()).sum();
  return t.op(out, {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(tp.val(b) * g(0, 0)));
    tp.accumulate(b, Matrix(tp.val(a) * g(0, 0)));
  });
}

Var cols(Var a, int j0, int n) {
  Tape& t = *a.tape();
  const Matrix& va = t.val(a);
  require(j0 >= 0 && n >= 1 && j0 + n <= va.cols(), ErrorKind::Numeric,
          "cols: block out of range");
  return t.op(va.middleCols(j0, n), {a}, [a, j0, n](Tape& tp, const Matrix& g) {
    const Matrix& va2 = tp.val(a);
    Matrix full = Matrix::Zero(va2.rows(), va2.cols());
    full.middleCols(j0, n) = g;
    tp.accumulate(a, full);
  });
}

}  // namespace mto::ad
