#pragma once

// Forward (dual) and reverse (tape) automatic differentiation.
//
// Differentiable maps are written once against a "context" and evaluated
// under any of three of them:
//   PrimalContext  values only
//   DualContext    value + one tangent direction (JVP)
//   Tape           recorded for reverse sweeps (VJP)
// Each context exposes the same closed primitive set: add, sub, mul, div,
// scale/shift by a constant, pow with a constant exponent, exp, tanh, affine
// (W x + b, with W and b read out of a flat parameter vector), component,
// concat and sum.
//
// Values are matrices whose columns are independent evaluation points. A
// plain vector is a single column; a batch of shooting intervals is one
// column per interval. Elementwise ops act per entry, `affine` applies the
// same W and b to every column, `component(i)` takes row i, `concat` stacks
// rows and `sum` adds every entry.

#include <cmath>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "msnode/types.hpp"

namespace msnode::ad {

// Location of a row-major weight block W (rows x cols) and a bias b (rows)
// inside a flat parameter vector.
struct AffineBlock {
  Index weight_offset = 0;
  Index bias_offset = 0;
  Index rows = 0;
  Index cols = 0;
};

namespace kernels {

using ConstRowMap = Eigen::Map<const RowMatrix>;

inline ConstRowMap weight(const double* params, const AffineBlock& b) {
  return ConstRowMap(params + b.weight_offset, b.rows, b.cols);
}

void check_block(const Matrix& params, const AffineBlock& b, Index x_rows);
Matrix affine(const Matrix& params, const AffineBlock& b, const Matrix& x);
Matrix concat(std::span<const Matrix* const> parts);

inline void check_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": operand shapes differ (" + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  check_same(a, b, "add");
  return a + b;
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  check_same(a, b, "sub");
  return a - b;
}
inline Matrix mul(const Matrix& a, const Matrix& b) {
  check_same(a, b, "mul");
  return a.cwiseProduct(b);
}
inline Matrix div(const Matrix& a, const Matrix& b) {
  check_same(a, b, "div");
  return a.cwiseQuotient(b);
}
inline Matrix scale(const Matrix& a, double c) { return c * a; }
inline Matrix shift(const Matrix& a, double c) { return a.array() + c; }
inline Matrix pow(const Matrix& a, double c) { return a.array().pow(c); }
inline Matrix exp(const Matrix& a) { return a.array().exp(); }
// Written through exp, which Eigen vectorizes for doubles (its tanh is scalar
// for double). Absolute error stays near machine epsilon.
inline Matrix tanh(const Matrix& a) { return 1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0); }
inline Matrix component(const Matrix& a, Index i) {
  if (i < 0 || i >= a.rows()) throw DimensionError("component: index out of range");
  return a.row(i);
}
inline Matrix sum(const Matrix& a) { return Matrix::Constant(1, 1, a.sum()); }

}  // namespace kernels

// ---------------------------------------------------------------------------

class PrimalContext {
 public:
  using Value = Matrix;

  static const Matrix& primal(const Value& v) { return v; }
  Value constant(const Matrix& v) const { return v; }
  Value scalar(double c) const { return Matrix::Constant(1, 1, c); }

  Value add(const Value& a, const Value& b) const { return kernels::add(a, b); }
  Value sub(const Value& a, const Value& b) const { return kernels::sub(a, b); }
  Value mul(const Value& a, const Value& b) const { return kernels::mul(a, b); }
  Value div(const Value& a, const Value& b) const { return kernels::div(a, b); }
  Value scale(const Value& a, double c) const { return kernels::scale(a, c); }
  Value shift(const Value& a, double c) const { return kernels::shift(a, c); }
  Value pow(const Value& a, double c) const { return kernels::pow(a, c); }
  Value exp(const Value& a) const { return kernels::exp(a); }
  Value tanh(const Value& a) const { return kernels::tanh(a); }
  Value affine(const Value& params, const AffineBlock& b, const Value& x) const {
    return kernels::affine(params, b, x);
  }
  Value component(const Value& a, Index i) const { return kernels::component(a, i); }
  Value concat(const std::vector<Value>& parts) const;
  Value sum(const Value& a) const { return kernels::sum(a); }
};

// ---------------------------------------------------------------------------

// A value paired with one tangent of the same shape.
struct DualVector {
  Matrix primal;
  Matrix tangent;
  // Set when the tangent is known to be identically zero; lets affine skip
  // the dW·x term for parameters that are not being perturbed.
  bool zero_tangent = false;

  DualVector() = default;
  DualVector(Matrix p, Matrix t) : primal(std::move(p)), tangent(std::move(t)) {
    kernels::check_same(primal, tangent, "DualVector");
  }
  static DualVector constant(Matrix p) {
    DualVector d;
    d.tangent = Matrix::Zero(p.rows(), p.cols());
    d.primal = std::move(p);
    d.zero_tangent = true;
    return d;
  }
};

class DualContext {
 public:
  using Value = DualVector;

  static const Matrix& primal(const Value& v) { return v.primal; }
  Value constant(const Matrix& v) const { return DualVector::constant(v); }
  Value scalar(double c) const { return DualVector::constant(Matrix::Constant(1, 1, c)); }

  Value add(const Value& a, const Value& b) const;
  Value sub(const Value& a, const Value& b) const;
  Value mul(const Value& a, const Value& b) const;
  Value div(const Value& a, const Value& b) const;
  Value scale(const Value& a, double c) const;
  Value shift(const Value& a, double c) const;
  Value pow(const Value& a, double c) const;
  Value exp(const Value& a) const;
  Value tanh(const Value& a) const;
  Value affine(const Value& params, const AffineBlock& b, const Value& x) const;
  Value component(const Value& a, Index i) const;
  Value concat(const std::vector<Value>& parts) const;
  Value sum(const Value& a) const;
};

// ---------------------------------------------------------------------------

struct Var {
  Index id = -1;
};

class Tape;

// Result of one reverse sweep: an adjoint per tape slot.
class Adjoints {
 public:
  // Adjoint of `v`; zeros of the right shape when nothing reached it. In
  // per-column parameter mode, a parameter input has one column per batch
  // column.
  Matrix operator[](Var v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Matrix> adj_;
  Index param_columns_ = 0;
};

class Tape {
 public:
  using Value = Var;

  enum class Op { Input, Constant, Add, Sub, Mul, Div, Scale, Shift, Pow, Exp, Tanh, Affine,
                  Component, Concat, Sum };

  struct Seed {
    Var var;
    Matrix cotangent;
  };

  const Matrix& primal(Var v) const { return nodes_[check(v)].value; }
  Index node_count() const { return static_cast<Index>(nodes_.size()); }
  void clear() { nodes_.clear(); }

  // An independent variable: adjoints flow into it.
  Var input(const Matrix& v);
  Var constant(const Matrix& v);
  Var scalar(double c) { return constant(Matrix::Constant(1, 1, c)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  Var pow(Var a, double c);
  Var exp(Var a);
  Var tanh(Var a);
  Var affine(Var params, const AffineBlock& b, Var x);
  Var component(Var a, Index i);
  Var concat(const std::vector<Var>& parts);
  Var sum(Var a);

  // Reverse sweep from one or more seeded outputs, visiting operations in
  // exact reverse recording order.
  //
  // With `per_column_params` the adjoint of any input used as affine
  // parameters is kept separately for each batch column (P x B) instead of
  // being summed, which yields one parameter cotangent per column in a
  // single sweep.
  Adjoints backward(std::span<const Seed> seeds, bool per_column_params = false) const;
  Adjoints backward(Var output, const Matrix& cotangent, bool per_column_params = false) const {
    const Seed s{output, cotangent};
    return backward(std::span<const Seed>(&s, 1), per_column_params);
  }

  // Recompute every slot from the recorded inputs and constants; returns the
  // recomputed value of `v`. Matches the recorded value bit for bit.
  Matrix replay(Var v) const;

 private:
  friend class Adjoints;

  struct Node {
    Op op = Op::Input;
    Index a = -1;
    Index b = -1;
    double c = 0.0;
    AffineBlock block;
    std::vector<Index> parts;
    Matrix value;
    bool active = false;  // depends on at least one input
  };

  Index check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<Index>(nodes_.size())) {
      throw std::out_of_range("Tape: variable does not belong to this tape");
    }
    return v.id;
  }
  Var push(Node node);
  Var unary(Op op, Var a, double c, Matrix value);
  Matrix evaluate(const Node& node, const std::vector<Matrix>& values) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operator sugar so right-hand sides read like the equations they encode:
//   Term s(ctx, x);  auto a = s[0], b = s[1];  auto da = 1.5 * a - a * b;

template <class Ctx>
class Term {
 public:
  using Value = typename Ctx::Value;

  Term(Ctx& ctx, Value v) : ctx_(&ctx), v_(std::move(v)) {}

  Ctx& ctx() const { return *ctx_; }
  const Value& value() const { return v_; }
  Term operator[](Index i) const { return {*ctx_, ctx_->component(v_, i)}; }

  friend Term operator+(const Term& a, const Term& b) { return {*a.ctx_, a.ctx_->add(a.v_, b.v_)}; }
  friend Term operator-(const Term& a, const Term& b) { return {*a.ctx_, a.ctx_->sub(a.v_, b.v_)}; }
  friend Term operator*(const Term& a, const Term& b) { return {*a.ctx_, a.ctx_->mul(a.v_, b.v_)}; }
  friend Term operator/(const Term& a, const Term& b) { return {*a.ctx_, a.ctx_->div(a.v_, b.v_)}; }
  friend Term operator-(const Term& a) { return {*a.ctx_, a.ctx_->scale(a.v_, -1.0)}; }
  friend Term operator*(double c, const Term& a) { return {*a.ctx_, a.ctx_->scale(a.v_, c)}; }
  friend Term operator*(const Term& a, double c) { return c * a; }
  friend Term operator/(const Term& a, double c) { return (1.0 / c) * a; }
  friend Term operator+(const Term& a, double c) { return {*a.ctx_, a.ctx_->shift(a.v_, c)}; }
  friend Term operator+(double c, const Term& a) { return a + c; }
  friend Term operator-(const Term& a, double c) { return a + (-c); }
  friend Term operator-(double c, const Term& a) { return (-a) + c; }
  friend Term operator/(double c, const Term& a) {
    return {*a.ctx_, a.ctx_->scale(a.ctx_->pow(a.v_, -1.0), c)};
  }

 private:
  Ctx* ctx_;
  Value v_;
};

template <class Ctx>
Term<Ctx> exp(const Term<Ctx>& a) { return {a.ctx(), a.ctx().exp(a.value())}; }
template <class Ctx>
Term<Ctx> tanh(const Term<Ctx>& a) { return {a.ctx(), a.ctx().tanh(a.value())}; }
template <class Ctx>
Term<Ctx> pow(const Term<Ctx>& a, double c) { return {a.ctx(), a.ctx().pow(a.value(), c)}; }

// Stack scalar rows into one state value.
template <class Ctx>
typename Ctx::Value stack(std::initializer_list<Term<Ctx>> terms) {
  std::vector<typename Ctx::Value> parts;
  parts.reserve(terms.size());
  for (const auto& t : terms) parts.push_back(t.value());
  return terms.begin()->ctx().concat(parts);
}

// ---------------------------------------------------------------------------
// Functional entry points on plain vectors. `f` is a generic callable
// `f(ctx, x) -> ctx value`.

struct JvpResult {
  Vec value;
  Vec tangent;
  bool finite = true;
};

struct VjpResult {
  Vec value;
  Vec cotangent;  // wᵀ J, length len(x)
  bool finite = true;
};

template <class F>
JvpResult jvp(F&& f, const Vec& x, const Vec& v) {
  require_length(v.size(), x.size(), "jvp tangent");
  DualContext ctx;
  DualVector out = f(ctx, DualVector(Matrix(x), Matrix(v)));
  if (out.primal.cols() != 1) throw DimensionError("jvp: map must return a single column");
  JvpResult r{out.primal.col(0), out.tangent.col(0), true};
  r.finite = r.value.allFinite() && r.tangent.allFinite();
  return r;
}

template <class F>
VjpResult vjp(F&& f, const Vec& x, const Vec& w) {
  Tape tape;
  Var in = tape.input(Matrix(x));
  Var out = f(tape, in);
  const Matrix& y = tape.primal(out);
  if (y.cols() != 1) throw DimensionError("vjp: map must return a single column");
  require_length(w.size(), y.rows(), "vjp cotangent");
  Adjoints adj = tape.backward(out, Matrix(w));
  VjpResult r{y.col(0), adj[in].col(0), true};
  r.finite = r.value.allFinite() && r.cotangent.allFinite();
  return r;
}

template <class F>
Vec gradient(F&& f, const Vec& x) {
  Tape tape;
  Var in = tape.input(Matrix(x));
  Var out = f(tape, in);
  const Matrix& y = tape.primal(out);
  if (y.size() != 1) throw DimensionError("gradient: map is not scalar-valued");
  Vec g = tape.backward(out, Matrix::Ones(1, 1))[in].col(0);
  if (!g.allFinite() || !y.allFinite()) throw NonFiniteError("gradient: non-finite value");
  return g;
}

}  // namespace msnode::ad
