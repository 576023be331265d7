#include "msnode/ad.hpp"

#include <algorithm>
#include <map>

namespace msnode::ad {

namespace kernels {

void check_block(const Matrix& params, const AffineBlock& b, Index x_rows) {
  if (params.cols() != 1) throw DimensionError("affine: parameters must be a single column");
  if (b.cols != x_rows) {
    throw DimensionError("affine: input length " + std::to_string(x_rows) +
                         " does not match weight columns " + std::to_string(b.cols));
  }
  if (b.weight_offset < 0 || b.weight_offset + b.rows * b.cols > params.rows() ||
      b.bias_offset < 0 || b.bias_offset + b.rows > params.rows()) {
    throw DimensionError("affine: block lies outside the parameter vector");
  }
}

Matrix affine(const Matrix& params, const AffineBlock& b, const Matrix& x) {
  check_block(params, b, x.rows());
  Matrix y(b.rows, x.cols());
  y.noalias() = weight(params.data(), b) * x;
  y.colwise() += params.col(0).segment(b.bias_offset, b.rows);
  return y;
}

Matrix concat(std::span<const Matrix* const> parts) {
  if (parts.empty()) return Matrix();
  Index total = 0;
  const Index cols = parts.front()->cols();
  for (const Matrix* p : parts) {
    if (p->cols() != cols) throw DimensionError("concat: column counts differ");
    total += p->rows();
  }
  Matrix out(total, cols);
  Index at = 0;
  for (const Matrix* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------

Matrix PrimalContext::concat(const std::vector<Value>& parts) const {
  std::vector<const Matrix*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return kernels::concat(ptrs);
}

// ---------------------------------------------------------------------------

namespace {

DualVector make(Matrix p, Matrix t, bool zero = false) {
  DualVector d;
  d.primal = std::move(p);
  d.tangent = std::move(t);
  d.zero_tangent = zero;
  return d;
}

}  // namespace

DualVector DualContext::add(const Value& a, const Value& b) const {
  return make(kernels::add(a.primal, b.primal), a.tangent + b.tangent,
              a.zero_tangent && b.zero_tangent);
}

DualVector DualContext::sub(const Value& a, const Value& b) const {
  return make(kernels::sub(a.primal, b.primal), a.tangent - b.tangent,
              a.zero_tangent && b.zero_tangent);
}

DualVector DualContext::mul(const Value& a, const Value& b) const {
  Matrix y = kernels::mul(a.primal, b.primal);
  Matrix t = a.tangent.cwiseProduct(b.primal) + a.primal.cwiseProduct(b.tangent);
  return make(std::move(y), std::move(t), a.zero_tangent && b.zero_tangent);
}

DualVector DualContext::div(const Value& a, const Value& b) const {
  Matrix y = kernels::div(a.primal, b.primal);
  Matrix t = (a.tangent - y.cwiseProduct(b.tangent)).cwiseQuotient(b.primal);
  return make(std::move(y), std::move(t), a.zero_tangent && b.zero_tangent);
}

DualVector DualContext::scale(const Value& a, double c) const {
  return make(kernels::scale(a.primal, c), c * a.tangent, a.zero_tangent);
}

DualVector DualContext::shift(const Value& a, double c) const {
  return make(kernels::shift(a.primal, c), a.tangent, a.zero_tangent);
}

DualVector DualContext::pow(const Value& a, double c) const {
  Matrix d = c * a.primal.array().pow(c - 1.0);
  return make(kernels::pow(a.primal, c), d.cwiseProduct(a.tangent), a.zero_tangent);
}

DualVector DualContext::exp(const Value& a) const {
  Matrix y = kernels::exp(a.primal);
  Matrix t = y.cwiseProduct(a.tangent);
  return make(std::move(y), std::move(t), a.zero_tangent);
}

DualVector DualContext::tanh(const Value& a) const {
  Matrix y = kernels::tanh(a.primal);
  Matrix t = (1.0 - y.array().square()).matrix().cwiseProduct(a.tangent);
  return make(std::move(y), std::move(t), a.zero_tangent);
}

DualVector DualContext::affine(const Value& params, const AffineBlock& b, const Value& x) const {
  Matrix y = kernels::affine(params.primal, b, x.primal);
  Matrix t(b.rows, x.primal.cols());
  if (params.zero_tangent) {
    t.setZero();
  } else {
    t.noalias() = kernels::weight(params.tangent.data(), b) * x.primal;
    t.colwise() += params.tangent.col(0).segment(b.bias_offset, b.rows);
  }
  if (!x.zero_tangent) t.noalias() += kernels::weight(params.primal.data(), b) * x.tangent;
  return make(std::move(y), std::move(t), params.zero_tangent && x.zero_tangent);
}

DualVector DualContext::component(const Value& a, Index i) const {
  return make(kernels::component(a.primal, i), a.tangent.row(i), a.zero_tangent);
}

DualVector DualContext::concat(const std::vector<Value>& parts) const {
  std::vector<const Matrix*> p;
  std::vector<const Matrix*> t;
  bool zero = true;
  for (const auto& part : parts) {
    p.push_back(&part.primal);
    t.push_back(&part.tangent);
    zero = zero && part.zero_tangent;
  }
  return make(kernels::concat(p), kernels::concat(t), zero);
}

DualVector DualContext::sum(const Value& a) const {
  return make(kernels::sum(a.primal), Matrix::Constant(1, 1, a.tangent.sum()), a.zero_tangent);
}

// ---------------------------------------------------------------------------

Matrix Adjoints::operator[](Var v) const {
  if (v.id < 0 || v.id >= static_cast<Index>(adj_.size())) {
    throw std::out_of_range("Adjoints: variable does not belong to this tape");
  }
  if (adj_[v.id].size() == 0) {
    const Matrix& value = tape_->nodes_[v.id].value;
    return Matrix::Zero(value.rows(), value.cols());
  }
  return adj_[v.id];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<Index>(nodes_.size()) - 1};
}

Var Tape::input(const Matrix& v) {
  Node n;
  n.op = Op::Input;
  n.value = v;
  n.active = true;
  return push(std::move(n));
}

Var Tape::constant(const Matrix& v) {
  Node n;
  n.op = Op::Constant;
  n.value = v;
  return push(std::move(n));
}

Var Tape::unary(Op op, Var a, double c, Matrix value) {
  Node n;
  n.op = op;
  n.a = check(a);
  n.c = c;
  n.value = std::move(value);
  n.active = nodes_[a.id].active;
  return push(std::move(n));
}

#define MSNODE_TAPE_BINARY(NAME, OP)                                 \
  Var Tape::NAME(Var a, Var b) {                                     \
    Node n;                                                          \
    n.op = Op::OP;                                                   \
    n.a = check(a);                                                  \
    n.b = check(b);                                                  \
    n.value = kernels::NAME(nodes_[a.id].value, nodes_[b.id].value); \
    n.active = nodes_[a.id].active || nodes_[b.id].active;           \
    return push(std::move(n));                                       \
  }

MSNODE_TAPE_BINARY(add, Add)
MSNODE_TAPE_BINARY(sub, Sub)
MSNODE_TAPE_BINARY(mul, Mul)
MSNODE_TAPE_BINARY(div, Div)

#undef MSNODE_TAPE_BINARY

Var Tape::scale(Var a, double c) { return unary(Op::Scale, a, c, kernels::scale(primal(a), c)); }
Var Tape::shift(Var a, double c) { return unary(Op::Shift, a, c, kernels::shift(primal(a), c)); }
Var Tape::pow(Var a, double c) { return unary(Op::Pow, a, c, kernels::pow(primal(a), c)); }
Var Tape::exp(Var a) { return unary(Op::Exp, a, 0.0, kernels::exp(primal(a))); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a, 0.0, kernels::tanh(primal(a))); }
Var Tape::sum(Var a) { return unary(Op::Sum, a, 0.0, kernels::sum(primal(a))); }

Var Tape::component(Var a, Index i) {
  Node n;
  n.op = Op::Component;
  n.a = check(a);
  n.b = i;
  n.value = kernels::component(nodes_[a.id].value, i);
  n.active = nodes_[a.id].active;
  return push(std::move(n));
}

Var Tape::affine(Var params, const AffineBlock& b, Var x) {
  Node n;
  n.op = Op::Affine;
  n.a = check(params);
  n.b = check(x);
  n.block = b;
  n.value = kernels::affine(nodes_[params.id].value, b, nodes_[x.id].value);
  n.active = nodes_[params.id].active || nodes_[x.id].active;
  return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts) {
  Node n;
  n.op = Op::Concat;
  std::vector<const Matrix*> ptrs;
  for (Var p : parts) {
    n.parts.push_back(check(p));
    ptrs.push_back(&nodes_[p.id].value);
    n.active = n.active || nodes_[p.id].active;
  }
  n.value = kernels::concat(ptrs);
  return push(std::move(n));
}

Matrix Tape::evaluate(const Node& n, const std::vector<Matrix>& v) const {
  switch (n.op) {
    case Op::Input:
    case Op::Constant: return n.value;
    case Op::Add: return kernels::add(v[n.a], v[n.b]);
    case Op::Sub: return kernels::sub(v[n.a], v[n.b]);
    case Op::Mul: return kernels::mul(v[n.a], v[n.b]);
    case Op::Div: return kernels::div(v[n.a], v[n.b]);
    case Op::Scale: return kernels::scale(v[n.a], n.c);
    case Op::Shift: return kernels::shift(v[n.a], n.c);
    case Op::Pow: return kernels::pow(v[n.a], n.c);
    case Op::Exp: return kernels::exp(v[n.a]);
    case Op::Tanh: return kernels::tanh(v[n.a]);
    case Op::Affine: return kernels::affine(v[n.a], n.block, v[n.b]);
    case Op::Component: return kernels::component(v[n.a], n.b);
    case Op::Concat: {
      std::vector<const Matrix*> ptrs;
      for (Index p : n.parts) ptrs.push_back(&v[p]);
      return kernels::concat(ptrs);
    }
    case Op::Sum: return kernels::sum(v[n.a]);
  }
  throw std::logic_error("Tape: unknown op");
}

Matrix Tape::replay(Var out) const {
  check(out);
  std::vector<Matrix> values(nodes_.size());
  for (Index i = 0; i <= out.id; ++i) values[i] = evaluate(nodes_[i], values);
  return values[out.id];
}

Adjoints Tape::backward(std::span<const Seed> seeds, bool per_column_params) const {
  Adjoints out;
  out.tape_ = this;
  std::vector<Matrix>& adj = out.adj_;
  adj.resize(nodes_.size());

  auto accumulate = [&](Index id, const auto& g) {
    if (!nodes_[id].active) return;
    Matrix& a = adj[id];
    if (a.size() == 0) {
      a = g;
    } else {
      if (a.rows() != g.rows() || a.cols() != g.cols()) {
        throw DimensionError("Tape::backward: adjoint shape mismatch (per-column parameters "
                             "used outside affine?)");
      }
      a += g;
    }
  };
  auto ensure = [&](Index id, Index cols) -> Matrix& {
    if (adj[id].size() == 0) adj[id] = Matrix::Zero(nodes_[id].value.rows(), cols);
    return adj[id];
  };

  // Per-column parameter adjoints are summed over many uses of the same
  // block; gathering the uses first turns B rank-1 updates per use into one
  // matrix product per column.
  std::map<std::pair<Index, Index>, std::vector<Index>> deferred;

  Index last = -1;
  for (const Seed& seed : seeds) {
    check(seed.var);
    kernels::check_same(seed.cotangent, nodes_[seed.var.id].value, "Tape::backward seed");
    accumulate(seed.var.id, seed.cotangent);
    last = std::max(last, seed.var.id);
  }

  for (Index id = last; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (adj[id].size() == 0 || !n.active) continue;
    const Matrix& g = adj[id];
    switch (n.op) {
      case Op::Input:
      case Op::Constant: break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::Mul:
        accumulate(n.a, g.cwiseProduct(nodes_[n.b].value));
        accumulate(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::Div: {
        const Matrix& den = nodes_[n.b].value;
        accumulate(n.a, g.cwiseQuotient(den));
        accumulate(n.b, -(g.cwiseProduct(n.value)).cwiseQuotient(den));
        break;
      }
      case Op::Scale: accumulate(n.a, n.c * g); break;
      case Op::Shift: accumulate(n.a, g); break;
      case Op::Pow: {
        const Matrix& base = nodes_[n.a].value;
        Matrix d = n.c * base.array().pow(n.c - 1.0);
        accumulate(n.a, g.cwiseProduct(d));
        break;
      }
      case Op::Exp: accumulate(n.a, g.cwiseProduct(n.value)); break;
      case Op::Tanh:
        accumulate(n.a, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Affine: {
        const Node& p = nodes_[n.a];
        const Node& x = nodes_[n.b];
        const AffineBlock& b = n.block;
        if (x.active) {
          Matrix& ax = ensure(n.b, x.value.cols());
          ax.noalias() += kernels::weight(p.value.data(), b).transpose() * g;
        }
        if (p.active) {
          const Index batch = x.value.cols();
          if (per_column_params) {
            Matrix& ap = ensure(n.a, batch);
            if (ap.cols() != batch) throw DimensionError("Tape::backward: batch width changed");
            deferred[{n.a, b.weight_offset}].push_back(id);
          } else {
            Matrix& ap = ensure(n.a, 1);
            Eigen::Map<RowMatrix> aw(ap.data() + b.weight_offset, b.rows, b.cols);
            aw.noalias() += g * x.value.transpose();
            ap.col(0).segment(b.bias_offset, b.rows) += g.rowwise().sum();
          }
        }
        break;
      }
      case Op::Component:
        if (nodes_[n.a].active) ensure(n.a, g.cols()).row(n.b) += g;
        break;
      case Op::Concat: {
        Index at = 0;
        for (Index p : n.parts) {
          const Index len = nodes_[p].value.rows();
          accumulate(p, g.middleRows(at, len));
          at += len;
        }
        break;
      }
      case Op::Sum: {
        const Matrix& a = nodes_[n.a].value;
        accumulate(n.a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      }
    }
  }

  for (const auto& [key, uses] : deferred) {
    const AffineBlock& b = nodes_[uses.front()].block;
    Matrix& ap = adj[key.first];
    const auto k = static_cast<Index>(uses.size());
    Matrix gc(b.rows, k);
    Matrix xc(b.cols, k);
    for (Index c = 0; c < ap.cols(); ++c) {
      for (Index u = 0; u < k; ++u) {
        const Index id = uses[static_cast<std::size_t>(u)];
        gc.col(u) = adj[id].col(c);
        xc.col(u) = nodes_[nodes_[id].b].value.col(c);
      }
      Eigen::Map<RowMatrix> aw(ap.col(c).data() + b.weight_offset, b.rows, b.cols);
      aw.noalias() += gc * xc.transpose();
      ap.col(c).segment(b.bias_offset, b.rows) += gc.rowwise().sum();
    }
  }
  return out;
}

}  // namespace msnode::ad
