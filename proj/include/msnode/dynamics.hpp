#pragma once

#include <memory>
#include <utility>

#include "msnode/ad.hpp"

namespace msnode {

// Times of a batch of states, one entry per column.
using TimeRow = Eigen::RowVectorXd;

// Right-hand side f(x, p, t) of an ODE, evaluable under every AD context.
// `x` holds one state per column, `t` the matching times, and `p` is a flat
// parameter column (possibly empty for fixed dynamics).
class Dynamics {
 public:
  virtual ~Dynamics() = default;

  virtual Index state_dim() const = 0;
  virtual Index param_dim() const = 0;

  virtual Matrix eval(ad::PrimalContext& ctx, const Matrix& x, const Matrix& p,
                      const TimeRow& t) const = 0;
  virtual ad::DualVector eval(ad::DualContext& ctx, const ad::DualVector& x,
                              const ad::DualVector& p, const TimeRow& t) const = 0;
  virtual ad::Var eval(ad::Tape& ctx, ad::Var x, ad::Var p, const TimeRow& t) const = 0;

  // Single-state convenience evaluation.
  Vec operator()(const Vec& x, const Vec& p, double t) const {
    ad::PrimalContext ctx;
    return eval(ctx, Matrix(x), Matrix(p), TimeRow::Constant(1, t)).col(0);
  }
};

// Wraps a generic callable `rhs(ctx, x, p, t)` as a Dynamics.
template <class Rhs>
class DynamicsFromCallable final : public Dynamics {
 public:
  DynamicsFromCallable(Index n, Index num_params, Rhs rhs)
      : n_(n), num_params_(num_params), rhs_(std::move(rhs)) {}

  Index state_dim() const override { return n_; }
  Index param_dim() const override { return num_params_; }

  Matrix eval(ad::PrimalContext& ctx, const Matrix& x, const Matrix& p,
              const TimeRow& t) const override {
    return rhs_(ctx, x, p, t);
  }
  ad::DualVector eval(ad::DualContext& ctx, const ad::DualVector& x, const ad::DualVector& p,
                      const TimeRow& t) const override {
    return rhs_(ctx, x, p, t);
  }
  ad::Var eval(ad::Tape& ctx, ad::Var x, ad::Var p, const TimeRow& t) const override {
    return rhs_(ctx, x, p, t);
  }

 private:
  Index n_;
  Index num_params_;
  Rhs rhs_;
};

template <class Rhs>
std::shared_ptr<const Dynamics> make_dynamics(Index n, Index num_params, Rhs rhs) {
  return std::make_shared<DynamicsFromCallable<Rhs>>(n, num_params, std::move(rhs));
}

// f ≡ 0 on R^n.
std::shared_ptr<const Dynamics> zero_dynamics(Index n, Index num_params = 0);

}  // namespace msnode
