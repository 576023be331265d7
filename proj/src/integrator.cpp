#include "msnode/integrator.hpp"

#include <cmath>
#include <string>

namespace msnode {

IntervalPlan::IntervalPlan(double t_start, double t_end, Index substeps,
                           std::vector<double> save_times)
    : t_start_(t_start), t_end_(t_end), substeps_(substeps), save_times_(std::move(save_times)) {
  if (!(t_start_ < t_end_)) throw std::invalid_argument("IntervalPlan: need t_start < t_end");
  if (substeps_ < 1) throw std::invalid_argument("IntervalPlan: substeps must be positive");
  const double h = step();
  Index previous = -1;
  save_steps_.reserve(save_times_.size());
  for (double ts : save_times_) {
    const double pos = (ts - t_start_) / h;
    const auto idx = static_cast<Index>(std::llround(pos));
    if (idx < 0 || idx > substeps_ || std::abs(pos - static_cast<double>(idx)) > 1e-6) {
      throw std::invalid_argument("IntervalPlan: save time " + std::to_string(ts) +
                                  " is not on a substep boundary of [" + std::to_string(t_start_) +
                                  ", " + std::to_string(t_end_) + "]");
    }
    if (idx < previous) throw std::invalid_argument("IntervalPlan: save times must be ordered");
    previous = idx;
    save_steps_.push_back(idx);
  }
}

BatchPlan BatchPlan::single(const IntervalPlan& plan) {
  BatchPlan b;
  b.t_start = TimeRow::Constant(1, plan.t_start());
  b.step = plan.step();
  b.substeps = plan.substeps();
  b.save_steps = plan.save_steps();
  return b;
}

Vec rk4_step(const Dynamics& f, const Vec& x, const Vec& p, double t, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("rk4_step: step must be positive");
  ad::PrimalContext ctx;
  Vec out = detail::rk4_step(ctx, f, Matrix(x), Matrix(p), TimeRow::Constant(1, t), h).col(0);
  if (!out.allFinite()) throw NonFiniteError("rk4_step: non-finite state", 0);
  return out;
}

IntervalSolution integrate_interval(const Dynamics& f, const Vec& x0, const Vec& p,
                                    const IntervalPlan& plan) {
  require_length(x0.size(), f.state_dim(), "integrate_interval x0");
  require_length(p.size(), f.param_dim(), "integrate_interval params");
  ad::PrimalContext ctx;
  auto tr = detail::run_batch(ctx, f, Matrix(x0), Matrix(p), BatchPlan::single(plan));
  IntervalSolution sol;
  sol.nonfinite_substep = tr.nonfinite_substep;
  sol.end_state = tr.end.col(0);
  sol.saved_states.resize(static_cast<Index>(tr.saved.size()), x0.size());
  for (std::size_t i = 0; i < tr.saved.size(); ++i) {
    sol.saved_states.row(static_cast<Index>(i)) = tr.saved[i].col(0).transpose();
  }
  return sol;
}

namespace {

[[noreturn]] void fail_nonfinite(const char* where, Index substep) {
  throw NonFiniteError(std::string(where) + ": non-finite state at substep " +
                           std::to_string(substep),
                       substep);
}

}  // namespace

BatchJvp batch_jvp(const Dynamics& f, const Matrix& x0, const Vec& p, const BatchPlan& plan,
                   const Matrix* dx0, const Vec* dp) {
  require_length(x0.rows(), f.state_dim(), "batch_jvp x0");
  require_length(p.size(), f.param_dim(), "batch_jvp params");
  ad::DualContext ctx;
  ad::DualVector x = dx0 ? ad::DualVector(x0, *dx0) : ad::DualVector::constant(x0);
  ad::DualVector pd = dp ? ad::DualVector(Matrix(p), Matrix(*dp)) : ad::DualVector::constant(p);
  auto tr = detail::run_batch(ctx, f, x, pd, plan);
  if (tr.nonfinite_substep) fail_nonfinite("batch_jvp", *tr.nonfinite_substep);
  if (!tr.end.tangent.allFinite()) fail_nonfinite("batch_jvp tangent", plan.substeps - 1);
  return {std::move(tr.end.primal), std::move(tr.end.tangent)};
}

Vec interval_jvp_x(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& v) {
  require_length(v.size(), x0.size(), "interval_jvp_x tangent");
  const Matrix dx(v);
  return batch_jvp(f, Matrix(x0), p, BatchPlan::single(plan), &dx, nullptr).tangent.col(0);
}

Vec interval_jvp_p(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& v) {
  require_length(v.size(), p.size(), "interval_jvp_p tangent");
  return batch_jvp(f, Matrix(x0), p, BatchPlan::single(plan), nullptr, &v).tangent.col(0);
}

Vec interval_vjp_x(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& w) {
  return IntervalTape(f, x0, p, plan).vjp_end(Matrix(w)).x0.col(0);
}

Vec interval_vjp_p(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& w) {
  return IntervalTape(f, x0, p, plan).vjp_end(Matrix(w)).params.col(0);
}

IntervalTape::IntervalTape(const Dynamics& f, const Matrix& x0, const Vec& p,
                           const BatchPlan& plan) {
  require_length(x0.rows(), f.state_dim(), "IntervalTape x0");
  require_length(p.size(), f.param_dim(), "IntervalTape params");
  x0_ = tape_.input(x0);
  p_ = tape_.input(Matrix(p));
  trace_ = detail::run_batch(tape_, f, x0_, p_, plan);
  if (trace_.nonfinite_substep) fail_nonfinite("IntervalTape", *trace_.nonfinite_substep);
}

IntervalTape::Cotangents IntervalTape::vjp_end(const Matrix& w, bool per_column_params) const {
  ad::Adjoints adj = tape_.backward(trace_.end, w, per_column_params);
  Cotangents c{adj[x0_], adj[p_]};
  if (per_column_params && c.params.cols() != w.cols()) {
    // Nothing reached the parameters; widen the zero block to one column per interval.
    c.params = Matrix::Zero(c.params.rows(), w.cols());
  }
  if (!c.x0.allFinite() || !c.params.allFinite()) {
    throw NonFiniteError("IntervalTape: non-finite cotangent");
  }
  return c;
}

}  // namespace msnode
