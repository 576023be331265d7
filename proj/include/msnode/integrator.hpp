#pragma once

#include <optional>
#include <vector>

#include "msnode/dynamics.hpp"

namespace msnode {

// One shooting interval [t_start, t_end] split into `substeps` equal RK4
// steps. States are recorded at `save_times`, each of which must land on a
// substep boundary.
class IntervalPlan {
 public:
  IntervalPlan() = default;
  IntervalPlan(double t_start, double t_end, Index substeps, std::vector<double> save_times = {});

  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  Index substeps() const { return substeps_; }
  double step() const { return (t_end_ - t_start_) / static_cast<double>(substeps_); }
  double time_at(Index s) const {
    return s == substeps_ ? t_end_ : t_start_ + static_cast<double>(s) * step();
  }
  const std::vector<double>& save_times() const { return save_times_; }
  // Substep index (0..substeps) of each save time.
  const std::vector<Index>& save_steps() const { return save_steps_; }

 private:
  double t_start_ = 0.0;
  double t_end_ = 1.0;
  Index substeps_ = 1;
  std::vector<double> save_times_;
  std::vector<Index> save_steps_;
};

// Several intervals integrated side by side, one per column. They share the
// step size, the substep count and the substep indices at which states are
// saved; only their start times differ.
struct BatchPlan {
  TimeRow t_start;
  double step = 1.0;
  Index substeps = 1;
  std::vector<Index> save_steps;

  static BatchPlan single(const IntervalPlan& plan);
  Index width() const { return t_start.size(); }
  TimeRow time_at(Index s) const {
    return (t_start.array() + static_cast<double>(s) * step).matrix();
  }
};

struct IntervalSolution {
  Vec end_state;
  RowMatrix saved_states;  // one row per save time
  std::optional<Index> nonfinite_substep;

  bool ok() const { return !nonfinite_substep.has_value(); }
};

namespace detail {

template <class Ctx>
typename Ctx::Value rk4_step(Ctx& ctx, const Dynamics& f, const typename Ctx::Value& x,
                             const typename Ctx::Value& p, const TimeRow& t, double h) {
  const double half = 0.5 * h;
  const TimeRow t_half = (t.array() + half).matrix();
  const TimeRow t_full = (t.array() + h).matrix();
  auto k1 = f.eval(ctx, x, p, t);
  auto k2 = f.eval(ctx, ctx.add(x, ctx.scale(k1, half)), p, t_half);
  auto k3 = f.eval(ctx, ctx.add(x, ctx.scale(k2, half)), p, t_half);
  auto k4 = f.eval(ctx, ctx.add(x, ctx.scale(k3, h)), p, t_full);
  auto incr = ctx.add(ctx.add(k1, ctx.scale(k2, 2.0)), ctx.add(ctx.scale(k3, 2.0), k4));
  return ctx.add(x, ctx.scale(incr, h / 6.0));
}

template <class Ctx>
struct Trace {
  typename Ctx::Value end;
  std::vector<typename Ctx::Value> saved;
  std::optional<Index> nonfinite_substep;
};

// Runs a batch under any AD context. Stops at the first substep whose state
// is not finite.
template <class Ctx>
Trace<Ctx> run_batch(Ctx& ctx, const Dynamics& f, const typename Ctx::Value& x0,
                     const typename Ctx::Value& p, const BatchPlan& plan) {
  if (ctx.primal(x0).cols() != plan.width()) {
    throw DimensionError("run_batch: state columns do not match the batch width");
  }
  Trace<Ctx> tr;
  const auto& saves = plan.save_steps;
  std::size_t next_save = 0;
  tr.saved.reserve(saves.size());
  typename Ctx::Value x = x0;
  while (next_save < saves.size() && saves[next_save] == 0) {
    tr.saved.push_back(x);
    ++next_save;
  }
  for (Index s = 0; s < plan.substeps; ++s) {
    x = rk4_step(ctx, f, x, p, plan.time_at(s), plan.step);
    if (!ctx.primal(x).allFinite()) {
      tr.nonfinite_substep = s;
      break;
    }
    while (next_save < saves.size() && saves[next_save] == s + 1) {
      tr.saved.push_back(x);
      ++next_save;
    }
  }
  tr.end = x;
  return tr;
}

}  // namespace detail

// Classical fourth-order Runge-Kutta step.
Vec rk4_step(const Dynamics& f, const Vec& x, const Vec& p, double t, double h);

IntervalSolution integrate_interval(const Dynamics& f, const Vec& x0, const Vec& p,
                                    const IntervalPlan& plan);

// Sensitivities of the interval map F(x0, p) = end state, differentiated
// through the discrete RK4 recursion. All throw NonFiniteError (carrying the
// substep index) if the integration leaves the finite range.
Vec interval_jvp_x(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& v);
Vec interval_vjp_x(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& w);
Vec interval_jvp_p(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& v);
Vec interval_vjp_p(const Dynamics& f, const Vec& x0, const IntervalPlan& plan, const Vec& p,
                   const Vec& w);

// Forward-mode pass over a batch with tangents on the start states and/or
// the parameters (null means zero). Returns end states and their tangents.
struct BatchJvp {
  Matrix end;
  Matrix tangent;
};
BatchJvp batch_jvp(const Dynamics& f, const Matrix& x0, const Vec& p, const BatchPlan& plan,
                   const Matrix* dx0, const Vec* dp);

// A recorded batch integration, reusable for several reverse sweeps.
class IntervalTape {
 public:
  IntervalTape(const Dynamics& f, const Matrix& x0, const Vec& p, const BatchPlan& plan);
  IntervalTape(const Dynamics& f, const Vec& x0, const Vec& p, const IntervalPlan& plan)
      : IntervalTape(f, Matrix(x0), p, BatchPlan::single(plan)) {}

  ad::Tape& tape() { return tape_; }
  const ad::Tape& tape() const { return tape_; }
  ad::Var x0() const { return x0_; }
  ad::Var params() const { return p_; }
  ad::Var end() const { return trace_.end; }
  const std::vector<ad::Var>& saved() const { return trace_.saved; }
  const Matrix& end_state() const { return tape_.primal(trace_.end); }

  struct Cotangents {
    Matrix x0;      // n x B
    Matrix params;  // P x 1, or P x B with per-column parameters
  };
  // Columnwise wᵀ ∂F/∂(x0, p) for a cotangent W on the end states.
  Cotangents vjp_end(const Matrix& w, bool per_column_params = false) const;

 private:
  ad::Tape tape_;
  ad::Var x0_;
  ad::Var p_;
  detail::Trace<ad::Tape> trace_;
};

}  // namespace msnode
