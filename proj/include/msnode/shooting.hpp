#pragma once

// Multiple-shooting constraints and the condensed first-order KKT step.
//
// With interval start states x_1..x_m (rows of X), parameters p and the
// interval maps F_k, the constraint vector is
//   G = [x_1 - x̂_1; x_2 - F_1(x_1, p); ...; x_m - F_{m-1}(x_{m-1}, p)]
// so G_x is unit lower block-bidiagonal with -∂F_k/∂x_k below the diagonal
// and G_p has a zero first block followed by -∂F_k/∂p. All (m·n)-vectors are
// laid out block by block, block k holding the n entries of interval k.
//
// Intervals are 0-based in code: interval k covers samples
// [boundaries[k], boundaries[k+1]].

#include <functional>
#include <memory>
#include <vector>

#include "msnode/integrator.hpp"

namespace msnode {

class ShootingGrid {
 public:
  // A group of intervals with identical length, integrated side by side.
  // Saves fall on every sample of the interval (gaps + 1 of them).
  struct Batch {
    std::vector<Index> intervals;
    Index gaps = 0;
    BatchPlan plan;
  };

  // Split `times` (uniform, strictly increasing) into m contiguous intervals
  // of near-equal sample count, the remainder going to the leading ones.
  static ShootingGrid uniform(const Vec& times, Index m, Index substeps_per_sample);

  Index intervals() const { return static_cast<Index>(plans_.size()); }
  const Vec& times() const { return times_; }
  Index substeps_per_sample() const { return substeps_per_sample_; }
  const std::vector<Index>& boundaries() const { return boundaries_; }
  const IntervalPlan& plan(Index k) const { return plans_.at(static_cast<std::size_t>(k)); }
  const std::vector<Batch>& batches() const { return batches_; }

  // Sample rows whose measurements belong to interval k's loss: [first, last).
  // Interval k owns [t_k, t_{k+1}); the last interval also owns the final time.
  std::pair<Index, Index> owned_rows(Index k) const;

 private:
  Vec times_;
  Index substeps_per_sample_ = 1;
  std::vector<Index> boundaries_;
  std::vector<IntervalPlan> plans_;
  std::vector<Batch> batches_;
};

struct ShootingVariables {
  RowMatrix X;  // m x n, row k is the start state of interval k
  Vec lambda;   // m·n multipliers, one block per constraint block
  Vec params;   // flat network parameters

  Index intervals() const { return X.rows(); }
  Index state_dim() const { return X.cols(); }
};

struct ConstraintResidual {
  Vec g;               // m·n
  Matrix end_states;   // n x (m-1), column k = F_k(x_k, p)

  double inf_norm() const { return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff(); }
};

struct CondensedStep {
  RowMatrix dx;
  Vec dp;
  Vec dlambda;
  Index cg_iterations = 0;
  double cg_residual = 0.0;  // final ‖S Δλ - rhs‖₂
  bool cg_converged = true;
};

struct CgResult {
  Vec solution;
  Index iterations = 0;
  double residual = 0.0;  // recursively updated ‖rhs - apply(x)‖₂
  bool converged = false;
};

// Conjugate gradients for a symmetric positive definite operator, from a zero
// initial guess. Stops once ‖r‖₂ ≤ tol·‖rhs‖₂ or after max_iter iterations
// (reported through `converged`, not thrown). Throws NonFiniteError if an
// iterate stops being finite.
CgResult cg_solve(const std::function<Vec(const Vec&)>& apply, const Vec& rhs, double tol,
                  Index max_iter);

// Same, with an absolute target ‖r‖₂ ≤ abs_tol.
CgResult cg_solve_absolute(const std::function<Vec(const Vec&)>& apply, const Vec& rhs,
                           double abs_tol, Index max_iter);

struct OperatorStats {
  Index stacked_jvp_x = 0;  // forward passes with state tangents on every interval
  Index stacked_jvp_p = 0;  // forward passes with a parameter tangent
  Index reverse_sweeps = 0;
  Index vjp_rows = 0;       // interval-level cotangent rows processed
  Index tape_recordings = 0;

  void reset() { *this = OperatorStats{}; }
};

// Deliberate defects for exercising the self-test harness.
enum class Mutation { None, FlipGpVSign, FlipVtGpSign, DropGxIdentity };

struct CgOptions {
  double tol = 1e-8;
  Index max_iter = 0;  // 0 means 5·m·n
};

class MultipleShooting;

// The interval maps recorded at one point (X, p): one tape per batch, reused
// by every operator product at that point.
class Linearization {
 public:
  Linearization(const MultipleShooting& owner, const ShootingVariables& vars);

  const ShootingVariables& vars() const { return vars_; }

  // End states F_k for all m intervals, n x m.
  const Matrix& end_states() const { return end_states_; }

  // Blockwise products with the interval Jacobians, n x m in and out
  // (column k belongs to interval k).
  Matrix stacked_jvp_x(const Matrix& v) const;             // J_k v_k
  Matrix stacked_vjp_x(const Matrix& w) const;             // w_kᵀ J_k
  Matrix stacked_jvp_p(const Vec& v) const;                // ∂F_k/∂p v
  Vec summed_vjp_p(const Matrix& w) const;                 // Σ_k w_kᵀ ∂F_k/∂p
  Matrix per_interval_vjp_p(const Matrix& w) const;        // column k: w_kᵀ ∂F_k/∂p

  Vec gx_v(const Vec& v) const;
  Vec vt_gx(const Vec& v) const;
  Vec gp_v(const Vec& v) const;
  Vec vt_gp(const Vec& v) const;
  Vec schur_hvp(const Vec& v) const;

  // Direct access for losses recorded on the same tapes.
  std::vector<IntervalTape>& tapes() { return tapes_; }
  const std::vector<IntervalTape>& tapes() const { return tapes_; }
  const MultipleShooting& owner() const { return *owner_; }

 private:
  const MultipleShooting* owner_;
  ShootingVariables vars_;
  std::vector<IntervalTape> tapes_;
  Matrix end_states_;
};

class MultipleShooting {
 public:
  MultipleShooting(std::shared_ptr<const Dynamics> f, ShootingGrid grid, Vec x_hat_1);

  const Dynamics& dynamics() const { return *f_; }
  std::shared_ptr<const Dynamics> dynamics_ptr() const { return f_; }
  const ShootingGrid& grid() const { return grid_; }
  const Vec& x_hat_1() const { return x_hat_1_; }
  Index intervals() const { return grid_.intervals(); }
  Index state_dim() const { return f_->state_dim(); }
  Index constraint_dim() const { return intervals() * state_dim(); }
  Index param_dim() const { return f_->param_dim(); }

  void check(const ShootingVariables& vars) const;

  Linearization linearize(const ShootingVariables& vars) const { return {*this, vars}; }

  ConstraintResidual residual(const ShootingVariables& vars) const;
  ConstraintResidual residual(const Linearization& lin) const;

  // Matrix-free products (each records its own linearization).
  Vec gp_v(const ShootingVariables& vars, const Vec& v) const { return linearize(vars).gp_v(v); }
  Vec vt_gp(const ShootingVariables& vars, const Vec& v) const { return linearize(vars).vt_gp(v); }
  Vec gx_v(const ShootingVariables& vars, const Vec& v) const { return linearize(vars).gx_v(v); }
  Vec vt_gx(const ShootingVariables& vars, const Vec& v) const { return linearize(vars).vt_gx(v); }
  Vec schur_hvp(const ShootingVariables& vars, const Vec& v) const {
    return linearize(vars).schur_hvp(v);
  }

  // Dense Jacobians for small problems. G_x takes n stacked JVPs (one unit
  // tangent per state coordinate, seeded on every interval at once); G_p
  // takes one VJP per nonzero constraint row, (m-1)·n in all.
  Matrix assemble_gx_dense(const ShootingVariables& vars) const;
  Matrix assemble_gx_dense(const Linearization& lin) const;
  Matrix assemble_gp_dense(const ShootingVariables& vars) const;
  Matrix assemble_gp_dense(const Linearization& lin) const;
  // Column-by-column reference assembly (m·n stacked JVPs).
  Matrix assemble_gx_naive(const Linearization& lin) const;

  // Δλ = (G_x G_xᵀ + G_p G_pᵀ)⁻¹ (G - G_x L_x - G_p L_p),
  // Δx = -(G_xᵀ Δλ + L_x), Δp = -(G_pᵀ Δλ + L_p).
  CondensedStep condensed_step(const Linearization& lin, const ConstraintResidual& res,
                               const Vec& lx, const Vec& lp, const CgOptions& cg = {}) const;
  // The same step from dense Jacobians: Cholesky on the assembled Schur
  // complement.
  CondensedStep dense_step(const Matrix& gx, const Matrix& gp, const ConstraintResidual& res,
                           const Vec& lx, const Vec& lp) const;
  // Reference solution of the uncondensed saddle-point system
  //   [I  Jᵀ; J  0] [Δz; Δλ] = [-L_z; -G],  J = [G_x  G_p],
  // by dense LU.
  CondensedStep direct_step(const Matrix& gx, const Matrix& gp, const ConstraintResidual& res,
                            const Vec& lx, const Vec& lp) const;

  // ‖G_x Δx + G_p Δp + G‖∞ evaluated with the matrix-free operators.
  double linearized_feasibility(const Linearization& lin, const ConstraintResidual& res,
                                const CondensedStep& step) const;

  Index dense_cap() const { return dense_cap_; }
  void set_dense_cap(Index cap) { dense_cap_ = cap; }

  OperatorStats& stats() const { return stats_; }
  Mutation mutation() const { return mutation_; }
  void set_mutation(Mutation m) { mutation_ = m; }

 private:
  friend class Linearization;
  void require_dense(const char* what) const;

  std::shared_ptr<const Dynamics> f_;
  ShootingGrid grid_;
  Vec x_hat_1_;
  Index dense_cap_ = 512;
  Mutation mutation_ = Mutation::None;
  mutable OperatorStats stats_;
};

// Views of an (m·n) block vector as an n x m matrix, column k = block k.
inline Eigen::Map<const Matrix> as_blocks(const Vec& v, Index n) {
  return {v.data(), n, v.size() / n};
}
inline Eigen::Map<const Matrix> as_blocks(const RowMatrix& x) {
  return {x.data(), x.cols(), x.rows()};
}
inline Vec from_blocks(const Matrix& blocks) {
  return Eigen::Map<const Vec>(blocks.data(), blocks.size());
}

}  // namespace msnode
