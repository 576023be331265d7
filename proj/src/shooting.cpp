#include "msnode/shooting.hpp"

#include <cmath>
#include <map>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace msnode {

ShootingGrid ShootingGrid::uniform(const Vec& times, Index m, Index substeps_per_sample) {
  const Index gaps = times.size() - 1;
  if (m < 1) throw std::invalid_argument("ShootingGrid: need at least one interval");
  if (substeps_per_sample < 1) throw std::invalid_argument("ShootingGrid: substeps must be positive");
  if (gaps < m) {
    throw std::invalid_argument("ShootingGrid: " + std::to_string(times.size()) +
                                " samples cannot be split into " + std::to_string(m) +
                                " intervals");
  }
  for (Index i = 0; i < gaps; ++i) {
    if (!(times[i] < times[i + 1])) {
      throw std::invalid_argument("ShootingGrid: times must be strictly increasing");
    }
  }

  ShootingGrid g;
  g.times_ = times;
  g.substeps_per_sample_ = substeps_per_sample;
  const Index base = gaps / m;
  const Index extra = gaps % m;
  g.boundaries_.push_back(0);
  for (Index k = 0; k < m; ++k) {
    g.boundaries_.push_back(g.boundaries_.back() + base + (k < extra ? 1 : 0));
  }

  std::map<Index, std::size_t> by_gaps;
  for (Index k = 0; k < m; ++k) {
    const Index b0 = g.boundaries_[static_cast<std::size_t>(k)];
    const Index b1 = g.boundaries_[static_cast<std::size_t>(k + 1)];
    const Index last = (k == m - 1) ? b1 + 1 : b1;
    std::vector<double> owned(times.data() + b0, times.data() + last);
    g.plans_.emplace_back(times[b0], times[b1], (b1 - b0) * substeps_per_sample, std::move(owned));

    auto [it, fresh] = by_gaps.try_emplace(b1 - b0, g.batches_.size());
    if (fresh) {
      Batch b;
      b.gaps = b1 - b0;
      b.plan.step = g.plans_.back().step();
      b.plan.substeps = g.plans_.back().substeps();
      for (Index j = 0; j <= b.gaps; ++j) b.plan.save_steps.push_back(j * substeps_per_sample);
      g.batches_.push_back(std::move(b));
    }
    Batch& b = g.batches_[it->second];
    if (std::abs(g.plans_.back().step() - b.plan.step) > 1e-9 * b.plan.step) {
      throw std::invalid_argument("ShootingGrid: sample times must be uniformly spaced");
    }
    b.intervals.push_back(k);
  }
  for (Batch& b : g.batches_) {
    b.plan.t_start.resize(static_cast<Index>(b.intervals.size()));
    for (std::size_t c = 0; c < b.intervals.size(); ++c) {
      b.plan.t_start[static_cast<Index>(c)] = g.plans_[static_cast<std::size_t>(b.intervals[c])].t_start();
    }
  }
  return g;
}

std::pair<Index, Index> ShootingGrid::owned_rows(Index k) const {
  if (k < 0 || k >= intervals()) throw std::out_of_range("ShootingGrid: interval out of range");
  const auto uk = static_cast<std::size_t>(k);
  const Index last = boundaries_[uk + 1] + (k == intervals() - 1 ? 1 : 0);
  return {boundaries_[uk], last};
}

// ---------------------------------------------------------------------------

namespace {

Matrix gather(const Matrix& blocks, const std::vector<Index>& cols) {
  Matrix out(blocks.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = blocks.col(cols[c]);
  return out;
}

void scatter(Matrix& blocks, const std::vector<Index>& cols, const Matrix& part) {
  for (std::size_t c = 0; c < cols.size(); ++c) blocks.col(cols[c]) = part.col(static_cast<Index>(c));
}

// Shift left by one block: column k of the result is column k+1 of w, the
// last column is zero. Maps constraint blocks 1..m-1 onto the intervals
// 0..m-2 whose end states they involve.
Matrix shift_left(const Matrix& w) {
  Matrix out = Matrix::Zero(w.rows(), w.cols());
  if (w.cols() > 1) out.leftCols(w.cols() - 1) = w.rightCols(w.cols() - 1);
  return out;
}

}  // namespace

Linearization::Linearization(const MultipleShooting& owner, const ShootingVariables& vars)
    : owner_(&owner), vars_(vars) {
  owner.check(vars);
  const Dynamics& f = owner.dynamics();
  const Index n = owner.state_dim();
  const Matrix x = as_blocks(vars.X);
  end_states_.resize(n, owner.intervals());
  tapes_.reserve(owner.grid().batches().size());
  for (const auto& b : owner.grid().batches()) {
    try {
      tapes_.emplace_back(f, gather(x, b.intervals), vars.params, b.plan);
    } catch (const NonFiniteError&) {
      // Locate the offending interval with single-interval runs.
      for (Index k : b.intervals) {
        const auto sol = integrate_interval(f, x.col(k), vars.params, owner.grid().plan(k));
        if (!sol.ok()) {
          throw NonFiniteError("integration of interval " + std::to_string(k) +
                                   " produced a non-finite state at substep " +
                                   std::to_string(*sol.nonfinite_substep),
                               k);
        }
      }
      throw;
    }
    scatter(end_states_, b.intervals, tapes_.back().end_state());
  }
  ++owner.stats_.tape_recordings;
}

Matrix Linearization::stacked_jvp_x(const Matrix& v) const {
  const auto& grid = owner_->grid();
  require_length(v.rows(), owner_->state_dim(), "stacked_jvp_x rows");
  require_length(v.cols(), owner_->intervals(), "stacked_jvp_x columns");
  const Matrix x = as_blocks(vars_.X);
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (const auto& b : grid.batches()) {
    const Matrix dv = gather(v, b.intervals);
    if (dv.isZero(0.0)) continue;
    const auto r = batch_jvp(owner_->dynamics(), gather(x, b.intervals), vars_.params, b.plan, &dv,
                             nullptr);
    scatter(out, b.intervals, r.tangent);
  }
  ++owner_->stats_.stacked_jvp_x;
  return out;
}

Matrix Linearization::stacked_vjp_x(const Matrix& w) const {
  require_length(w.rows(), owner_->state_dim(), "stacked_vjp_x rows");
  require_length(w.cols(), owner_->intervals(), "stacked_vjp_x columns");
  Matrix out = Matrix::Zero(w.rows(), w.cols());
  const auto& batches = owner_->grid().batches();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Matrix wb = gather(w, batches[i].intervals);
    if (wb.isZero(0.0)) continue;
    scatter(out, batches[i].intervals, tapes_[i].vjp_end(wb).x0);
    ++owner_->stats_.reverse_sweeps;
  }
  return out;
}

Matrix Linearization::stacked_jvp_p(const Vec& v) const {
  require_length(v.size(), owner_->param_dim(), "stacked_jvp_p tangent");
  const Matrix x = as_blocks(vars_.X);
  Matrix out = Matrix::Zero(owner_->state_dim(), owner_->intervals());
  for (const auto& b : owner_->grid().batches()) {
    const auto r = batch_jvp(owner_->dynamics(), gather(x, b.intervals), vars_.params, b.plan,
                             nullptr, &v);
    scatter(out, b.intervals, r.tangent);
  }
  ++owner_->stats_.stacked_jvp_p;
  return out;
}

Vec Linearization::summed_vjp_p(const Matrix& w) const {
  require_length(w.rows(), owner_->state_dim(), "summed_vjp_p rows");
  require_length(w.cols(), owner_->intervals(), "summed_vjp_p columns");
  Vec out = Vec::Zero(owner_->param_dim());
  const auto& batches = owner_->grid().batches();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Matrix wb = gather(w, batches[i].intervals);
    if (wb.isZero(0.0)) continue;
    out += tapes_[i].vjp_end(wb).params.col(0);
    ++owner_->stats_.reverse_sweeps;
  }
  return out;
}

Matrix Linearization::per_interval_vjp_p(const Matrix& w) const {
  require_length(w.rows(), owner_->state_dim(), "per_interval_vjp_p rows");
  require_length(w.cols(), owner_->intervals(), "per_interval_vjp_p columns");
  Matrix out = Matrix::Zero(owner_->param_dim(), owner_->intervals());
  const auto& batches = owner_->grid().batches();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& cols = batches[i].intervals;
    const Matrix wb = gather(w, cols);
    for (Index c = 0; c < wb.cols(); ++c) {
      if (!wb.col(c).isZero(0.0)) ++owner_->stats_.vjp_rows;
    }
    if (wb.isZero(0.0)) continue;
    scatter(out, cols, tapes_[i].vjp_end(wb, true).params);
    ++owner_->stats_.reverse_sweeps;
  }
  return out;
}

Vec Linearization::gx_v(const Vec& v) const {
  const Index n = owner_->state_dim();
  require_length(v.size(), owner_->constraint_dim(), "gx_v vector");
  const Matrix V = as_blocks(v, n);
  Matrix jv = stacked_jvp_x(V);
  Matrix y = Matrix::Zero(n, V.cols());
  if (owner_->mutation() != Mutation::DropGxIdentity) y = V;
  y.rightCols(V.cols() - 1) -= jv.leftCols(V.cols() - 1);
  return from_blocks(y);
}

Vec Linearization::vt_gx(const Vec& v) const {
  const Index n = owner_->state_dim();
  require_length(v.size(), owner_->constraint_dim(), "vt_gx vector");
  const Matrix V = as_blocks(v, n);
  const Matrix r = stacked_vjp_x(shift_left(V));
  return from_blocks(V - r);
}

Vec Linearization::gp_v(const Vec& v) const {
  const Index n = owner_->state_dim();
  const Index m = owner_->intervals();
  const Matrix jp = stacked_jvp_p(v);
  Matrix y = Matrix::Zero(n, m);
  y.rightCols(m - 1) = -jp.leftCols(m - 1);
  if (owner_->mutation() == Mutation::FlipGpVSign) y = -y;
  return from_blocks(y);
}

Vec Linearization::vt_gp(const Vec& v) const {
  require_length(v.size(), owner_->constraint_dim(), "vt_gp vector");
  Vec out = -summed_vjp_p(shift_left(as_blocks(v, owner_->state_dim())));
  if (owner_->mutation() == Mutation::FlipVtGpSign) out = -out;
  return out;
}

Vec Linearization::schur_hvp(const Vec& v) const {
  return gx_v(vt_gx(v)) + gp_v(vt_gp(v));
}

// ---------------------------------------------------------------------------

MultipleShooting::MultipleShooting(std::shared_ptr<const Dynamics> f, ShootingGrid grid,
                                   Vec x_hat_1)
    : f_(std::move(f)), grid_(std::move(grid)), x_hat_1_(std::move(x_hat_1)) {
  if (!f_) throw std::invalid_argument("MultipleShooting: null dynamics");
  require_length(x_hat_1_.size(), f_->state_dim(), "MultipleShooting first measurement");
}

void MultipleShooting::check(const ShootingVariables& vars) const {
  require_length(vars.X.rows(), intervals(), "shooting variables: interval count");
  require_length(vars.X.cols(), state_dim(), "shooting variables: state dimension");
  require_length(vars.params.size(), param_dim(), "shooting variables: parameter count");
  if (vars.lambda.size() != 0) require_length(vars.lambda.size(), constraint_dim(), "multipliers");
}

ConstraintResidual MultipleShooting::residual(const ShootingVariables& vars) const {
  return residual(linearize(vars));
}

ConstraintResidual MultipleShooting::residual(const Linearization& lin) const {
  const Index m = intervals();
  const Matrix x = as_blocks(lin.vars().X);
  Matrix g(state_dim(), m);
  g.col(0) = x.col(0) - x_hat_1_;
  g.rightCols(m - 1) = x.rightCols(m - 1) - lin.end_states().leftCols(m - 1);
  ConstraintResidual r;
  r.g = from_blocks(g);
  r.end_states = lin.end_states().leftCols(m - 1);
  return r;
}

void MultipleShooting::require_dense(const char* what) const {
  if (constraint_dim() > dense_cap_) {
    throw std::invalid_argument(std::string(what) + ": m·n = " + std::to_string(constraint_dim()) +
                                " exceeds the dense cap of " + std::to_string(dense_cap_) +
                                "; use the matrix-free operators or raise the cap");
  }
}

Matrix MultipleShooting::assemble_gx_dense(const ShootingVariables& vars) const {
  require_dense("assemble_gx_dense");
  return assemble_gx_dense(linearize(vars));
}

Matrix MultipleShooting::assemble_gx_dense(const Linearization& lin) const {
  require_dense("assemble_gx_dense");
  const Index n = state_dim();
  const Index m = intervals();
  Matrix gx = Matrix::Identity(m * n, m * n);
  for (Index j = 0; j < n; ++j) {
    Matrix seed = Matrix::Zero(n, m);
    seed.row(j).setOnes();
    const Matrix cols = lin.stacked_jvp_x(seed);  // column k: J_k e_j
    for (Index k = 0; k + 1 < m; ++k) gx.block((k + 1) * n, k * n + j, n, 1) = -cols.col(k);
  }
  return gx;
}

Matrix MultipleShooting::assemble_gx_naive(const Linearization& lin) const {
  require_dense("assemble_gx_naive");
  const Index N = constraint_dim();
  Matrix gx(N, N);
  for (Index c = 0; c < N; ++c) {
    Vec e = Vec::Zero(N);
    e[c] = 1.0;
    gx.col(c) = lin.gx_v(e);
  }
  return gx;
}

Matrix MultipleShooting::assemble_gp_dense(const ShootingVariables& vars) const {
  require_dense("assemble_gp_dense");
  return assemble_gp_dense(linearize(vars));
}

Matrix MultipleShooting::assemble_gp_dense(const Linearization& lin) const {
  require_dense("assemble_gp_dense");
  const Index n = state_dim();
  const Index m = intervals();
  Matrix gp = Matrix::Zero(m * n, param_dim());
  for (Index i = 0; i < n; ++i) {
    Matrix seed = Matrix::Zero(n, m);
    seed.row(i).leftCols(m - 1).setOnes();
    const Matrix rows = lin.per_interval_vjp_p(seed);  // column k: e_iᵀ ∂F_k/∂p
    for (Index k = 0; k + 1 < m; ++k) gp.row((k + 1) * n + i) = -rows.col(k).transpose();
  }
  return gp;
}

namespace {

CondensedStep finish_step(const Vec& dlambda, const Vec& gxt_dl, const Vec& gpt_dl, const Vec& lx,
                          const Vec& lp, const Vec& g, Index m, Index n) {
  CondensedStep s;
  s.dlambda = dlambda;
  Vec dx = -(gxt_dl + lx);
  // The anchor row of the linearized constraints reads Δx_1 + G_1 = 0. Taking
  // it exactly keeps solver rounding out of a coordinate whose gradient is
  // otherwise zero, where Adam would blow the noise up to full-size steps.
  dx.head(n) = -g.head(n);
  s.dx = Eigen::Map<const RowMatrix>(dx.data(), m, n);
  s.dp = -(gpt_dl + lp);
  return s;
}

}  // namespace

CondensedStep MultipleShooting::condensed_step(const Linearization& lin,
                                               const ConstraintResidual& res, const Vec& lx,
                                               const Vec& lp, const CgOptions& cg) const {
  require_length(lx.size(), constraint_dim(), "condensed_step L_x");
  require_length(lp.size(), param_dim(), "condensed_step L_p");
  const Vec rhs = res.g - lin.gx_v(lx) - lin.gp_v(lp);
  // The linearized constraint residual after the step equals the CG
  // residual, so the target is tied to ‖G‖∞ as well as to ‖rhs‖₂.
  const double rhs_norm = rhs.norm();
  double target = cg.tol * std::min(rhs_norm, res.inf_norm());
  target = std::max(target, 1e-15 * rhs_norm);
  const Index max_iter = cg.max_iter > 0 ? cg.max_iter : 5 * constraint_dim();
  const CgResult sol = cg_solve_absolute([&](const Vec& v) { return lin.schur_hvp(v); }, rhs,
                                         target, max_iter);
  CondensedStep s = finish_step(sol.solution, lin.vt_gx(sol.solution), lin.vt_gp(sol.solution), lx,
                                lp, res.g, intervals(), state_dim());
  s.cg_iterations = sol.iterations;
  s.cg_residual = sol.residual;
  s.cg_converged = sol.converged;
  return s;
}

CondensedStep MultipleShooting::dense_step(const Matrix& gx, const Matrix& gp,
                                           const ConstraintResidual& res, const Vec& lx,
                                           const Vec& lp) const {
  const Vec rhs = res.g - gx * lx - gp * lp;
  Matrix S = gx * gx.transpose();
  S.noalias() += gp * gp.transpose();
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NonFiniteError("dense_step: Schur complement is not positive definite");
  }
  const Vec dl = llt.solve(rhs);
  if (!dl.allFinite()) throw NonFiniteError("dense_step: non-finite multiplier step");
  CondensedStep s = finish_step(dl, gx.transpose() * dl, gp.transpose() * dl, lx, lp, res.g,
                                intervals(), state_dim());
  s.cg_residual = (S * dl - rhs).norm();
  return s;
}

CondensedStep MultipleShooting::direct_step(const Matrix& gx, const Matrix& gp,
                                            const ConstraintResidual& res, const Vec& lx,
                                            const Vec& lp) const {
  const Index N = constraint_dim();
  const Index P = param_dim();
  const Index Z = N + P;
  Matrix kkt = Matrix::Zero(Z + N, Z + N);
  kkt.topLeftCorner(Z, Z).setIdentity();
  Matrix J(N, Z);
  J << gx, gp;
  kkt.topRightCorner(Z, N) = J.transpose();
  kkt.bottomLeftCorner(N, Z) = J;
  Vec b(Z + N);
  b << -lx, -lp, -res.g;
  const Vec sol = kkt.partialPivLu().solve(b);
  CondensedStep s;
  const Vec dx = sol.head(N);
  s.dx = Eigen::Map<const RowMatrix>(dx.data(), intervals(), state_dim());
  s.dp = sol.segment(N, P);
  s.dlambda = sol.tail(N);
  return s;
}

double MultipleShooting::linearized_feasibility(const Linearization& lin,
                                                const ConstraintResidual& res,
                                                const CondensedStep& step) const {
  const Vec dx = Eigen::Map<const Vec>(step.dx.data(), step.dx.size());
  const Vec r = lin.gx_v(dx) + lin.gp_v(step.dp) + res.g;
  return r.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

CgResult cg_solve_absolute(const std::function<Vec(const Vec&)>& apply, const Vec& rhs,
                           double abs_tol, Index max_iter) {
  CgResult out;
  out.solution = Vec::Zero(rhs.size());
  Vec r = rhs;
  double rr = r.squaredNorm();
  out.residual = std::sqrt(rr);
  if (out.residual <= abs_tol) {
    out.converged = true;
    return out;
  }
  Vec d = r;
  for (Index it = 0; it < max_iter; ++it) {
    const Vec q = apply(d);
    const double dq = d.dot(q);
    if (!std::isfinite(dq) || dq <= 0.0) {
      if (!std::isfinite(dq)) throw NonFiniteError("cg_solve: non-finite curvature", it);
      break;  // lost positive definiteness numerically; keep the best iterate
    }
    const double alpha = rr / dq;
    out.solution += alpha * d;
    r -= alpha * q;
    const double rr_new = r.squaredNorm();
    out.iterations = it + 1;
    out.residual = std::sqrt(rr_new);
    if (!out.solution.allFinite()) throw NonFiniteError("cg_solve: non-finite iterate", it);
    if (out.residual <= abs_tol) {
      out.converged = true;
      break;
    }
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  return out;
}

CgResult cg_solve(const std::function<Vec(const Vec&)>& apply, const Vec& rhs, double tol,
                  Index max_iter) {
  return cg_solve_absolute(apply, rhs, tol * rhs.norm(), max_iter);
}

}  // namespace msnode
