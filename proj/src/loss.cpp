#include "msnode/loss.hpp"

#include <cmath>
#include <string>

namespace msnode {

ShootingLoss::ShootingLoss(const ShootingGrid& grid, RowMatrix measurements)
    : grid_(&grid), y_(std::move(measurements)) {
  require_length(y_.rows(), grid.times().size(), "ShootingLoss: measurement rows");
}

double ShootingLoss::weight(Index k, Index j, Index gaps) const {
  if (j == gaps && k != grid_->intervals() - 1) return 0.0;
  const auto [first, last] = grid_->owned_rows(k);
  return 1.0 / static_cast<double>((last - first) * y_.cols());
}

Matrix ShootingLoss::targets(const ShootingGrid::Batch& b, Index j) const {
  Matrix t(y_.cols(), static_cast<Index>(b.intervals.size()));
  for (std::size_t c = 0; c < b.intervals.size(); ++c) {
    const Index row = grid_->boundaries()[static_cast<std::size_t>(b.intervals[c])] + j;
    t.col(static_cast<Index>(c)) = y_.row(row).transpose();
  }
  return t;
}

double ShootingLoss::phi(const Dynamics& f, const ShootingVariables& vars, Index k) const {
  const auto sol = integrate_interval(f, vars.X.row(k).transpose(), vars.params, grid_->plan(k));
  if (!sol.ok()) {
    throw NonFiniteError("phi: interval " + std::to_string(k) + " left the finite range", k);
  }
  const auto [first, last] = grid_->owned_rows(k);
  return (sol.saved_states - y_.middleRows(first, last - first)).squaredNorm() /
         static_cast<double>(sol.saved_states.size());
}

double ShootingLoss::total(const Dynamics& f, const ShootingVariables& vars) const {
  const Matrix x = as_blocks(vars.X);
  double sum = 0.0;
  for (const auto& b : grid_->batches()) {
    Matrix x0(x.rows(), static_cast<Index>(b.intervals.size()));
    for (std::size_t c = 0; c < b.intervals.size(); ++c) x0.col(static_cast<Index>(c)) = x.col(b.intervals[c]);
    ad::PrimalContext ctx;
    const auto tr = detail::run_batch(ctx, f, x0, Matrix(vars.params), b.plan);
    if (tr.nonfinite_substep) throw NonFiniteError("total loss: non-finite state", -1);
    for (Index j = 0; j <= b.gaps; ++j) {
      const Matrix d2 = (tr.saved[static_cast<std::size_t>(j)] - targets(b, j)).array().square();
      for (std::size_t c = 0; c < b.intervals.size(); ++c) {
        sum += weight(b.intervals[c], j, b.gaps) * d2.col(static_cast<Index>(c)).sum();
      }
    }
  }
  return sum;
}

double ShootingLoss::total(const Linearization& lin) const {
  double sum = 0.0;
  const auto& batches = grid_->batches();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    const IntervalTape& tape = lin.tapes()[i];
    for (Index j = 0; j <= b.gaps; ++j) {
      const Matrix& s = tape.tape().primal(tape.saved()[static_cast<std::size_t>(j)]);
      const Matrix d2 = (s - targets(b, j)).array().square();
      for (std::size_t c = 0; c < b.intervals.size(); ++c) {
        sum += weight(b.intervals[c], j, b.gaps) * d2.col(static_cast<Index>(c)).sum();
      }
    }
  }
  return sum;
}

ShootingLoss::Gradients ShootingLoss::lagrangian_grads(const Linearization& lin) const {
  const MultipleShooting& ms = lin.owner();
  const Index n = ms.state_dim();
  const Index m = ms.intervals();
  const Vec& lambda = lin.vars().lambda;
  const bool has_lambda = lambda.size() != 0 && !lambda.isZero(0.0);
  Matrix lam = Matrix::Zero(n, m);
  if (lambda.size() != 0) lam = as_blocks(lambda, n);

  Gradients out;
  Matrix lx = lam;  // identity part of G_xᵀλ
  out.lp = Vec::Zero(ms.param_dim());
  const auto& batches = grid_->batches();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    const IntervalTape& tape = lin.tapes()[i];
    const auto B = static_cast<Index>(b.intervals.size());
    std::vector<ad::Tape::Seed> seeds;
    for (Index j = 0; j <= b.gaps; ++j) {
      const ad::Var s = tape.saved()[static_cast<std::size_t>(j)];
      const Matrix d = tape.tape().primal(s) - targets(b, j);
      Matrix w(n, B);
      for (Index c = 0; c < B; ++c) {
        const double wt = weight(b.intervals[static_cast<std::size_t>(c)], j, b.gaps);
        out.phi += wt * d.col(c).squaredNorm();
        w.col(c) = 2.0 * wt * d.col(c);
      }
      seeds.push_back({s, std::move(w)});
    }
    if (has_lambda) {
      // -λ_{k+1} on the end state of interval k.
      Matrix w(n, B);
      for (Index c = 0; c < B; ++c) {
        const Index k = b.intervals[static_cast<std::size_t>(c)];
        w.col(c) = k + 1 < m ? Vec(-lam.col(k + 1)) : Vec::Zero(n);
      }
      seeds.push_back({tape.end(), std::move(w)});
    }
    const ad::Adjoints adj = tape.tape().backward(seeds);
    ++ms.stats().reverse_sweeps;
    const Matrix ax = adj[tape.x0()];
    for (Index c = 0; c < B; ++c) lx.col(b.intervals[static_cast<std::size_t>(c)]) += ax.col(c);
    out.lp += adj[tape.params()].col(0);
  }
  out.lx = from_blocks(lx);
  if (!out.lx.allFinite() || !out.lp.allFinite() || !std::isfinite(out.phi)) {
    throw NonFiniteError("lagrangian_grads: non-finite gradient");
  }
  return out;
}

}  // namespace msnode
