#pragma once

// Small random problems and reference computations shared by the tests.

#include <cstdint>
#include <memory>
#include <random>

#include "msnode/loss.hpp"
#include "msnode/network.hpp"
#include "msnode/shooting.hpp"

namespace msnode::testing {

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return scale == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
}

inline Vec random_vec(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

// A small shooting problem with a random tanh network.
struct Problem {
  std::shared_ptr<NeuralDynamics> net;
  std::unique_ptr<MultipleShooting> ms;
  RowMatrix data;
  ShootingVariables vars;
};

inline Problem make_problem(Index m, Index n, std::vector<Index> hidden, std::uint64_t seed,
                            Index samples_per_interval = 2, Index substeps = 3) {
  std::mt19937_64 rng(seed);
  Problem pr;
  pr.net = std::make_shared<NeuralDynamics>(NetworkSpec{n, std::move(hidden), false});
  const Index T = m * samples_per_interval + 1;
  Vec times(T);
  for (Index j = 0; j < T; ++j) times[j] = 0.1 * static_cast<double>(j);
  pr.data = RowMatrix(T, n);
  for (Index j = 0; j < T; ++j) pr.data.row(j) = random_vec(n, rng).transpose();
  pr.ms = std::make_unique<MultipleShooting>(pr.net, ShootingGrid::uniform(times, m, substeps),
                                             pr.data.row(0).transpose());
  pr.vars.X = RowMatrix(m, n);
  for (Index k = 0; k < m; ++k) pr.vars.X.row(k) = random_vec(n, rng).transpose();
  pr.vars.params = init_params(pr.net->spec(), seed + 1).values;
  pr.vars.lambda = random_vec(m * n, rng);
  return pr;
}

// Dense G_x and G_p built interval by interval from single-interval
// sensitivities, independent of the batched operator code.
inline Matrix reference_gx(const Problem& pr) {
  const auto& ms = *pr.ms;
  const Index n = ms.state_dim();
  const Index m = ms.intervals();
  Matrix gx = Matrix::Identity(m * n, m * n);
  for (Index k = 0; k + 1 < m; ++k) {
    for (Index j = 0; j < n; ++j) {
      Vec e = Vec::Zero(n);
      e[j] = 1.0;
      gx.block((k + 1) * n, k * n + j, n, 1) =
          -interval_jvp_x(*pr.net, pr.vars.X.row(k).transpose(), ms.grid().plan(k), pr.vars.params, e);
    }
  }
  return gx;
}

inline Matrix reference_gp(const Problem& pr) {
  const auto& ms = *pr.ms;
  const Index n = ms.state_dim();
  const Index m = ms.intervals();
  Matrix gp = Matrix::Zero(m * n, ms.param_dim());
  for (Index k = 0; k + 1 < m; ++k) {
    for (Index i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      gp.row((k + 1) * n + i) =
          -interval_vjp_p(*pr.net, pr.vars.X.row(k).transpose(), ms.grid().plan(k), pr.vars.params, e)
               .transpose();
    }
  }
  return gp;
}

// Central differences of a vector map.
template <class F>
Matrix fd_jacobian(F&& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

}  // namespace msnode::testing
