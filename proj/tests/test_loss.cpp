#include <doctest.h>

#include "msnode/loss.hpp"
#include "support.hpp"

using namespace msnode;
using msnode::testing::make_problem;
using msnode::testing::random_vec;
using msnode::testing::rel_err;

namespace {

Vec flat(const RowMatrix& x) { return Eigen::Map<const Vec>(x.data(), x.size()); }

// Φ + λᵀG as a plain function of (X, p), for finite differences.
double lagrangian(const testing::Problem& pr, const ShootingLoss& loss, const ShootingVariables& v) {
  const auto res = pr.ms->residual(v);
  return loss.total(*pr.net, v) + v.lambda.dot(res.g);
}

}  // namespace

TEST_CASE("hand-computed loss for constant dynamics") {
  // dx/dt = 0, so every saved state equals the interval start.
  Vec times(5);
  times << 0.0, 1.0, 2.0, 3.0, 4.0;
  const auto grid = ShootingGrid::uniform(times, 2, 1);
  RowMatrix y(5, 1);
  y << 0.0, 1.0, 2.0, 3.0, 4.0;
  const ShootingLoss loss(grid, y);
  ShootingVariables v;
  v.X = RowMatrix(2, 1);
  v.X << 1.0, 1.0;
  v.params = Vec(0);
  const auto f = zero_dynamics(1);
  // interval 0 owns t = 0, 1: errors 1, 0 -> 1/2
  CHECK(loss.phi(*f, v, 0) == doctest::Approx(0.5).epsilon(1e-15));
  // interval 1 owns t = 2, 3, 4: errors 1, 2, 3 -> 14/3
  CHECK(loss.phi(*f, v, 1) == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK(loss.total(*f, v) == doctest::Approx(0.5 + 14.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("batched total equals the sum of per-interval losses") {
  auto pr = make_problem(4, 2, {5}, 3, 3);
  const ShootingLoss loss(pr.ms->grid(), pr.data);
  double sum = 0.0;
  for (Index k = 0; k < 4; ++k) sum += loss.phi(*pr.net, pr.vars, k);
  CHECK(loss.total(*pr.net, pr.vars) == doctest::Approx(sum).epsilon(1e-13));
  const auto lin = pr.ms->linearize(pr.vars);
  CHECK(loss.total(lin) == doctest::Approx(sum).epsilon(1e-13));
  CHECK(loss.lagrangian_grads(lin).phi == doctest::Approx(sum).epsilon(1e-13));
}

TEST_CASE("uneven intervals are weighted by their own sample counts") {
  Vec times(8);
  for (Index j = 0; j < 8; ++j) times[j] = static_cast<double>(j);
  const auto grid = ShootingGrid::uniform(times, 3, 1);  // gaps 3, 2, 2
  RowMatrix y = RowMatrix::Zero(8, 1);
  y(0, 0) = 3.0;
  const ShootingLoss loss(grid, y);
  ShootingVariables v;
  v.X = RowMatrix::Zero(3, 1);
  v.params = Vec(0);
  CHECK(loss.phi(*zero_dynamics(1), v, 0) == doctest::Approx(9.0 / 3.0));
}

TEST_CASE("Lagrangian gradients match central differences") {
  auto pr = make_problem(3, 2, {4, 3}, 17, 2, 2);
  const ShootingLoss loss(pr.ms->grid(), pr.data);
  const auto g = loss.lagrangian_grads(pr.ms->linearize(pr.vars));

  auto of_x = [&](const Vec& x) {
    ShootingVariables v = pr.vars;
    v.X = Eigen::Map<const RowMatrix>(x.data(), 3, 2);
    return Vec::Constant(1, lagrangian(pr, loss, v));
  };
  const Matrix fx = msnode::testing::fd_jacobian(of_x, flat(pr.vars.X));
  CHECK(rel_err(g.lx, fx.transpose()) < 1e-7);

  std::mt19937_64 rng(4);
  const Vec dir = random_vec(pr.ms->param_dim(), rng);
  const double h = 1e-6;
  ShootingVariables vp = pr.vars, vm = pr.vars;
  vp.params += h * dir;
  vm.params -= h * dir;
  const double fd = (lagrangian(pr, loss, vp) - lagrangian(pr, loss, vm)) / (2.0 * h);
  CHECK(std::abs(g.lp.dot(dir) - fd) < 1e-7 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("with zero multipliers the gradients are those of the loss alone") {
  auto pr = make_problem(3, 2, {4}, 5);
  const ShootingLoss loss(pr.ms->grid(), pr.data);
  ShootingVariables v = pr.vars;
  v.lambda.setZero();
  const auto a = loss.lagrangian_grads(pr.ms->linearize(v));
  v.lambda.resize(0);
  const auto b = loss.lagrangian_grads(pr.ms->linearize(v));
  CHECK((a.lx - b.lx).norm() == 0.0);
  CHECK((a.lp - b.lp).norm() == 0.0);
}

TEST_CASE("measurement rows must match the grid") {
  auto pr = make_problem(3, 2, {4}, 5);
  CHECK_THROWS_AS(ShootingLoss(pr.ms->grid(), RowMatrix::Zero(3, 2)), DimensionError);
}
