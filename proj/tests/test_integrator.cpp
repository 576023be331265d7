#include <doctest.h>

#include <cmath>

#include "msnode/integrator.hpp"
#include "msnode/network.hpp"
#include "support.hpp"

using namespace msnode;
using msnode::testing::rel_err;

namespace {

// dx/dt = a x
std::shared_ptr<const Dynamics> linear(double a) {
  return make_dynamics(1, 0, [a](auto& ctx, const auto& x, const auto&, const TimeRow&) {
    return ctx.scale(x, a);
  });
}

// dx/dt = x^2, which blows up at t = 1/x0
std::shared_ptr<const Dynamics> quadratic() {
  return make_dynamics(1, 0, [](auto& ctx, const auto& x, const auto&, const TimeRow&) {
    return ctx.mul(x, x);
  });
}

struct Fixture {
  std::shared_ptr<NeuralDynamics> net =
      std::make_shared<NeuralDynamics>(NetworkSpec{2, {8, 6}, false});
  Vec p = init_params(net->spec(), 21).values;
  Vec x0 = (Vec(2) << 0.3, -0.5).finished();
  IntervalPlan plan{0.0, 0.6, 12, {}};
};

}  // namespace

TEST_CASE("one RK4 step of dx/dt = x from 1 with h = 0.1") {
  const Vec x = rk4_step(*linear(1.0), Vec::Ones(1), Vec(0), 0.0, 0.1);
  // 1 + h + h^2/2 + h^3/6 + h^4/24
  CHECK(std::abs(x[0] - 1.10517083333333333) < 1e-15);
}

TEST_CASE("one RK4 step of dx/dt = -x from 1 with h = 0.1") {
  const Vec x = rk4_step(*linear(-1.0), Vec::Ones(1), Vec(0), 0.0, 0.1);
  CHECK(std::abs(x[0] - 0.9048375) < 1e-15);
}

TEST_CASE("non-positive step sizes are rejected") {
  CHECK_THROWS_AS(rk4_step(*linear(1.0), Vec::Ones(1), Vec(0), 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("save times must lie on substep boundaries") {
  CHECK_NOTHROW(IntervalPlan(0.0, 1.0, 10, {0.0, 0.3, 1.0}));
  CHECK_THROWS_AS(IntervalPlan(0.0, 1.0, 10, {0.35}), std::invalid_argument);
  CHECK_THROWS_AS(IntervalPlan(0.0, 1.0, 10, {0.5, 0.2}), std::invalid_argument);
}

TEST_CASE("integration error falls at fourth order") {
  const auto f = linear(-1.3);
  double prev = 0.0;
  for (Index s : {40, 80, 160}) {
    const auto sol = integrate_interval(*f, Vec::Ones(1), Vec(0), IntervalPlan(0.0, 2.0, s));
    const double err = std::abs(sol.end_state[0] - std::exp(-2.6));
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(16.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("saved states appear in order and include both ends") {
  const auto f = linear(1.0);
  const auto sol = integrate_interval(*f, Vec::Ones(1), Vec(0), IntervalPlan(0.0, 1.0, 4, {0.0, 0.5, 1.0}));
  REQUIRE(sol.saved_states.rows() == 3);
  CHECK(sol.saved_states(0, 0) == 1.0);
  CHECK(sol.saved_states(2, 0) == sol.end_state[0]);
}

TEST_CASE("interval sensitivities match central differences") {
  Fixture fx;
  const auto& f = *fx.net;
  auto end_of_x = [&](const Vec& x) { return integrate_interval(f, x, fx.p, fx.plan).end_state; };
  auto end_of_p = [&](const Vec& p) { return integrate_interval(f, fx.x0, p, fx.plan).end_state; };
  std::mt19937_64 rng(2);
  const Vec vx = msnode::testing::random_vec(2, rng);
  const Vec vp = msnode::testing::random_vec(fx.p.size(), rng);
  const Vec w = msnode::testing::random_vec(2, rng);
  const double h = 1e-6;

  const Matrix Jx = msnode::testing::fd_jacobian(end_of_x, fx.x0);
  CHECK(rel_err(interval_jvp_x(f, fx.x0, fx.plan, fx.p, vx), Jx * vx) < 1e-7);
  CHECK(rel_err(interval_vjp_x(f, fx.x0, fx.plan, fx.p, w), Jx.transpose() * w) < 1e-7);

  const Vec fd_p = (end_of_p(fx.p + h * vp) - end_of_p(fx.p - h * vp)) / (2.0 * h);
  CHECK(rel_err(interval_jvp_p(f, fx.x0, fx.plan, fx.p, vp), fd_p) < 1e-7);
  const double wJv = w.dot(fd_p);
  CHECK(std::abs(interval_vjp_p(f, fx.x0, fx.plan, fx.p, w).dot(vp) - wJv) < 1e-7 * std::abs(wJv) + 1e-12);
}

TEST_CASE("forward and reverse interval sensitivities are transposes") {
  Fixture fx;
  std::mt19937_64 rng(8);
  const Vec v = msnode::testing::random_vec(2, rng);
  const Vec w = msnode::testing::random_vec(2, rng);
  const double a = w.dot(interval_jvp_x(*fx.net, fx.x0, fx.plan, fx.p, v));
  const double b = interval_vjp_x(*fx.net, fx.x0, fx.plan, fx.p, w).dot(v);
  CHECK(std::abs(a - b) < 1e-12 * std::max(1.0, std::abs(a)));
}

TEST_CASE("a batch of intervals equals the intervals run one by one") {
  Fixture fx;
  Matrix x0(2, 3);
  x0 << 0.3, -0.1, 0.9, -0.5, 0.4, 0.0;
  BatchPlan plan;
  plan.t_start = (TimeRow(3) << 0.0, 0.6, 1.2).finished();
  plan.step = 0.05;
  plan.substeps = 12;
  IntervalTape tape(*fx.net, x0, fx.p, plan);
  for (Index c = 0; c < 3; ++c) {
    const IntervalPlan one(plan.t_start[c], plan.t_start[c] + 0.6, 12);
    const auto sol = integrate_interval(*fx.net, x0.col(c), fx.p, one);
    CHECK(rel_err(tape.end_state().col(c), sol.end_state) < 1e-14);
  }
}

TEST_CASE("blow-up is reported with its substep") {
  const auto f = quadratic();
  const IntervalPlan plan(0.0, 2.0, 40);
  const auto sol = integrate_interval(*f, Vec::Constant(1, 100.0), Vec(0), plan);
  CHECK_FALSE(sol.ok());
  CHECK(*sol.nonfinite_substep >= 0);
  try {
    interval_jvp_x(*f, Vec::Constant(1, 100.0), plan, Vec(0), Vec::Ones(1));
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.location() == *sol.nonfinite_substep);
  }
}
