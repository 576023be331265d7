#include <doctest.h>

#include <cmath>
#include <random>

#include "msnode/ad.hpp"
#include "support.hpp"

using namespace msnode;
using msnode::testing::fd_jacobian;
using msnode::testing::random_vec;

namespace {

// f(x) = [x0 * exp(x1) / (1 + x2^2), tanh(x0 - x2) * x1, x2^3 - 2 x0]
struct Composite {
  template <class Ctx>
  typename Ctx::Value operator()(Ctx& ctx, const typename Ctx::Value& xv) const {
    ad::Term x(ctx, xv);
    auto a = x[0], b = x[1], c = x[2];
    return ad::stack({a * exp(b) / (1.0 + c * c), tanh(a - c) * b, pow(c, 3.0) - 2.0 * a});
  }
};

Vec plain(const Vec& x) {
  ad::PrimalContext ctx;
  return Composite{}(ctx, Matrix(x)).col(0);
}

}  // namespace

TEST_CASE("jvp matches central differences on a composite map") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = random_vec(3, rng);
    const Vec v = random_vec(3, rng);
    const Matrix J = fd_jacobian(plain, x);
    const auto r = ad::jvp(Composite{}, x, v);
    CHECK(r.finite);
    CHECK((r.value - plain(x)).norm() == 0.0);
    CHECK(msnode::testing::rel_err(r.tangent, J * v) < 1e-8);
  }
}

TEST_CASE("vjp is the transpose of jvp") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = random_vec(3, rng);
    const Vec v = random_vec(3, rng);
    const Vec w = random_vec(3, rng);
    const double lhs = w.dot(ad::jvp(Composite{}, x, v).tangent);
    const double rhs = ad::vjp(Composite{}, x, w).cotangent.dot(v);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("gradient of a sum of squares is 2x") {
  const Vec x = (Vec(4) << 1.0, -2.0, 0.5, 3.0).finished();
  const Vec g = ad::gradient([](auto& ctx, const auto& v) { return ctx.sum(ctx.mul(v, v)); }, x);
  CHECK((g - 2.0 * x).norm() == 0.0);
}

TEST_CASE("product rule holds exactly on duals") {
  ad::DualContext ctx;
  const ad::DualVector a(Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, 1.0));
  const ad::DualVector b(Matrix::Constant(1, 1, 5.0), Matrix::Constant(1, 1, 2.0));
  const auto p = ctx.mul(a, b);
  CHECK(p.primal(0, 0) == 15.0);
  CHECK(p.tangent(0, 0) == 1.0 * 5.0 + 3.0 * 2.0);
}

TEST_CASE("tanh kernel agrees with std::tanh") {
  Matrix a(1, 9);
  a << -30.0, -5.0, -1.0, -1e-3, 0.0, 1e-8, 0.7, 4.0, 30.0;
  const Matrix t = ad::kernels::tanh(a);
  for (Index i = 0; i < a.cols(); ++i) CHECK(std::abs(t(0, i) - std::tanh(a(0, i))) < 1e-15);
}

TEST_CASE("tape replay reproduces recorded values bit for bit") {
  ad::Tape tape;
  const ad::Var x = tape.input((Matrix(3, 1) << 0.3, -1.2, 2.0).finished());
  const ad::Var y = Composite{}(tape, x);
  CHECK((tape.replay(y) - tape.primal(y)).norm() == 0.0);
}

TEST_CASE("mismatched shapes are rejected") {
  ad::PrimalContext ctx;
  CHECK_THROWS_AS(ctx.add(Matrix::Zero(2, 1), Matrix::Zero(3, 1)), DimensionError);
  CHECK_THROWS_AS(ad::jvp(Composite{}, Vec::Zero(3), Vec::Zero(2)), DimensionError);
}

TEST_CASE("gradient flags non-finite values") {
  const Vec x = Vec::Constant(1, 800.0);
  CHECK_THROWS_AS(ad::gradient([](auto& ctx, const auto& v) { return ctx.sum(ctx.exp(v)); }, x),
                  NonFiniteError);
}

TEST_CASE("per-column parameter adjoints equal separate sweeps") {
  const ad::AffineBlock block{0, 6, 3, 2};
  std::mt19937_64 rng(9);
  const Vec params = random_vec(9, rng);
  Matrix x(2, 4);
  for (Index c = 0; c < 4; ++c) x.col(c) = random_vec(2, rng);
  Matrix w(3, 4);
  for (Index c = 0; c < 4; ++c) w.col(c) = random_vec(3, rng);

  ad::Tape tape;
  const ad::Var p = tape.input(Matrix(params));
  const ad::Var xi = tape.input(x);
  // Two uses of the same block, so accumulation over uses is exercised.
  const ad::Var h = tape.tanh(tape.affine(p, block, xi));
  const ad::Var y = tape.mul(h, tape.affine(p, block, xi));
  const Matrix split = tape.backward(y, w, true)[p];
  const Matrix summed = tape.backward(y, w)[p];
  REQUIRE(split.cols() == 4);
  CHECK(msnode::testing::rel_err(split.rowwise().sum(), summed) < 1e-14);
  for (Index c = 0; c < 4; ++c) {
    ad::Tape one;
    const ad::Var p1 = one.input(Matrix(params));
    const ad::Var x1 = one.input(Matrix(x.col(c)));
    const ad::Var h1 = one.tanh(one.affine(p1, block, x1));
    const ad::Var y1 = one.mul(h1, one.affine(p1, block, x1));
    CHECK(msnode::testing::rel_err(split.col(c), one.backward(y1, Matrix(w.col(c)))[p1]) < 1e-14);
  }
}
