#include <doctest.h>

#include <cmath>

#include "msnode/optimizer.hpp"

using namespace msnode;

TEST_CASE("first Adam step moves each coordinate by lr against the gradient sign") {
  Vec theta = Vec::Zero(3);
  const Vec g = (Vec(3) << 2.0, -0.5, 1e-3).finished();
  AdamState s(3);
  adam_update(theta, g, s, 0.01);
  for (Index i = 0; i < 3; ++i) {
    const double expected = -0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(theta[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("second Adam step follows the bias-corrected moments") {
  Vec theta = Vec::Zero(1);
  AdamState s(1);
  adam_update(theta, Vec::Constant(1, 1.0), s, 0.1);
  adam_update(theta, Vec::Constant(1, 3.0), s, 0.1);
  const double m = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1.0 - 0.81);
  const double v = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1.0 - 0.999 * 0.999);
  const double first = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(theta[0] == doctest::Approx(first - 0.1 * m / (std::sqrt(v) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam with g = -Δ moves along Δ") {
  Vec theta = Vec::Zero(2);
  const Vec delta = (Vec(2) << 0.3, -4.0).finished();
  AdamState s(2);
  adam_update(theta, -delta, s, 0.01);
  CHECK(theta[0] > 0.0);
  CHECK(theta[1] < 0.0);
}

TEST_CASE("non-finite gradients are rejected") {
  Vec theta = Vec::Zero(1);
  AdamState s(1);
  CHECK_THROWS_AS(adam_update(theta, Vec::Constant(1, NAN), s, 0.01), NonFiniteError);
}

TEST_CASE("learning rate starts at 0.01") {
  LrSchedule lr;
  CHECK(lr.step(0, 1.0) == 0.01);
  CHECK(lr.lr_at(0) == 0.01);
}

TEST_CASE("two plateau triggers quarter the rate") {
  LrSchedule lr;
  for (Index e = 0; e <= 250; ++e) lr.step(e, 1.0);
  REQUIRE(lr.decay_epochs().size() == 2);
  CHECK(lr.current() == doctest::Approx(0.0025));
  CHECK(lr.lr_at(250) == doctest::Approx(0.0025));
}

TEST_CASE("steady improvement keeps the rate") {
  LrSchedule lr;
  double loss = 1.0;
  for (Index e = 0; e < 500; ++e) {
    lr.step(e, loss);
    loss *= 0.98;
  }
  CHECK(lr.current() == 0.01);
}

TEST_CASE("the rate never drops below the floor and lr_at is monotone") {
  LrSchedule lr;
  for (Index e = 0; e < 3000; ++e) lr.step(e, 1.0);
  CHECK(lr.current() == doctest::Approx(1e-4));
  double prev = 1.0;
  for (Index e = 0; e < 3000; e += 7) {
    CHECK(lr.lr_at(e) <= prev);
    prev = lr.lr_at(e);
  }
}

TEST_CASE("zero patience keeps the rate constant") {
  LrSchedule lr({0.01, 0.5, 0, 0.01, 1e-4});
  for (Index e = 0; e < 1000; ++e) lr.step(e, 1.0);
  CHECK(lr.current() == 0.01);
}

TEST_CASE("regress trigger halves after a sustained jump and rebases") {
  LrSchedule lr({0.01, 0.5, 0, 0.01, 1e-4, 2.0, 5});
  lr.step(0, 1.0);
  for (Index e = 1; e <= 4; ++e) lr.step(e, 3.0);
  CHECK(lr.current() == 0.01);
  lr.step(5, 3.0);
  CHECK(lr.current() == 0.005);
  REQUIRE(lr.decay_epochs().size() == 1);
  CHECK(lr.decay_epochs()[0] == 5);
  // 3.0 is now the reference, so staying there is not a regression.
  for (Index e = 6; e < 40; ++e) lr.step(e, 3.0);
  CHECK(lr.current() == 0.005);
  // Spikes shorter than the patience are ignored.
  for (Index e = 40; e < 80; e += 5) {
    for (Index k = 0; k < 4; ++k) lr.step(e + k, 100.0);
    lr.step(e + 4, 3.0);
  }
  CHECK(lr.current() == 0.005);
}

TEST_CASE("regress trigger is off by default") {
  LrSchedule lr({0.01, 0.5, 0, 0.01, 1e-4});
  lr.step(0, 1.0);
  for (Index e = 1; e < 50; ++e) lr.step(e, 1e6);
  CHECK(lr.current() == 0.01);
  CHECK_THROWS_AS(LrSchedule({0.01, 0.5, 0, 0.01, 1e-4, 0.5, 5}), std::invalid_argument);
}
