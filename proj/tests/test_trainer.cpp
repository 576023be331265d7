#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msnode/trainer.hpp"

using namespace msnode;

namespace {

// Lotka-Volterra on [0, 4]: 41 training and 40 test samples.
Dataset short_lv() {
  auto s = system_spec("lotka_volterra");
  s.t_end = 4.0;
  return generate_data(s, 20);
}

RunConfig small_config(Index epochs) {
  RunConfig c;
  c.intervals = 4;
  c.hidden = {6};
  c.epochs = epochs;
  c.substeps = 2;
  c.seed = 3;
  c.early_stop = false;
  return c;
}

}  // namespace

TEST_CASE("shooting variables start on the measurements") {
  const auto d = short_lv();
  const auto cfg = small_config(0);
  const auto grid = make_grid(cfg, d.train, 4);
  const Index P = NeuralDynamics(cfg.network(2)).param_dim();
  const auto v = init_shooting_vars(cfg, grid, d.train, P);
  REQUIRE(v.X.rows() == 4);
  for (Index k = 0; k < 4; ++k) {
    CHECK(v.X.row(k) == d.train.values.row(grid.boundaries()[static_cast<std::size_t>(k)]));
  }
  CHECK(v.lambda.size() == 8);
  CHECK(v.lambda.cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.params == init_params(cfg.network(2), 3).values);
}

TEST_CASE("zero epochs leaves the initial point") {
  const auto d = short_lv();
  const auto r = train_ms(small_config(0), d);
  CHECK(r.report.epochs_run() == 0);
  CHECK(r.report.status == "epoch-budget");
  CHECK(r.report.final_g_inf > 0.0);
  CHECK(r.report.metrics.train.mse.has_value());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto d = short_lv();
  const auto a = train_ms(small_config(15), d);
  const auto b = train_ms(small_config(15), d);
  REQUIRE(a.report.epochs_run() == 15);
  for (Index e = 0; e < 15; ++e) {
    CHECK(a.report.history[e].phi == b.report.history[e].phi);
    CHECK(a.report.history[e].g_inf == b.report.history[e].g_inf);
  }
  CHECK(a.vars.params == b.vars.params);
}

TEST_CASE("one interval with frozen multipliers is single shooting") {
  const auto d = short_lv();
  auto cfg = small_config(50);
  cfg.intervals = 1;
  cfg.freeze_lambda = true;
  const auto ms = train_ms(cfg, d);
  const auto ss = train_ss(cfg, d);
  REQUIRE(ms.report.epochs_run() == 50);
  REQUIRE(ss.report.epochs_run() == 50);
  double worst = 0.0;
  for (Index e = 0; e < 50; ++e) {
    const double a = ms.report.history[e].phi;
    const double b = ss.report.history[e].phi;
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("dense and matrix-free paths train alike") {
  const auto d = short_lv();
  auto cfg = small_config(10);
  cfg.cg_tol = 1e-12;
  cfg.solver = SolverPath::Dense;
  const auto a = train_ms(cfg, d);
  cfg.solver = SolverPath::MatrixFree;
  const auto b = train_ms(cfg, d);
  CHECK(a.report.solver_used == "dense");
  CHECK(b.report.solver_used == "matrix-free");
  for (Index e = 0; e < 10; ++e) {
    CAPTURE(e);
    CHECK(std::abs(a.report.history[e].phi - b.report.history[e].phi) <=
          1e-6 * std::max(1.0, a.report.history[e].phi));
  }
}

TEST_CASE("the anchored first state never moves") {
  const auto d = short_lv();
  const auto r = train_ms(small_config(20), d);
  CHECK(r.vars.X.row(0) == d.train.values.row(0));
}

TEST_CASE("every matrix-free step satisfies the linearized constraints") {
  const auto d = short_lv();
  auto cfg = small_config(20);
  cfg.solver = SolverPath::MatrixFree;
  const auto r = train_ms(cfg, d);
  for (const auto& e : r.report.history) {
    CAPTURE(e.epoch);
    CHECK(e.feasibility <= 10.0 * cfg.cg_tol * e.g_inf);
  }
}

TEST_CASE("the dense path refuses oversized problems") {
  const auto d = short_lv();
  auto cfg = small_config(1);
  cfg.solver = SolverPath::Dense;
  cfg.dense_cap = 4;
  CHECK_THROWS_WITH_AS(train_ms(cfg, d), doctest::Contains("matrix-free"), std::invalid_argument);
}

TEST_CASE("true dynamics reproduce the data") {
  for (const auto& name : system_names()) {
    const auto s = system_spec(name);
    if (s.delayed()) continue;
    CAPTURE(name);
    const auto d = scale(generate_data(s));
    const auto f = scaled_dynamics(true_dynamics(s), d.scaler);
    const auto m = evaluate(*f, Vec(0), d, s.truth_substeps);
    REQUIRE(m.train.mse.has_value());
    CHECK(*m.train.mse < 1e-8);
    if (d.test_available) {
      REQUIRE(m.test.mse.has_value());
      CHECK(*m.test.mse < 1e-8);
    }
  }
}

TEST_CASE("a zero vector field misses the data") {
  const auto d = short_lv();
  const auto m = evaluate(*zero_dynamics(2), Vec(0), d, 2);
  CHECK(*m.train.mse > 0.1);
  CHECK(m.prediction.rows() == 81);
}

TEST_CASE("configuration checks") {
  auto cfg = small_config(1);
  CHECK_NOTHROW(cfg.validate(41));
  cfg.intervals = 41;
  CHECK_THROWS_AS(cfg.validate(41), std::invalid_argument);
  cfg.intervals = 0;
  CHECK_THROWS_AS(cfg.validate(41), std::invalid_argument);
  CHECK(solver_from_string("matrix-free") == SolverPath::MatrixFree);
  CHECK(to_string(solver_from_string("dense")) == "dense");
  CHECK_THROWS_AS(solver_from_string("cholesky"), std::invalid_argument);
  const auto lv = RunConfig::for_system("lotka_volterra");
  CHECK(lv.intervals == 20);
  CHECK(lv.hidden == std::vector<Index>{32, 64, 32});
  CHECK(lv.lr.initial == 0.01);
}

TEST_CASE("reports serialize") {
  const auto d = short_lv();
  const auto r = train_ms(small_config(3), d);
  const auto j = report_to_json(r.report);
  CHECK(j.at("status") == "epoch-budget");
  CHECK(j.at("config").at("intervals") == 4);
  const auto path = std::filesystem::temp_directory_path() / "msnode_history.csv";
  write_history_csv(r.report, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,phi,g_inf,lr");
  Index rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove(path);
}
