#include "msnode/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace msnode {

std::string to_string(SolverPath s) {
  switch (s) {
    case SolverPath::Auto: return "auto";
    case SolverPath::Dense: return "dense";
    case SolverPath::MatrixFree: return "matrix-free";
  }
  return "auto";
}

SolverPath solver_from_string(const std::string& s) {
  if (s == "auto") return SolverPath::Auto;
  if (s == "dense") return SolverPath::Dense;
  if (s == "matrix-free") return SolverPath::MatrixFree;
  throw std::invalid_argument("solver must be one of auto, dense, matrix-free (got '" + s + "')");
}

RunConfig RunConfig::for_system(const std::string& name, const SystemOptions& opt) {
  const SystemSpec spec = system_spec(name, opt);
  RunConfig c;
  c.system = name;
  c.intervals = spec.intervals;
  c.hidden = spec.hidden;
  c.time_input = spec.time_input;
  c.epochs = spec.reference.epochs;
  c.scale = spec.scaled;
  c.options = opt;
  return c;
}

NetworkSpec RunConfig::network(Index state_dim) const { return {state_dim, hidden, time_input}; }

void RunConfig::validate(Index samples) const {
  if (intervals < 1) throw std::invalid_argument("intervals must be at least 1");
  if (intervals > samples - 1) {
    throw std::invalid_argument("intervals (" + std::to_string(intervals) + ") exceed the " +
                                std::to_string(samples - 1) + " sample gaps");
  }
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (substeps < 1) throw std::invalid_argument("substeps must be positive");
  if (!(cg_tol > 0.0)) throw std::invalid_argument("cg_tol must be positive");
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden layer widths must be positive");
  }
}

ShootingGrid make_grid(const RunConfig& cfg, const MeasurementSet& train, Index intervals) {
  return ShootingGrid::uniform(train.times, intervals, cfg.substeps);
}

ShootingVariables init_shooting_vars(const RunConfig& cfg, const ShootingGrid& grid,
                                     const MeasurementSet& train, Index param_dim) {
  const Index m = grid.intervals();
  const Index n = train.values.cols();
  ShootingVariables v;
  v.X.resize(m, n);
  for (Index k = 0; k < m; ++k) v.X.row(k) = train.values.row(grid.boundaries()[static_cast<std::size_t>(k)]);
  v.lambda = Vec::Zero(m * n);
  v.params = init_params(cfg.network(n), cfg.seed).values;
  require_length(v.params.size(), param_dim, "init_shooting_vars parameters");
  return v;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vec pack(const ShootingVariables& v) {
  Vec z(v.X.size() + v.params.size() + v.lambda.size());
  z << Eigen::Map<const Vec>(v.X.data(), v.X.size()), v.params, v.lambda;
  return z;
}

void unpack(const Vec& z, ShootingVariables& v) {
  const Index nx = v.X.size();
  const Index np = v.params.size();
  Eigen::Map<Vec>(v.X.data(), nx) = z.head(nx);
  v.params = z.segment(nx, np);
  v.lambda = z.tail(v.lambda.size());
}

double mse(const RowMatrix& a, const RowMatrix& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

MsResult train_ms(const RunConfig& cfg, const Dataset& data) {
  const auto t0 = Clock::now();
  cfg.validate(data.train.samples());
  const Index n = data.spec.state_dim;
  auto net = std::make_shared<NeuralDynamics>(cfg.network(n));
  MultipleShooting ms(net, make_grid(cfg, data.train, cfg.intervals),
                      data.train.values.row(0).transpose());
  ms.set_dense_cap(cfg.dense_cap);
  const ShootingLoss loss(ms.grid(), data.train.values);

  bool dense = false;
  switch (cfg.solver) {
    case SolverPath::Dense:
      if (ms.constraint_dim() > cfg.dense_cap) {
        throw std::invalid_argument("dense solver requested but m·n = " +
                                    std::to_string(ms.constraint_dim()) + " exceeds dense_cap " +
                                    std::to_string(cfg.dense_cap) + "; use --solver matrix-free");
      }
      dense = true;
      break;
    case SolverPath::MatrixFree: dense = false; break;
    case SolverPath::Auto:
      dense = ms.constraint_dim() <= cfg.dense_cap && ms.param_dim() <= cfg.dense_param_cap;
      break;
  }

  MsResult out;
  RunReport& rep = out.report;
  rep.method = "multiple-shooting";
  rep.config = cfg;
  rep.solver_used = dense ? "dense" : "matrix-free";
  rep.status = "epoch-budget";
  out.vars = init_shooting_vars(cfg, ms.grid(), data.train, ms.param_dim());

  LrSchedule schedule(cfg.lr);
  AdamState adam(pack(out.vars).size());
  const CgOptions cg{cfg.cg_tol, cfg.cg_max_iter};

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      const Linearization lin = ms.linearize(out.vars);
      const ConstraintResidual res = ms.residual(lin);
      const ShootingLoss::Gradients grads = loss.lagrangian_grads(lin);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.phi = grads.phi;
      rec.g_inf = res.inf_norm();
      rec.lr = schedule.step(epoch, grads.phi);
      if (cfg.early_stop && rec.phi < cfg.stop_phi && rec.g_inf < cfg.stop_g_inf) {
        rep.history.push_back(rec);
        rep.status = "converged";
        break;
      }

      CondensedStep step;
      if (dense) {
        const Matrix gx = ms.assemble_gx_dense(lin);
        const Matrix gp = ms.assemble_gp_dense(lin);
        step = ms.dense_step(gx, gp, res, grads.lx, grads.lp);
        const Vec dx = Eigen::Map<const Vec>(step.dx.data(), step.dx.size());
        rec.feasibility = (gx * dx + gp * step.dp + res.g).cwiseAbs().maxCoeff();
      } else {
        step = ms.condensed_step(lin, res, grads.lx, grads.lp, cg);
        rec.feasibility = ms.linearized_feasibility(lin, res, step);
        rec.cg_iterations = step.cg_iterations;
      }

      ShootingVariables delta = out.vars;
      delta.X = step.dx;
      delta.params = step.dp;
      delta.lambda = cfg.freeze_lambda ? Vec::Zero(step.dlambda.size()) : step.dlambda;
      Vec theta = pack(out.vars);
      adam_update(theta, -pack(delta), adam, rec.lr);
      if (!theta.allFinite()) throw NonFiniteError("Adam produced non-finite variables", epoch);
      unpack(theta, out.vars);
      rep.history.push_back(rec);
    } catch (const NonFiniteError& e) {
      rep.status = "aborted";
      rep.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }

  try {
    const Linearization lin = ms.linearize(out.vars);
    rep.final_phi = loss.total(lin);
    rep.final_g_inf = ms.residual(lin).inf_norm();
  } catch (const NonFiniteError& e) {
    rep.final_phi = std::numeric_limits<double>::quiet_NaN();
    rep.final_g_inf = std::numeric_limits<double>::quiet_NaN();
    if (rep.failure.empty()) rep.failure = e.what();
  }
  rep.metrics = evaluate(*net, out.vars.params, data, cfg.substeps);
  rep.wall_seconds = seconds_since(t0);
  return out;
}

SsResult train_ss(const RunConfig& cfg, const Dataset& data) {
  const auto t0 = Clock::now();
  cfg.validate(data.train.samples());
  const Index n = data.spec.state_dim;
  auto net = std::make_shared<NeuralDynamics>(cfg.network(n));
  MultipleShooting ms(net, make_grid(cfg, data.train, 1), data.train.values.row(0).transpose());
  const ShootingLoss loss(ms.grid(), data.train.values);

  SsResult out;
  RunReport& rep = out.report;
  rep.method = "single-shooting";
  rep.config = cfg;
  rep.solver_used = "reverse-mode";
  rep.status = "epoch-budget";
  ShootingVariables vars = init_shooting_vars(cfg, ms.grid(), data.train, ms.param_dim());
  vars.lambda.resize(0);
  out.params = vars.params;

  LrSchedule schedule(cfg.lr);
  AdamState adam(vars.params.size());
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      const Linearization lin = ms.linearize(vars);
      const ShootingLoss::Gradients grads = loss.lagrangian_grads(lin);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.phi = grads.phi;
      rec.lr = schedule.step(epoch, grads.phi);
      if (cfg.early_stop && rec.phi < cfg.stop_phi) {
        rep.history.push_back(rec);
        rep.status = "converged";
        break;
      }
      Vec p = vars.params;
      adam_update(p, grads.lp, adam, rec.lr);
      if (!p.allFinite()) throw NonFiniteError("Adam produced non-finite parameters", epoch);
      vars.params = p;
      rep.history.push_back(rec);
    } catch (const NonFiniteError& e) {
      rep.status = "diverged";
      rep.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }
  out.params = vars.params;
  try {
    rep.final_phi = loss.total(*net, vars);
  } catch (const NonFiniteError& e) {
    rep.final_phi = std::numeric_limits<double>::quiet_NaN();
    if (rep.failure.empty()) rep.failure = e.what();
  }
  rep.metrics = evaluate(*net, out.params, data, cfg.substeps);
  rep.wall_seconds = seconds_since(t0);
  return out;
}

Metrics evaluate(const Dynamics& f, const Vec& params, const Dataset& data, Index substeps) {
  Metrics m;
  const Index T = data.train.samples();
  const bool with_test = data.test_available && data.test.samples() > 0;
  const Index total = T + (with_test ? data.test.samples() : 0);
  m.times.resize(total);
  m.times.head(T) = data.train.times;
  if (with_test) m.times.tail(data.test.samples()) = data.test.times;
  if (!with_test) {
    m.test.failure = data.test_failure.empty() ? "no test data" : "no test data: " + data.test_failure;
  }

  std::vector<double> saves(m.times.data(), m.times.data() + total);
  const IntervalPlan plan(m.times[0], m.times[total - 1], (total - 1) * substeps, std::move(saves));
  const IntervalSolution sol = integrate_interval(f, data.train.values.row(0).transpose(), params, plan);
  m.prediction = sol.saved_states;
  const Index got = sol.saved_states.rows();

  auto window = [&](WindowMetrics& w, Index first, const MeasurementSet& ref) {
    const Index len = ref.samples();
    if (got < first + len) {
      w.failure = "rollout left the finite range at t = " +
                  std::to_string(plan.time_at(*sol.nonfinite_substep + 1));
      return;
    }
    const RowMatrix pred = sol.saved_states.middleRows(first, len);
    w.mse = mse(pred, ref.values);
    w.mse_original = mse(data.scaler.invert(pred), data.scaler.invert(ref.values));
  };
  window(m.train, 0, data.train);
  if (with_test) window(m.test, T, data.test);
  return m;
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["system"] = c.system;
  j["intervals"] = c.intervals;
  j["hidden"] = c.hidden;
  j["time_input"] = c.time_input;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr.initial;
  j["lr_factor"] = c.lr.factor;
  j["lr_patience"] = c.lr.patience;
  j["lr_min_improvement"] = c.lr.min_improvement;
  j["lr_floor"] = c.lr.floor;
  j["lr_regress_factor"] = c.lr.regress_factor;
  j["lr_regress_patience"] = c.lr.regress_patience;
  j["cg_tol"] = c.cg_tol;
  j["cg_max_iter"] = c.cg_max_iter;
  j["substeps"] = c.substeps;
  j["scale"] = c.scale;
  j["solver"] = to_string(c.solver);
  j["dense_cap"] = c.dense_cap;
  j["dense_param_cap"] = c.dense_param_cap;
  j["stop_phi"] = c.stop_phi;
  j["stop_g_inf"] = c.stop_g_inf;
  j["early_stop"] = c.early_stop;
  j["freeze_lambda"] = c.freeze_lambda;
  j["run_ss"] = c.run_ss;
  j["vdp_as_printed"] = c.options.vdp_as_printed;
  j["oregonator_standard"] = c.options.oregonator_standard;
  return j;
}

namespace {

nlohmann::json window_json(const WindowMetrics& w) {
  nlohmann::json j;
  j["mse"] = w.mse ? nlohmann::json(*w.mse) : nlohmann::json("-");
  j["mse_original_units"] = w.mse_original ? nlohmann::json(*w.mse_original) : nlohmann::json("-");
  if (!w.failure.empty()) j["failure"] = w.failure;
  return j;
}

nlohmann::json number_or_dash(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("-");
}

}  // namespace

nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["status"] = r.status;
  if (!r.failure.empty()) j["failure"] = r.failure;
  j["solver"] = r.solver_used;
  j["epochs_run"] = r.epochs_run();
  j["final_phi"] = number_or_dash(r.final_phi);
  j["final_g_inf"] = number_or_dash(r.final_g_inf);
  j["train"] = window_json(r.metrics.train);
  j["test"] = window_json(r.metrics.test);
  j["wall_seconds"] = r.wall_seconds;
  j["config"] = config_to_json(r.config);
  std::vector<double> phi, g, lr;
  for (const auto& e : r.history) {
    phi.push_back(e.phi);
    g.push_back(e.g_inf);
    lr.push_back(e.lr);
  }
  j["history"] = {{"phi", phi}, {"g_inf", g}, {"lr", lr}};
  return j;
}

void write_history_csv(const RunReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,phi,g_inf,lr\n";
  out.precision(17);
  for (const auto& e : r.history) out << e.epoch << "," << e.phi << "," << e.g_inf << "," << e.lr << "\n";
}

}  // namespace msnode
