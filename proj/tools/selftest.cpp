#include "selftest.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>

#include "msnode/loss.hpp"
#include "msnode/network.hpp"
#include "msnode/trainer.hpp"

namespace msnode::cli {

namespace {

struct Instance {
  Index m = 0, n = 0;
  std::vector<Index> hidden;
  std::shared_ptr<NeuralDynamics> net;
  std::unique_ptr<MultipleShooting> ms;
  RowMatrix data;
  ShootingVariables vars;

  std::string label() const {
    std::string h;
    for (Index w : hidden) h += (h.empty() ? "" : ",") + std::to_string(w);
    return "m=" + std::to_string(m) + ", n=" + std::to_string(n) + ", hidden=[" + h + "]";
  }
};

Vec uniform(Index size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(size);
  for (Index i = 0; i < size; ++i) v[i] = u(rng);
  return v;
}

Instance make_instance(Index m, Index n, std::vector<Index> hidden, std::uint64_t seed, Mutation mut) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.m = m;
  in.n = n;
  in.hidden = hidden;
  in.net = std::make_shared<NeuralDynamics>(NetworkSpec{n, std::move(hidden), false});
  const Index per = 1 + static_cast<Index>(seed % 3);
  const Index T = m * per + 1;
  Vec times(T);
  for (Index j = 0; j < T; ++j) times[j] = 0.1 * static_cast<double>(j);
  in.data.resize(T, n);
  for (Index j = 0; j < T; ++j) in.data.row(j) = uniform(n, rng).transpose();
  in.ms = std::make_unique<MultipleShooting>(in.net, ShootingGrid::uniform(times, m, 1 + static_cast<Index>(seed % 4)),
                                             in.data.row(0).transpose());
  in.ms->set_mutation(mut);
  in.vars.X.resize(m, n);
  for (Index k = 0; k < m; ++k) in.vars.X.row(k) = uniform(n, rng).transpose();
  in.vars.params = init_params(in.net->spec(), seed).values;
  in.vars.lambda = uniform(m * n, rng);
  return in;
}

// Ordered smallest first.
std::vector<Instance> instances(Mutation mut) {
  std::vector<Instance> out;
  std::uint64_t seed = 1;
  for (Index m : {2, 3, 5}) {
    for (Index n : {1, 2, 3}) {
      out.push_back(make_instance(m, n, {4}, seed++, mut));
      out.push_back(make_instance(m, n, {8, 5}, seed++, mut));
    }
  }
  return out;
}

double rel_err(const Matrix& a, const Matrix& b) {
  const double s = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return s == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / s;
}

// G_x and G_p interval by interval from the single-interval sensitivities.
std::pair<Matrix, Matrix> reference_jacobians(const Instance& in) {
  const Index m = in.m, n = in.n, P = in.ms->param_dim();
  Matrix gx = Matrix::Identity(m * n, m * n);
  Matrix gp = Matrix::Zero(m * n, P);
  for (Index k = 0; k + 1 < m; ++k) {
    const Vec x0 = in.vars.X.row(k).transpose();
    const auto& plan = in.ms->grid().plan(k);
    for (Index j = 0; j < n; ++j) {
      Vec e = Vec::Zero(n);
      e[j] = 1.0;
      gx.block((k + 1) * n, k * n + j, n, 1) = -interval_jvp_x(*in.net, x0, plan, in.vars.params, e);
      gp.row((k + 1) * n + j) = -interval_vjp_p(*in.net, x0, plan, in.vars.params, e).transpose();
    }
  }
  return {gx, gp};
}

// A suite returns the first failure message, if any.
using Suite = std::function<std::optional<std::string>(std::vector<Instance>&)>;

std::optional<std::string> check(bool ok, const Instance& in, const std::string& what, double err,
                                 double tol) {
  if (ok) return std::nullopt;
  char buf[96];
  std::snprintf(buf, sizeof buf, " (error %.3g > %.1g)", err, tol);
  return what + " fails at " + in.label() + buf;
}

std::optional<std::string> suite_sensitivities(std::vector<Instance>& all) {
  std::mt19937_64 rng(5);
  const double h = 1e-6, tol = 1e-5;
  for (auto& in : all) {
    if (in.m < 2) continue;
    const auto& plan = in.ms->grid().plan(0);
    const Vec x0 = in.vars.X.row(0).transpose();
    const Vec& p = in.vars.params;
    const Vec vx = uniform(in.n, rng), w = uniform(in.n, rng), vp = uniform(p.size(), rng);
    auto end = [&](const Vec& x, const Vec& q) { return integrate_interval(*in.net, x, q, plan).end_state; };
    const Vec fx = (end(x0 + h * vx, p) - end(x0 - h * vx, p)) / (2 * h);
    const Vec fp = (end(x0, p + h * vp) - end(x0, p - h * vp)) / (2 * h);
    auto scalar = [](double a, double b) { return std::abs(a - b) / std::max(1e-3, std::max(std::abs(a), std::abs(b))); };
    double e = rel_err(interval_jvp_x(*in.net, x0, plan, p, vx), fx);
    if (auto f = check(e <= tol, in, "interval_jvp_x", e, tol)) return f;
    e = rel_err(interval_jvp_p(*in.net, x0, plan, p, vp), fp);
    if (auto f = check(e <= tol, in, "interval_jvp_p", e, tol)) return f;
    e = scalar(interval_vjp_x(*in.net, x0, plan, p, w).dot(vx), w.dot(fx));
    if (auto f = check(e <= tol, in, "interval_vjp_x", e, tol)) return f;
    e = scalar(interval_vjp_p(*in.net, x0, plan, p, w).dot(vp), w.dot(fp));
    if (auto f = check(e <= tol, in, "interval_vjp_p", e, tol)) return f;

    const ShootingLoss loss(in.ms->grid(), in.data);
    const auto g = loss.lagrangian_grads(in.ms->linearize(in.vars));
    auto lag = [&](const ShootingVariables& v) { return loss.total(*in.net, v) + v.lambda.dot(in.ms->residual(v).g); };
    const Vec dX = uniform(in.vars.X.size(), rng);
    ShootingVariables a = in.vars, b = in.vars;
    Eigen::Map<Vec>(a.X.data(), a.X.size()) += h * dX;
    Eigen::Map<Vec>(b.X.data(), b.X.size()) -= h * dX;
    e = scalar(g.lx.dot(dX), (lag(a) - lag(b)) / (2 * h));
    if (auto f = check(e <= tol, in, "Lagrangian gradient in x", e, tol)) return f;
    a = in.vars;
    b = in.vars;
    a.params += h * vp;
    b.params -= h * vp;
    e = scalar(g.lp.dot(vp), (lag(a) - lag(b)) / (2 * h));
    if (auto f = check(e <= tol, in, "Lagrangian gradient in p", e, tol)) return f;
  }
  return std::nullopt;
}

std::optional<std::string> suite_operators(std::vector<Instance>& all) {
  std::mt19937_64 rng(6);
  const double tol = 1e-10;
  for (auto& in : all) {
    const auto [gx, gp] = reference_jacobians(in);
    const auto lin = in.ms->linearize(in.vars);
    const Vec u = uniform(in.m * in.n, rng), v = uniform(in.ms->param_dim(), rng);
    double e = rel_err(lin.gx_v(u), gx * u);
    if (auto f = check(e <= tol, in, "gx_v", e, tol)) return f;
    e = rel_err(lin.vt_gx(u), gx.transpose() * u);
    if (auto f = check(e <= tol, in, "vt_gx", e, tol)) return f;
    e = rel_err(lin.gp_v(v), gp * v);
    if (auto f = check(e <= tol, in, "gp_v", e, tol)) return f;
    e = rel_err(lin.vt_gp(u), gp.transpose() * u);
    if (auto f = check(e <= tol, in, "vt_gp", e, tol)) return f;
    e = rel_err(in.ms->assemble_gx_dense(lin), gx);
    if (auto f = check(e <= tol, in, "assemble_gx_dense", e, tol)) return f;
    e = rel_err(in.ms->assemble_gp_dense(lin), gp);
    if (auto f = check(e <= tol, in, "assemble_gp_dense", e, tol)) return f;
  }
  return std::nullopt;
}

std::optional<std::string> suite_transpose(std::vector<Instance>& all) {
  std::mt19937_64 rng(7);
  const double tol = 1e-12;
  for (auto& in : all) {
    const auto lin = in.ms->linearize(in.vars);
    const Vec u = uniform(in.m * in.n, rng), w = uniform(in.m * in.n, rng);
    const Vec v = uniform(in.ms->param_dim(), rng);
    const double a = w.dot(lin.gx_v(u)), b = lin.vt_gx(w).dot(u);
    double e = std::abs(a - b) / std::max(1.0, std::abs(a));
    if (auto f = check(e <= tol, in, "gx_v / vt_gx transpose identity", e, tol)) return f;
    const double c = w.dot(lin.gp_v(v)), d = lin.vt_gp(w).dot(v);
    e = std::abs(c - d) / std::max(1.0, std::abs(c));
    if (auto f = check(e <= tol, in, "gp_v / vt_gp transpose identity", e, tol)) return f;
  }
  return std::nullopt;
}

std::optional<std::string> suite_condensing(std::vector<Instance>& all) {
  const double tol = 1e-8;
  for (auto& in : all) {
    const ShootingLoss loss(in.ms->grid(), in.data);
    const auto lin = in.ms->linearize(in.vars);
    const auto res = in.ms->residual(lin);
    const auto g = loss.lagrangian_grads(lin);
    const auto [gx, gp] = reference_jacobians(in);
    const auto cs = in.ms->condensed_step(lin, res, g.lx, g.lp, {tol, 0});
    const auto ds = in.ms->direct_step(gx, gp, res, g.lx, g.lp);
    const double e = std::max({rel_err(cs.dx, ds.dx), rel_err(cs.dp, ds.dp), rel_err(cs.dlambda, ds.dlambda)});
    if (auto f = check(e <= tol, in, "condensed_step against the direct KKT solve", e, tol)) return f;
    const double feas = in.ms->linearized_feasibility(lin, res, cs);
    const double lim = 10.0 * tol * res.inf_norm();
    if (auto f = check(feas <= lim, in, "linearized feasibility of condensed_step", feas, lim)) return f;
  }
  return std::nullopt;
}

std::optional<std::string> suite_assembly(std::vector<Instance>& all) {
  for (auto& in : all) {
    const auto lin = in.ms->linearize(in.vars);
    in.ms->stats().reset();
    const Matrix fast = in.ms->assemble_gx_dense(lin);
    const Index jvps = in.ms->stats().stacked_jvp_x;
    if (jvps != in.n) {
      return "assemble_gx_dense used " + std::to_string(jvps) + " stacked JVPs instead of n at " + in.label();
    }
    const double e = (fast - in.ms->assemble_gx_naive(lin)).cwiseAbs().maxCoeff();
    if (auto f = check(e <= 1e-12, in, "assemble_gx_dense against column-by-column assembly", e, 1e-12)) return f;
  }
  return std::nullopt;
}

// Dense and matrix-free training on a small problem end at the same loss.
std::optional<std::string> suite_solver_paths(std::vector<Instance>&) {
  auto spec = system_spec("lotka_volterra");
  spec.t_end = 4.0;
  const auto data = generate_data(spec, 20);
  RunConfig cfg;
  cfg.intervals = 4;
  cfg.hidden = {6};
  cfg.epochs = 20;
  cfg.substeps = 2;
  cfg.cg_tol = 1e-12;
  cfg.early_stop = false;
  cfg.solver = SolverPath::Dense;
  const double a = train_ms(cfg, data).report.final_phi;
  cfg.solver = SolverPath::MatrixFree;
  const double b = train_ms(cfg, data).report.final_phi;
  const double e = std::abs(a - b) / std::abs(a);
  if (e <= 1e-6) return std::nullopt;
  char buf[128];
  std::snprintf(buf, sizeof buf, "dense and matrix-free final losses differ by %.3g relative (> 1e-6)", e);
  return std::string(buf);
}

}  // namespace

Mutation mutation_from_string(const std::string& s) {
  if (s == "none") return Mutation::None;
  if (s == "gp_v") return Mutation::FlipGpVSign;
  if (s == "vt_gp") return Mutation::FlipVtGpSign;
  if (s == "gx_identity") return Mutation::DropGxIdentity;
  throw std::invalid_argument("unknown mutation '" + s + "' (valid: none, gp_v, vt_gp, gx_identity)");
}

bool run_selftest(Mutation mutation, bool verbose) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto all = instances(mutation);
  const std::pair<const char*, Suite> suites[] = {
      {"sensitivities", suite_sensitivities}, {"operators", suite_operators},
      {"transpose", suite_transpose},         {"condensing", suite_condensing},
      {"assembly", suite_assembly},           {"solver-paths", suite_solver_paths},
  };
  bool ok = true;
  for (const auto& [name, run] : suites) {
    const auto s0 = Clock::now();
    std::optional<std::string> failure;
    try {
      failure = run(all);
    } catch (const std::exception& e) {
      failure = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - s0).count();
    if (failure) {
      ok = false;
      std::printf("%-14s FAIL  %7.2f s  %s\n", name, secs, failure->c_str());
    } else {
      std::printf("%-14s pass  %7.2f s\n", name, secs);
    }
    std::fflush(stdout);
  }
  const double total = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("selftest %s in %.2f s (%zu instances)\n", ok ? "passed" : "FAILED", total, all.size());
  if (verbose) std::printf("instances span m in {2,3,5}, n in {1,2,3}, hidden [4] and [8,5]\n");
  return ok;
}

}  // namespace msnode::cli
