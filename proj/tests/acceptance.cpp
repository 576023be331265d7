// Acceptance checks: one PASS/FAIL line per criterion (criterion 7 is
// recorded, not gated). Exit status is nonzero if any gated criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "msnode/trainer.hpp"
#include "support.hpp"

using namespace msnode;
using msnode::testing::fd_jacobian;
using msnode::testing::make_problem;
using msnode::testing::Problem;
using msnode::testing::random_vec;
using msnode::testing::rel_err;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 50 random instances: m in {2,3,5}, n in {1,2,3}, one or two hidden layers of width <= 8.
std::vector<Problem> instances() {
  std::vector<Problem> out;
  std::mt19937_64 rng(2024);
  const Index ms[] = {2, 3, 5};
  for (int i = 0; i < 50; ++i) {
    const Index m = ms[rng() % 3];
    const Index n = 1 + static_cast<Index>(rng() % 3);
    std::vector<Index> hidden{1 + static_cast<Index>(rng() % 8)};
    if (rng() % 2) hidden.push_back(1 + static_cast<Index>(rng() % 8));
    out.push_back(make_problem(m, n, hidden, 100 + static_cast<std::uint64_t>(i),
                               1 + static_cast<Index>(rng() % 3), 1 + static_cast<Index>(rng() % 4)));
  }
  return out;
}

void operators(std::vector<Problem>& probs) {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_t = 0.0;
  std::mt19937_64 rng(7);
  for (auto& pr : probs) {
    const auto& ms = *pr.ms;
    const auto lin = ms.linearize(pr.vars);
    const Matrix gx = ms.assemble_gx_dense(lin);
    const Matrix gp = ms.assemble_gp_dense(lin);
    const Vec u = random_vec(ms.constraint_dim(), rng);
    const Vec w = random_vec(ms.constraint_dim(), rng);
    const Vec v = random_vec(ms.param_dim(), rng);
    worst_op = std::max({worst_op, rel_err(lin.gx_v(u), gx * u), rel_err(lin.vt_gx(w), gx.transpose() * w),
                         rel_err(lin.gp_v(v), gp * v), rel_err(lin.vt_gp(w), gp.transpose() * w)});
    const double a = w.dot(lin.gx_v(u)), b = lin.vt_gx(w).dot(u);
    const double c = w.dot(lin.gp_v(v)), d = lin.vt_gp(w).dot(v);
    worst_t = std::max({worst_t, std::abs(a - b) / std::max(1.0, std::abs(a)),
                        std::abs(c - d) / std::max(1.0, std::abs(c))});
  }
  const double secs = since(t0);
  report(1, "operator correctness", worst_op <= 1e-10 && worst_t <= 1e-12 && secs < 30.0,
         "max rel err " + fmt("%.2e", worst_op) + " (<=1e-10), transpose " + fmt("%.2e", worst_t) +
             " (<=1e-12), " + fmt("%.2f", secs) + " s (<30)");
}

void condensing(std::vector<Problem>& probs) {
  double worst = 0.0, worst_feas = 0.0;
  const double tol = 1e-8;
  for (auto& pr : probs) {
    const auto& ms = *pr.ms;
    const ShootingLoss loss(ms.grid(), pr.data);
    const auto lin = ms.linearize(pr.vars);
    const auto res = ms.residual(lin);
    const auto g = loss.lagrangian_grads(lin);
    const auto cs = ms.condensed_step(lin, res, g.lx, g.lp, {tol, 0});
    const auto ds = ms.direct_step(ms.assemble_gx_dense(lin), ms.assemble_gp_dense(lin), res, g.lx, g.lp);
    worst = std::max({worst, rel_err(cs.dx, ds.dx), rel_err(cs.dp, ds.dp), rel_err(cs.dlambda, ds.dlambda)});
    worst_feas = std::max(worst_feas, ms.linearized_feasibility(lin, res, cs) / (tol * res.inf_norm()));
  }
  report(2, "condensing correctness", worst <= 1e-8 && worst_feas <= 10.0,
         "condensed vs direct " + fmt("%.2e", worst) + " (<=1e-8), feasibility " + fmt("%.2f", worst_feas) +
             "·cg_tol·|G| (<=10)");
}

void sensitivities() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-3, std::max(std::abs(a), std::abs(b))); };
  for (int i = 0; i < 6; ++i) {
    auto pr = make_problem(3, 1 + i % 3, {5, 4}, 300 + static_cast<std::uint64_t>(i), 2, 3);
    const auto& f = *pr.net;
    const auto& plan = pr.ms->grid().plan(1);
    const Vec x0 = pr.vars.X.row(1).transpose();
    const Vec& p = pr.vars.params;
    const Index n = x0.size();
    const Vec vx = random_vec(n, rng), w = random_vec(n, rng), vp = random_vec(p.size(), rng);
    auto end = [&](const Vec& x, const Vec& q) { return integrate_interval(f, x, q, plan).end_state; };
    const double h = 1e-6;
    const Vec fx = (end(x0 + h * vx, p) - end(x0 - h * vx, p)) / (2 * h);
    const Vec fp = (end(x0, p + h * vp) - end(x0, p - h * vp)) / (2 * h);
    worst = std::max(worst, rel_err(interval_jvp_x(f, x0, plan, p, vx), fx));
    worst = std::max(worst, rel_err(interval_jvp_p(f, x0, plan, p, vp), fp));
    worst = std::max(worst, rel(interval_vjp_x(f, x0, plan, p, w).dot(vx), w.dot(fx)));
    worst = std::max(worst, rel(interval_vjp_p(f, x0, plan, p, w).dot(vp), w.dot(fp)));

    const ShootingLoss loss(pr.ms->grid(), pr.data);
    const auto g = loss.lagrangian_grads(pr.ms->linearize(pr.vars));
    auto lag = [&](const ShootingVariables& v) { return loss.total(f, v) + v.lambda.dot(pr.ms->residual(v).g); };
    const Vec dX = random_vec(pr.vars.X.size(), rng);
    ShootingVariables a = pr.vars, b = pr.vars;
    Eigen::Map<Vec>(a.X.data(), a.X.size()) += h * dX;
    Eigen::Map<Vec>(b.X.data(), b.X.size()) -= h * dX;
    worst = std::max(worst, rel(g.lx.dot(dX), (lag(a) - lag(b)) / (2 * h)));
    a = pr.vars;
    b = pr.vars;
    a.params += h * vp;
    b.params -= h * vp;
    worst = std::max(worst, rel(g.lp.dot(vp), (lag(a) - lag(b)) / (2 * h)));
  }
  report(3, "sensitivity correctness", worst <= 1e-5,
         "max rel err vs central differences " + fmt("%.2e", worst) + " (<=1e-5)");
}

void sparsity() {
  bool counts = true;
  double worst = 0.0;
  for (Index n : {1, 2, 3}) {
    auto pr = make_problem(5, n, {6}, 40 + static_cast<std::uint64_t>(n));
    const auto lin = pr.ms->linearize(pr.vars);
    pr.ms->stats().reset();
    const Matrix fast = pr.ms->assemble_gx_dense(lin);
    counts = counts && pr.ms->stats().stacked_jvp_x == n;
    const Matrix naive = pr.ms->assemble_gx_naive(lin);
    worst = std::max(worst, (fast - naive).cwiseAbs().maxCoeff());
  }
  report(4, "sparsity-exploiting assembly", counts && worst <= 1e-12,
         std::string(counts ? "n" : "not n") + " stacked JVPs for n = 1,2,3; max diff vs naive " +
             fmt("%.1e", worst) + " (<=1e-12)");
}

Dataset dataset_for(const RunConfig& cfg) {
  auto spec = system_spec(cfg.system, cfg.options);
  spec.scaled = cfg.scale;
  return scale(generate_data(spec));
}

void lotka_volterra() {
  auto cfg = RunConfig::for_system("lotka_volterra");
  cfg.epochs = 1000;
  const auto data = dataset_for(cfg);
  const auto r = train_ms(cfg, data).report;
  const auto& m = r.metrics;
  const double train = m.train.mse.value_or(INFINITY);
  const double test = m.test.mse.value_or(INFINITY);
  const bool pass = r.ok() && train <= 5e-4 && r.final_g_inf <= 1e-2 && r.wall_seconds <= 600.0 &&
                    test <= 10.0 * train;
  report(5, "Lotka-Volterra reproduction", pass,
         "train MSE " + fmt("%.2e", train) + " (<=5e-4), |G|inf " + fmt("%.2e", r.final_g_inf) +
             " (<=1e-2), test MSE " + fmt("%.2e", test) + " (<=10x train), " +
             std::to_string(r.epochs_run()) + " epochs, " + fmt("%.0f", r.wall_seconds) + " s (<=600), " +
             r.status);
}

void fitzhugh_nagumo() {
  auto cfg = RunConfig::for_system("fitzhugh_nagumo");
  cfg.epochs = 1500;
  const auto r = train_ms(cfg, dataset_for(cfg)).report;
  const double train = r.metrics.train.mse.value_or(INFINITY);
  report(6, "FitzHugh-Nagumo reproduction", r.ok() && train <= 5e-4,
         "train MSE " + fmt("%.2e", train) + " (<=5e-4, scaled units), |G|inf " + fmt("%.2e", r.final_g_inf) +
             ", " + std::to_string(r.epochs_run()) + " epochs, " + fmt("%.0f", r.wall_seconds) + " s, " +
             r.status);
}

void baseline(Index epochs, double lr) {
  std::string detail;
  for (const char* name : {"van_der_pol", "km"}) {
    auto cfg = RunConfig::for_system(name);
    cfg.epochs = epochs;
    cfg.lr.initial = lr;
    const auto data = dataset_for(cfg);
    const auto ms = train_ms(cfg, data).report;
    const auto ss = train_ss(cfg, data).report;
    const double a = ms.metrics.train.mse.value_or(INFINITY);
    const double b = ss.metrics.train.mse.value_or(INFINITY);
    const bool contrast = !ss.ok() || !std::isfinite(b) || b >= 10.0 * a;
    detail += std::string(detail.empty() ? "" : "; ") + name + ": MS " + fmt("%.2e", a) + " (" + ms.status +
              "), SS " + fmt("%.2e", b) + " (" + ss.status + ") -> " + (contrast ? "contrast" : "no contrast");
  }
  std::printf("[RECORDED] 7 single-shooting baseline contrast at %lld epochs, lr %g: %s\n",
              static_cast<long long>(epochs), lr, detail.c_str());
  std::fflush(stdout);
}

void degenerate() {
  auto cfg = RunConfig::for_system("lotka_volterra");
  cfg.intervals = 1;
  cfg.epochs = 50;
  cfg.freeze_lambda = true;
  cfg.early_stop = false;
  const auto data = dataset_for(cfg);
  const auto ms = train_ms(cfg, data).report;
  const auto ss = train_ss(cfg, data).report;
  double worst = ms.epochs_run() == 50 && ss.epochs_run() == 50 ? 0.0 : INFINITY;
  for (Index e = 0; e < std::min(ms.epochs_run(), ss.epochs_run()); ++e) {
    const double a = ms.history[e].phi, b = ss.history[e].phi;
    worst = std::max(worst, std::abs(a - b) / std::max(1e-300, std::abs(b)));
  }
  report(8, "degenerate equivalence", worst <= 1e-10,
         "max rel loss difference over 50 epochs " + fmt("%.2e", worst) + " (<=1e-10)");
}

void ground_truth() {
  double worst = 0.0;
  std::string where;
  for (const auto& name : system_names()) {
    const auto spec = system_spec(name);
    if (spec.delayed()) continue;
    const auto data = scale(generate_data(spec));
    const auto f = scaled_dynamics(true_dynamics(spec), data.scaler);
    const auto m = evaluate(*f, Vec(0), data, spec.truth_substeps);
    for (const auto* w : {&m.train, &m.test}) {
      if (w == &m.test && !data.test_available) continue;
      const double e = w->mse.value_or(INFINITY);
      if (e >= worst) {
        worst = e;
        where = name;
      }
    }
  }
  report(9, "ground-truth fidelity", worst < 1e-8, "largest MSE " + fmt("%.2e", worst) + " (" + where + ", <1e-8)");
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: epoch budget for the recorded baseline contrast.
  const Index baseline_epochs = argc > 1 ? std::atol(argv[1]) : 300;
  auto probs = instances();
  operators(probs);
  condensing(probs);
  sensitivities();
  sparsity();
  lotka_volterra();
  fitzhugh_nagumo();
  baseline(baseline_epochs, 0.01);
  baseline(baseline_epochs, 0.002);
  degenerate();
  ground_truth();
  std::printf("%s: %d gated criteria failed\n", failures ? "FAILED" : "PASSED", failures);
  return failures ? 1 : 0;
}
