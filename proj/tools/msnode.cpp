// Command-line front end: generate, train, evaluate, compare, selftest.
//
// Exit codes: 0 success, 1 property failure, 2 usage error, 3 numerical abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msnode/trainer.hpp"
#include "run_config.hpp"
#include "selftest.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace msnode;
using namespace msnode::cli;

namespace {

constexpr int kOk = 0, kPropertyFailure = 1, kUsage = 2, kAbort = 3;

struct RunOptions {
  std::string config_file;
  std::string system;
  std::string intervals, hidden, epochs, lr, seed, solver, scale, substeps;
  bool vdp_as_printed = false;
  bool oregonator_standard = false;
  std::vector<std::string> overrides;
  std::string out;
  std::string data;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_system) {
  cmd->add_option("--config", o.config_file, "key=value config file");
  if (with_system) cmd->add_option("--system", o.system, "system name");
  cmd->add_option("--intervals", o.intervals, "shooting intervals");
  cmd->add_option("--hidden", o.hidden, "hidden widths, comma separated");
  cmd->add_option("--epochs", o.epochs, "epoch budget");
  cmd->add_option("--lr", o.lr, "initial learning rate");
  cmd->add_option("--seed", o.seed, "initialization seed");
  cmd->add_option("--solver", o.solver, "auto, dense or matrix-free");
  cmd->add_option("--scale", o.scale, "standardize the data (true/false)");
  cmd->add_option("--substeps", o.substeps, "RK4 substeps per sample");
  cmd->add_flag("--vdp-as-printed", o.vdp_as_printed, "Van der Pol with dx/dt = x");
  cmd->add_flag("--oregonator-standard", o.oregonator_standard, "Oregonator with (x-q)/(x+q)");
  cmd->add_option("overrides", o.overrides, "key=value overrides");
}

KeyValues collect(const RunOptions& o, const std::string& system_override = "") {
  KeyValues kv;
  if (!o.config_file.empty()) kv = read_config_file(o.config_file);
  auto put = [&](const char* k, const std::string& v) {
    if (!v.empty()) kv.emplace_back(k, v);
  };
  put("system", o.system);
  put("intervals", o.intervals);
  put("hidden", o.hidden);
  put("epochs", o.epochs);
  put("lr", o.lr);
  put("seed", o.seed);
  put("solver", o.solver);
  put("scale", o.scale);
  put("substeps", o.substeps);
  if (o.vdp_as_printed) kv.emplace_back("vdp_as_printed", "true");
  if (o.oregonator_standard) kv.emplace_back("oregonator_standard", "true");
  for (const auto& s : o.overrides) kv.push_back(split_assignment(s));
  put("system", system_override);
  return kv;
}

Dataset dataset_for(const RunConfig& cfg, const std::string& data_path) {
  Dataset raw;
  if (data_path.empty()) {
    raw = generate_data(system_spec(cfg.system, cfg.options));
  } else {
    raw = load_dataset(data_path);
    if (raw.spec.name != cfg.system) {
      throw UsageError("dataset " + data_path + " holds " + raw.spec.name + ", config asks for " + cfg.system);
    }
    if (raw.spec.scaled) {
      raw.train.values = raw.scaler.invert(raw.train.values);
      if (raw.test.samples() > 0) raw.test.values = raw.scaler.invert(raw.test.values);
      raw.scaler = Scaler::identity(raw.spec.state_dim);
    }
  }
  raw.spec.scaled = cfg.scale;
  return scale(raw);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

nlohmann::json metrics_line(const RunReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return "-";
  };
  return {{"train_mse", opt(r.metrics.train.mse)}, {"test_mse", opt(r.metrics.test.mse)}};
}

std::string mse_text(const WindowMetrics& w) {
  if (!w.mse) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", *w.mse);
  return buf;
}

struct TrainOutcome {
  RunReport ms;
  std::optional<RunReport> ss;
};

TrainOutcome train_and_write(const RunConfig& cfg, const Dataset& data, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "config.txt", config_echo(cfg));
  std::printf("%s: m=%lld, P=%lld, epochs=%lld\n", cfg.system.c_str(), static_cast<long long>(cfg.intervals),
              static_cast<long long>(NeuralDynamics(cfg.network(data.spec.state_dim)).param_dim()),
              static_cast<long long>(cfg.epochs));
  std::fflush(stdout);

  TrainOutcome o;
  const auto ms = train_ms(cfg, data);
  o.ms = ms.report;
  write_history_csv(ms.report, out / "history.csv");
  save_checkpoint(out / "params.json", cfg.network(data.spec.state_dim), ms.vars.params);
  std::optional<SsResult> ss;
  if (cfg.run_ss) {
    ss = train_ss(cfg, data);
    o.ss = ss->report;
    write_history_csv(ss->report, out / "ss_history.csv");
    save_checkpoint(out / "ss_params.json", cfg.network(data.spec.state_dim), ss->params);
  }

  nlohmann::json j;
  j["multiple_shooting"] = report_to_json(ms.report);
  j["single_shooting"] = ss ? report_to_json(ss->report) : nlohmann::json(nullptr);
  j["dataset"] = {{"spec", spec_to_json(data.spec)},
                  {"train_samples", data.train.samples()},
                  {"test_samples", data.test.samples()},
                  {"test_available", data.test_available},
                  {"test_failure", data.test_failure}};
  write_text(out / "report.json", j.dump(2) + "\n");

  const auto& pm = ms.report.metrics;
  for (Index i = 0; i < data.spec.state_dim; ++i) {
    StatePlot p;
    p.title = data.spec.title + ", state " + std::to_string(i + 1) + (data.spec.scaled ? " (scaled)" : "");
    p.times = pm.times;
    p.measured.resize(pm.times.size());
    p.measured.head(data.train.samples()) = data.train.values.col(i);
    if (pm.times.size() > data.train.samples()) p.measured.tail(data.test.samples()) = data.test.values.col(i);
    p.ms = Vec(pm.prediction.col(i));
    if (ss) p.ss = Vec(ss->report.metrics.prediction.col(i));
    p.divider = data.train.times[data.train.samples() - 1];
    write_svg(p, out / ("state_" + std::to_string(i + 1) + ".svg"));
  }

  std::printf("  MS %-12s %4lld epochs  phi %.3e  |G|inf %.3e  train %s  test %s  %.1f s\n",
              ms.report.status.c_str(), static_cast<long long>(ms.report.epochs_run()), ms.report.final_phi,
              ms.report.final_g_inf, mse_text(pm.train).c_str(), mse_text(pm.test).c_str(),
              ms.report.wall_seconds);
  if (ss) {
    std::printf("  SS %-12s %4lld epochs  phi %.3e                    train %s  test %s  %.1f s\n",
                ss->report.status.c_str(), static_cast<long long>(ss->report.epochs_run()), ss->report.final_phi,
                mse_text(ss->report.metrics.train).c_str(), mse_text(ss->report.metrics.test).c_str(),
                ss->report.wall_seconds);
  }
  if (!ms.report.failure.empty()) std::printf("  MS failure: %s\n", ms.report.failure.c_str());
  std::printf("  wrote %s\n", out.string().c_str());
  return o;
}

int cmd_generate(const std::string& system, const std::string& out, long substeps, bool vdp, bool oreg) {
  if (!is_system(system)) {
    std::string valid;
    for (const auto& n : system_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw UsageError("unknown system '" + system + "' (valid: " + valid + ")");
  }
  const auto spec = system_spec(system, {vdp, oreg});
  const auto data = scale(generate_data(spec, substeps));
  fs::create_directories(out);
  save_dataset(data, out);
  std::printf("%s: %lld train + %lld test samples -> %s\n", system.c_str(),
              static_cast<long long>(data.train.samples()), static_cast<long long>(data.test.samples()),
              (fs::path(out) / (system + ".csv")).string().c_str());
  if (!data.test_available) std::printf("  test window unavailable: %s\n", data.test_failure.c_str());
  return kOk;
}

int cmd_train(const RunOptions& o) {
  const RunConfig cfg = build_config(collect(o));
  const Dataset data = dataset_for(cfg, o.data);
  cfg.validate(data.train.samples());
  const fs::path out = o.out.empty() ? fs::path("runs") / cfg.system : fs::path(o.out);
  const auto r = train_and_write(cfg, data, out);
  return r.ms.status == "aborted" ? kAbort : kOk;
}

int cmd_evaluate(const std::string& run_dir, const std::string& system, bool truth) {
  if (truth) {
    if (!is_system(system)) throw UsageError("--true-dynamics needs a known --system");
    const auto spec = system_spec(system);
    if (spec.delayed()) throw UsageError(system + " is a delay system; its right-hand side needs a history");
    const auto data = scale(generate_data(spec));
    const auto f = scaled_dynamics(true_dynamics(spec), data.scaler);
    const auto m = evaluate(*f, Vec(0), data, spec.truth_substeps);
    std::printf("%s true dynamics: train %s  test %s\n", system.c_str(), mse_text(m.train).c_str(),
                mse_text(m.test).c_str());
    return kOk;
  }
  if (run_dir.empty()) throw UsageError("evaluate needs --run DIR or --true-dynamics");
  const fs::path dir(run_dir);
  const RunConfig cfg = build_config(read_config_file(dir / "config.txt"));
  const Dataset data = dataset_for(cfg, "");
  nlohmann::json j;
  for (const char* which : {"params.json", "ss_params.json"}) {
    if (!fs::exists(dir / which)) continue;
    const auto [spec, values] = load_checkpoint(dir / which);
    const NeuralDynamics net(spec);
    const auto m = evaluate(net, values, data, cfg.substeps);
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
      if (v) return *v;
      return "-";
    };
    j[which] = {{"train_mse", opt(m.train.mse)},
                {"test_mse", opt(m.test.mse)},
                {"train_mse_original", opt(m.train.mse_original)},
                {"test_mse_original", opt(m.test.mse_original)},
                {"train_failure", m.train.failure},
                {"test_failure", m.test.failure}};
    std::printf("%-15s train %s  test %s\n", which, mse_text(m.train).c_str(), mse_text(m.test).c_str());
  }
  if (j.empty()) throw UsageError("no params.json in " + run_dir);
  write_text(dir / "evaluation.json", j.dump(2) + "\n");
  return kOk;
}

int cmd_compare(const RunOptions& o, const std::string& systems_arg) {
  std::vector<std::string> systems;
  if (systems_arg == "all") {
    systems = system_names();
  } else {
    std::stringstream ss(systems_arg);
    for (std::string s; std::getline(ss, s, ',');) systems.push_back(s);
  }
  if (systems.empty()) throw UsageError("compare needs --systems");
  std::vector<RunConfig> cfgs;
  for (const auto& s : systems) cfgs.push_back(build_config(collect(o, s)));
  const fs::path out = o.out.empty() ? fs::path("runs") / "compare" : fs::path(o.out);
  nlohmann::json rows = nlohmann::json::array();
  bool aborted = false;
  for (auto cfg : cfgs) {
    cfg.run_ss = true;
    const Dataset data = dataset_for(cfg, "");
    cfg.validate(data.train.samples());
    const auto r = train_and_write(cfg, data, out / cfg.system);
    aborted = aborted || r.ms.status == "aborted";
    const auto& ref = data.spec.reference;
    rows.push_back({{"system", cfg.system},
                    {"epochs", r.ms.epochs_run()},
                    {"ms", metrics_line(r.ms)},
                    {"ms_g_inf", r.ms.final_g_inf},
                    {"ms_status", r.ms.status},
                    {"ss", metrics_line(*r.ss)},
                    {"ss_status", r.ss->status},
                    {"reference_e-4", {{"epochs", ref.epochs},
                                       {"train", ref.train_loss},
                                       {"g_inf", ref.g_inf},
                                       {"test", ref.test_loss ? nlohmann::json(*ref.test_loss) : "-"}}}});
  }
  fs::create_directories(out);
  write_text(out / "compare.json", rows.dump(2) + "\n");
  std::printf("\n%-16s %6s %11s %11s %11s %11s %11s | %9s %9s %9s\n", "system", "epochs", "MS train",
              "MS test", "MS |G|", "SS train", "SS test", "ref train", "ref |G|", "ref test");
  for (const auto& r : rows) {
    auto cell = [](const nlohmann::json& v) {
      if (v.is_string()) return v.get<std::string>();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2e", v.get<double>());
      return std::string(buf);
    };
    const auto& ref = r["reference_e-4"];
    auto refcell = [](const nlohmann::json& v) {
      if (v.is_string()) return v.get<std::string>();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2fe-4", v.get<double>());
      return std::string(buf);
    };
    std::printf("%-16s %6lld %11s %11s %11s %11s %11s | %9s %9s %9s\n", r["system"].get<std::string>().c_str(),
                r["epochs"].get<long long>(), cell(r["ms"]["train_mse"]).c_str(), cell(r["ms"]["test_mse"]).c_str(),
                cell(r["ms_g_inf"]).c_str(), cell(r["ss"]["train_mse"]).c_str(), cell(r["ss"]["test_mse"]).c_str(),
                refcell(ref["train"]).c_str(), refcell(ref["g_inf"]).c_str(), refcell(ref["test"]).c_str());
  }
  return aborted ? kAbort : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-shooting neural ODE training"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a ground-truth dataset (CSV + JSON)");
  std::string gen_system, gen_out = "data";
  long gen_substeps = 0;
  bool gen_vdp = false, gen_oreg = false;
  gen->add_option("--system", gen_system, "system name")->required();
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--substeps", gen_substeps, "RK4 substeps per sample (0: system default)");
  gen->add_flag("--vdp-as-printed", gen_vdp, "Van der Pol with dx/dt = x");
  gen->add_flag("--oregonator-standard", gen_oreg, "Oregonator with (x-q)/(x+q)");

  RunOptions train_opt;
  auto* train = app.add_subcommand("train", "train multiple shooting (and the single-shooting baseline)");
  add_run_options(train, train_opt, true);
  train->add_option("--out", train_opt.out, "run directory (default runs/<system>)");
  train->add_option("--data", train_opt.data, "dataset JSON written by generate");

  std::string eval_run, eval_system;
  bool eval_truth = false;
  auto* eval = app.add_subcommand("evaluate", "roll out saved parameters over the train and test windows");
  eval->add_option("--run", eval_run, "run directory written by train");
  eval->add_option("--system", eval_system, "system for --true-dynamics");
  eval->add_flag("--true-dynamics", eval_truth, "evaluate the closed-form right-hand side instead");

  RunOptions cmp_opt;
  std::string cmp_systems;
  auto* cmp = app.add_subcommand("compare", "multiple against single shooting, with reference values");
  add_run_options(cmp, cmp_opt, false);
  cmp->add_option("--systems", cmp_systems, "comma-separated names or 'all'")->required();
  cmp->add_option("--out", cmp_opt.out, "output directory (default runs/compare)");

  std::string mutate = "none";
  bool st_verbose = false;
  auto* st = app.add_subcommand("selftest", "run the property suites");
  st->add_option("--mutate", mutate, "inject a defect: none, gp_v, vt_gp, gx_identity");
  st->add_flag("--verbose", st_verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_system, gen_out, gen_substeps, gen_vdp, gen_oreg);
    if (*train) return cmd_train(train_opt);
    if (*eval) return cmd_evaluate(eval_run, eval_system, eval_truth);
    if (*cmp) return cmd_compare(cmp_opt, cmp_systems);
    if (*st) return run_selftest(mutation_from_string(mutate), st_verbose) ? kOk : kPropertyFailure;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const NonFiniteError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kAbort;
  }
  return kUsage;
}
