#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msnode/loss.hpp"
#include "msnode/network.hpp"
#include "msnode/optimizer.hpp"
#include "msnode/systems.hpp"

namespace msnode {

enum class SolverPath { Auto, Dense, MatrixFree };

std::string to_string(SolverPath s);
SolverPath solver_from_string(const std::string& s);

struct RunConfig {
  std::string system = "lotka_volterra";
  Index intervals = 20;
  std::vector<Index> hidden = {32, 64, 32};
  bool time_input = false;
  std::uint64_t seed = 0;
  Index epochs = 400;
  LrScheduleOptions lr;
  double cg_tol = 1e-8;
  Index cg_max_iter = 0;  // 0 means 5·m·n
  Index substeps = 10;    // RK4 substeps per sample interval
  bool scale = false;
  SolverPath solver = SolverPath::Auto;
  Index dense_cap = 512;             // largest m·n for the dense path
  Index dense_param_cap = 200000;    // largest P for the dense path under auto
  double stop_phi = 1e-5;
  double stop_g_inf = 1e-3;
  bool early_stop = true;
  bool freeze_lambda = false;
  bool run_ss = true;  // also train the single-shooting baseline
  SystemOptions options;

  // Reference training setup for a system.
  static RunConfig for_system(const std::string& name, const SystemOptions& opt = {});
  NetworkSpec network(Index state_dim) const;
  void validate(Index samples) const;
};

struct EpochRecord {
  Index epoch = 0;
  double phi = 0.0;
  double g_inf = 0.0;
  double lr = 0.0;
  double feasibility = 0.0;  // ‖G_xΔx + G_pΔp + G‖∞ of the step taken
  Index cg_iterations = 0;
};

struct WindowMetrics {
  std::optional<double> mse;           // scaled units when the data are scaled
  std::optional<double> mse_original;  // original units
  std::string failure;                 // why mse is missing
};

struct Metrics {
  WindowMetrics train;
  WindowMetrics test;
  RowMatrix prediction;  // rollout over train then test times, scaled units
  Vec times;
};

struct RunReport {
  std::string method;  // "multiple-shooting" or "single-shooting"
  std::string status;  // "converged", "epoch-budget", "aborted", "diverged"
  std::string failure;
  std::string solver_used;
  std::vector<EpochRecord> history;
  double final_phi = 0.0;
  double final_g_inf = 0.0;
  Metrics metrics;
  double wall_seconds = 0.0;
  RunConfig config;

  Index epochs_run() const { return static_cast<Index>(history.size()); }
  bool ok() const { return status == "converged" || status == "epoch-budget"; }
};

// Grid and measurements for a run on the training window.
ShootingGrid make_grid(const RunConfig& cfg, const MeasurementSet& train, Index intervals);

ShootingVariables init_shooting_vars(const RunConfig& cfg, const ShootingGrid& grid,
                                     const MeasurementSet& train, Index param_dim);

struct MsResult {
  ShootingVariables vars;  // last finite iterate
  RunReport report;
};
MsResult train_ms(const RunConfig& cfg, const Dataset& data);

struct SsResult {
  Vec params;
  RunReport report;
};
SsResult train_ss(const RunConfig& cfg, const Dataset& data);

// Single-shooting rollout of `f` from the first training sample across the
// training and test windows; MSE per window.
Metrics evaluate(const Dynamics& f, const Vec& params, const Dataset& data, Index substeps);

nlohmann::json config_to_json(const RunConfig& cfg);
nlohmann::json report_to_json(const RunReport& r);
void write_history_csv(const RunReport& r, const std::filesystem::path& path);

}  // namespace msnode
