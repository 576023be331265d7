#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msnode/dynamics.hpp"

namespace msnode {

struct SystemOptions {
  bool vdp_as_printed = false;       // dx/dt = x instead of dx/dt = y
  bool oregonator_standard = false;  // (x - q)/(x + q) instead of (x - q)/(z + q)
};

// Reference training setup and reported results (MSE values in units of 1e-4).
struct ReferenceRow {
  Index epochs = 0;
  bool lr_decayed = false;
  double train_loss = 0.0;
  double g_inf = 0.0;
  std::optional<double> test_loss;
};

struct SystemSpec {
  std::string name;
  std::string title;
  Index state_dim = 0;
  Vec x0;
  double t_start = 0.0;
  double t_end = 0.0;
  double sample_period = 0.1;
  std::vector<double> delays;  // empty unless the system is a DDE
  bool scaled = false;
  bool time_input = false;
  std::vector<Index> hidden;
  Index intervals = 20;
  // Ground-truth RK4 substeps per sample, fine enough that halving them
  // moves the samples by less than 1e-8 relative.
  Index truth_substeps = 100;
  ReferenceRow reference;
  SystemOptions options;

  bool delayed() const { return !delays.empty(); }
  // Number of samples on [t_start, t_end] at the sample period.
  Index train_samples() const;
};

const std::vector<std::string>& system_names();
bool is_system(const std::string& name);
SystemSpec system_spec(const std::string& name, const SystemOptions& opt = {});

// Closed-form right-hand side with the true parameters (no learnable
// parameters). Throws for delayed systems, which need a history.
std::shared_ptr<const Dynamics> true_dynamics(const SystemSpec& spec);

// Past states for delayed systems.
using HistoryLookup = std::function<Vec(double t)>;

// Evaluates the true right-hand side at a single state.
Vec rhs_eval(const SystemSpec& spec, const Vec& x, double t, const HistoryLookup* history = nullptr);

struct Scaler {
  Vec mean;
  Vec scale;  // standard deviation, or 1 for constant states

  static Scaler identity(Index n);
  static Scaler fit(const RowMatrix& values);
  RowMatrix apply(const RowMatrix& values) const;
  RowMatrix invert(const RowMatrix& values) const;
};

struct MeasurementSet {
  Vec times;
  RowMatrix values;  // T x n

  Index samples() const { return times.size(); }
};

// Ground truth sampled on [t_start, 2 t_end - t_start]: the printed horizon
// followed by an equal-length continuation.
struct Dataset {
  SystemSpec spec;
  MeasurementSet train;             // [t_start, t_end]
  MeasurementSet test;              // (t_end, 2 t_end - t_start]
  bool test_available = true;
  std::string test_failure;         // why the continuation is missing
  Scaler scaler;                    // identity unless spec.scaled
  Index substeps_per_sample = 100;  // ground-truth resolution
};

// Dense RK4 over both windows (0 substeps means spec.truth_substeps).
// Throws NonFiniteError with the failure time if the printed horizon blows
// up; a blow-up on the continuation only marks the test window unavailable.
Dataset generate_data(const SystemSpec& spec, Index substeps_per_sample = 0);

// Measurements sampled from a dense RK4 run on [t_start, t_end].
MeasurementSet simulate(const SystemSpec& spec, double t_start, double t_end,
                        Index substeps_per_sample);

// Fits the scaler on the training window when the spec asks for scaling and
// applies it to both windows.
Dataset scale(Dataset raw);

// Writes <dir>/<name>.csv (training window, header t,x1..xn),
// <dir>/<name>_test.csv (continuation, when available) and <dir>/<name>.json
// describing the spec, scaler and split. Values are written in original units.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& json_path);

nlohmann::json spec_to_json(const SystemSpec& spec);

// Right-hand side in standardized coordinates: dz/dt = f(mean + scale⊙z) / scale.
std::shared_ptr<const Dynamics> scaled_dynamics(std::shared_ptr<const Dynamics> f,
                                                const Scaler& scaler);

}  // namespace msnode
