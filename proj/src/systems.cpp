#include "msnode/systems.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "msnode/integrator.hpp"

namespace msnode {

namespace {

using ad::Term;

const std::vector<std::string> kNames = {"lotka_volterra", "goodwin",  "van_der_pol", "fitzhugh_nagumo",
                                         "brusselator",    "zebrafish", "oregonator", "mhd",
                                         "km",             "calcium"};

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

// Goodwin
constexpr double kGwA = 3.4884, kGwBigA = 2.15, kGwB = 0.0969, kGwAlpha = 0.0969, kGwBeta = 0.0581,
                 kGwGamma = 0.0969, kGwSigma = 10.0, kGwDelta = 0.0775;
// FitzHugh-Nagumo
constexpr double kFhnA = 0.2, kFhnB = 0.2, kFhnC = 3.5;
// Brusselator
constexpr double kBrA = 0.8, kBrB = 2.0, kBrC = 0.8;
// Zebrafish
constexpr double kZfA1 = 0.7934, kZfA2 = 0.0411, kZfP1 = 5.0, kZfP2 = 2.86e-1, kZfP3 = -5.095e-3,
                 kZfP4 = -3.748e-4, kZfP5 = -1.255e-1, kZfP6 = -5.919e-3, kZfP7 = -5.737e-3;
// Oregonator
constexpr double kOrEps = 0.1, kOrF = 1.4, kOrQ = 0.002, kOrPhi = 0.1;
// MHD
constexpr double kMhdNu = 0.0, kMhdMu = 0.0;
// KM
constexpr double kKmTau1 = 1.0, kKmTau2 = 10.0;
// Calcium
constexpr double kCa[12] = {0, 0.09, 2, 1.27, 3.73, 1.27, 32.24, 2, 0.05, 13.58, 153, 4.85};
constexpr double kCaKm[7] = {0, 0.19, 0.73, 29.09, 2.67, 0.16, 0.05};

template <class Ctx, class V>
typename Ctx::Value true_rhs(const SystemSpec& spec, Ctx& ctx, const V& xv) {
  Term s(ctx, xv);
  const std::string& n = spec.name;
  if (n == "lotka_volterra") {
    auto x = s[0], y = s[1];
    return ad::stack({1.5 * x - x * y, -y + x * y});
  }
  if (n == "goodwin") {
    auto x = s[0], y = s[1], z = s[2];
    return ad::stack({kGwA / (pow(z, kGwSigma) + kGwBigA) - kGwB * x, kGwAlpha * x - kGwBeta * y,
                      kGwGamma * y - kGwDelta * z});
  }
  if (n == "van_der_pol") {
    auto x = s[0], y = s[1];
    auto dy = 0.5 * (1.0 - x * x) * y - x;
    return spec.options.vdp_as_printed ? ad::stack({x, dy}) : ad::stack({y, dy});
  }
  if (n == "fitzhugh_nagumo") {
    auto x = s[0], y = s[1];
    return ad::stack({kFhnC * (x - x * x * x / 3.0 + y), -(x - kFhnA + kFhnB * y) / kFhnC});
  }
  if (n == "brusselator") {
    auto x = s[0], y = s[1];
    auto x2y = x * x * y;
    return ad::stack({kBrA - (kBrB + 1.0) * x + kBrC * x2y, kBrB * x - kBrC * x2y});
  }
  if (n == "zebrafish") {
    auto x = s[0], y = s[1];
    auto x2 = x * x;
    return ad::stack({kZfP1 + kZfP2 * x + kZfP3 * x2 + kZfP4 * x2 * x + kZfP5 * y + kZfP6 * x * y,
                      kZfA1 + kZfA2 * x + kZfP7 * y});
  }
  if (n == "oregonator") {
    auto x = s[0], y = s[1], z = s[2];
    auto den = spec.options.oregonator_standard ? x + kOrQ : z + kOrQ;
    return ad::stack({(x * (1.0 - x) - kOrF * y * (x - kOrQ) / den) / kOrEps, x - y,
                      kOrPhi * (y - z)});
  }
  if (n == "mhd") {
    auto x = s[0], y = s[1], z = s[2], w = s[3], a = s[4], b = s[5];
    return ad::stack({-2.0 * kMhdNu * x + 4.0 * (y * z - a * b),
                      -5.0 * kMhdNu * y - 7.0 * (x * z - w * b),
                      -9.0 * kMhdNu * z + 3.0 * (x * y - w * a),
                      -2.0 * kMhdMu * w + 2.0 * (b * y - z * a),
                      -5.0 * kMhdMu * a + 5.0 * (z * w - b * x),
                      -9.0 * kMhdMu * b + 9.0 * (x * a - w * y)});
  }
  if (n == "calcium") {
    auto x = s[0], y = s[1], z = s[2], w = s[3];
    const double* k = kCa;
    const double* km = kCaKm;
    auto transfer = k[7] * y * z * (w / (w + km[4]));
    auto release = k[11] * (z / (z + km[6]));
    return ad::stack({k[1] + k[2] * x - k[3] * y * (x / (x + km[1])) - k[4] * z * (x / (x + km[2])),
                      k[5] * x - k[6] * (y / (y + km[3])),
                      transfer + k[8] * y + k[9] * x - k[10] * (z / (z + km[5])) - release,
                      -transfer + release});
  }
  throw std::invalid_argument("no closed-form right-hand side for system '" + n + "'");
}

// Denominators that must stay positive along the ground truth.
void check_domain(const SystemSpec& spec, const Vec& x, double t) {
  auto fail = [&](const char* what) {
    std::ostringstream os;
    os << spec.name << ": " << what << " is not positive at t = " << t;
    throw std::domain_error(os.str());
  };
  if (spec.name == "oregonator") {
    const double den = spec.options.oregonator_standard ? x[0] + kOrQ : x[2] + kOrQ;
    if (!(den > 0.0)) fail("the rate denominator");
  } else if (spec.name == "calcium") {
    if (!(x[0] + kCaKm[1] > 0.0 && x[0] + kCaKm[2] > 0.0 && x[1] + kCaKm[3] > 0.0 &&
          x[3] + kCaKm[4] > 0.0 && x[2] + kCaKm[5] > 0.0 && x[2] + kCaKm[6] > 0.0)) {
      fail("a Michaelis-Menten denominator");
    }
  }
}

Vec km_rhs(const Vec& x, const Vec& lag1, const Vec& lag2) {
  Vec d(3);
  d[0] = -x[0] * lag1[1] + lag2[1];
  d[1] = x[0] * lag1[1] - x[1];
  d[2] = x[1] - lag2[1];
  return d;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Trajectory {
  Vec times;
  RowMatrix values;
  std::optional<double> failure_time;
  std::string failure;
};

Vec sample_times(double t0, double dt, Index count) {
  Vec t(count);
  for (Index j = 0; j < count; ++j) t[j] = t0 + static_cast<double>(j) * dt;
  return t;
}

Index gap_count(double t0, double t1, double dt) {
  const double g = (t1 - t0) / dt;
  const auto gi = static_cast<Index>(std::llround(g));
  if (gi < 1 || std::abs(g - static_cast<double>(gi)) > 1e-9 * std::max(1.0, g)) {
    throw std::invalid_argument("sample period does not divide the horizon");
  }
  return gi;
}

// Ordinary systems: RK4 from sample to sample.
Trajectory run_ode(const SystemSpec& spec, double t0, double t1, Index substeps) {
  const auto f = true_dynamics(spec);
  const Index gaps = gap_count(t0, t1, spec.sample_period);
  Trajectory tr;
  tr.times = sample_times(t0, spec.sample_period, gaps + 1);
  tr.values.resize(gaps + 1, spec.state_dim);
  const double h = spec.sample_period / static_cast<double>(substeps);
  ad::PrimalContext ctx;
  const Matrix none(0, 1);
  Matrix x = spec.x0;
  tr.values.row(0) = spec.x0.transpose();
  for (Index j = 0; j < gaps; ++j) {
    for (Index s = 0; s < substeps; ++s) {
      const double t = tr.times[j] + static_cast<double>(s) * h;
      x = detail::rk4_step(ctx, *f, x, none, TimeRow::Constant(1, t), h);
      if (!x.allFinite()) {
        tr.failure_time = t + h;
        tr.failure = "non-finite state at t = " + fmt17(t + h);
        tr.values.conservativeResize(j + 1, Eigen::NoChange);
        tr.times.conservativeResize(j + 1);
        return tr;
      }
    }
    try {
      check_domain(spec, x.col(0), tr.times[j + 1]);
    } catch (const std::domain_error& e) {
      tr.failure_time = tr.times[j + 1];
      tr.failure = e.what();
      tr.values.conservativeResize(j + 1, Eigen::NoChange);
      tr.times.conservativeResize(j + 1);
      return tr;
    }
    tr.values.row(j + 1) = x.col(0).transpose();
  }
  return tr;
}

// Delayed systems: RK4 with every substep kept as history, lagged states
// interpolated linearly, constant pre-history.
Trajectory run_dde(const SystemSpec& spec, double t0, double t1, Index substeps) {
  const Index gaps = gap_count(t0, t1, spec.sample_period);
  const double h = spec.sample_period / static_cast<double>(substeps);
  std::vector<Vec> buf;
  buf.reserve(static_cast<std::size_t>(gaps * substeps + 1));
  buf.push_back(spec.x0);
  auto lookup = [&](double t) -> Vec {
    if (t <= t0) return spec.x0;
    const double pos = (t - t0) / h;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= buf.size()) {
      if (i < buf.size() && pos == static_cast<double>(i)) return buf[i];
      throw std::logic_error("delay shorter than the integration step");
    }
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * buf[i] + w * buf[i + 1];
  };
  auto f = [&](const Vec& x, double t) {
    return km_rhs(x, lookup(t - spec.delays[0]), lookup(t - spec.delays[1]));
  };
  Trajectory tr;
  tr.times = sample_times(t0, spec.sample_period, gaps + 1);
  tr.values.resize(gaps + 1, spec.state_dim);
  tr.values.row(0) = spec.x0.transpose();
  Vec x = spec.x0;
  Index step = 0;
  for (Index j = 0; j < gaps; ++j) {
    for (Index s = 0; s < substeps; ++s, ++step) {
      const double t = t0 + static_cast<double>(step) * h;
      const Vec k1 = f(x, t);
      const Vec k2 = f(x + 0.5 * h * k1, t + 0.5 * h);
      const Vec k3 = f(x + 0.5 * h * k2, t + 0.5 * h);
      const Vec k4 = f(x + h * k3, t + h);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) {
        tr.failure_time = t + h;
        tr.failure = "non-finite state at t = " + fmt17(t + h);
        tr.values.conservativeResize(j + 1, Eigen::NoChange);
        tr.times.conservativeResize(j + 1);
        return tr;
      }
      buf.push_back(x);
    }
    tr.values.row(j + 1) = x.transpose();
  }
  return tr;
}

Trajectory run(const SystemSpec& spec, double t0, double t1, Index substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps per sample must be positive");
  return spec.delayed() ? run_dde(spec, t0, t1, substeps) : run_ode(spec, t0, t1, substeps);
}

template <class Ctx>
typename Ctx::Value broadcast(Ctx& ctx, const Vec& v, Index cols) {
  return ctx.constant(v.replicate(1, cols));
}

class ScaledDynamics final : public Dynamics {
 public:
  ScaledDynamics(std::shared_ptr<const Dynamics> f, Scaler s) : f_(std::move(f)), s_(std::move(s)) {}
  Index state_dim() const override { return f_->state_dim(); }
  Index param_dim() const override { return f_->param_dim(); }
  Matrix eval(ad::PrimalContext& ctx, const Matrix& x, const Matrix& p, const TimeRow& t) const override {
    return forward(ctx, x, p, t);
  }
  ad::DualVector eval(ad::DualContext& ctx, const ad::DualVector& x, const ad::DualVector& p,
                      const TimeRow& t) const override {
    return forward(ctx, x, p, t);
  }
  ad::Var eval(ad::Tape& ctx, ad::Var x, ad::Var p, const TimeRow& t) const override {
    return forward(ctx, x, p, t);
  }

 private:
  template <class Ctx>
  typename Ctx::Value forward(Ctx& ctx, const typename Ctx::Value& x, const typename Ctx::Value& p,
                              const TimeRow& t) const {
    const Index cols = ctx.primal(x).cols();
    auto xo = ctx.add(ctx.mul(x, broadcast(ctx, s_.scale, cols)), broadcast(ctx, s_.mean, cols));
    auto fo = f_->eval(ctx, xo, p, t);
    return ctx.mul(fo, broadcast(ctx, s_.scale.cwiseInverse(), cols));
  }

  std::shared_ptr<const Dynamics> f_;
  Scaler s_;
};

}  // namespace

Index SystemSpec::train_samples() const { return gap_count(t_start, t_end, sample_period) + 1; }

const std::vector<std::string>& system_names() { return kNames; }

bool is_system(const std::string& name) {
  for (const auto& n : kNames) {
    if (n == name) return true;
  }
  return false;
}

SystemSpec system_spec(const std::string& name, const SystemOptions& opt) {
  SystemSpec s;
  s.name = name;
  s.options = opt;
  s.t_start = 0.0;
  s.sample_period = 0.1;
  s.intervals = 20;
  auto ref = [&](Index epochs, bool decayed, double train, double g, std::optional<double> test) {
    s.reference = {epochs, decayed, train, g, test};
  };
  if (name == "lotka_volterra") {
    s.title = "Lotka-Volterra";
    s.x0 = vec({1.0, 1.0});
    s.t_end = 20.0;
    s.hidden = {32, 64, 32};
    ref(400, false, 0.1, 1.4, 0.1);
  } else if (name == "goodwin") {
    s.title = "Goodwin";
    s.x0 = vec({0.3617, 0.9137, 1.3934});
    s.t_end = 80.0;
    s.hidden = {32, 64, 32};
    ref(420, false, 0.05, 2.17, 0.31);
  } else if (name == "van_der_pol") {
    s.title = "Van der Pol";
    s.x0 = vec({1.0, 1.0});
    s.t_end = 20.0;
    s.hidden = {32, 64, 64};
    ref(2500, true, 0.19, 5.78, 0.34);
  } else if (name == "fitzhugh_nagumo") {
    s.title = "FitzHugh-Nagumo";
    s.x0 = vec({-1.0, 1.0});
    s.t_end = 20.0;
    s.hidden = {32};
    s.scaled = true;
    ref(700, false, 0.99, 1.16, 1.18);
  } else if (name == "brusselator") {
    s.title = "Brusselator";
    s.x0 = vec({2.0, 1.0});
    s.t_end = 20.0;
    s.hidden = {32, 64, 64, 128};
    s.intervals = 40;
    ref(850, false, 0.42, 3.63, 1.2);
  } else if (name == "zebrafish") {
    s.title = "Zebrafish";
    s.x0 = vec({-20.5693, 28.1786});
    s.t_end = 500.0;
    s.sample_period = 1.0;
    s.hidden = {32, 64, 32, 16};
    s.intervals = 100;
    s.scaled = true;
    ref(1900, true, 0.45, 5.17, 11.8);
  } else if (name == "oregonator") {
    s.title = "Oregonator";
    s.x0 = vec({0.1, 0.1, 0.1});
    s.t_end = 20.0;
    s.hidden = {32, 64, 64, 128};
    s.scaled = true;
    ref(5000, true, 4.26, 22.03, 5.57);
  } else if (name == "mhd") {
    s.title = "MHD";
    s.x0 = vec({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    s.t_end = 10.0;
    s.hidden = {32, 64, 64};
    s.scaled = true;
    ref(1700, true, 2.63, 1.84, std::nullopt);
  } else if (name == "km") {
    s.title = "Kermack-McKendrick";
    s.x0 = vec({5.0, 0.1, 1.0});
    s.t_end = 40.0;
    s.delays = {kKmTau1, kKmTau2};
    s.truth_substeps = 800;  // linear history interpolation is second order
    s.hidden = {32, 64, 64};
    s.scaled = true;
    s.time_input = true;
    ref(1500, true, 0.36, 5.73, std::nullopt);
  } else if (name == "calcium") {
    s.title = "Calcium ion";
    s.x0 = vec({0.12, 0.31, 0.0058, 4.3});
    s.truth_substeps = 400;
    s.t_end = 60.0;
    s.hidden = {32, 64, 128, 16};
    s.scaled = true;
    ref(3000, true, 1.89, 4.69, std::nullopt);
  } else {
    std::string valid;
    for (const auto& n : kNames) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown system '" + name + "' (valid: " + valid + ")");
  }
  s.state_dim = s.x0.size();
  return s;
}

std::shared_ptr<const Dynamics> true_dynamics(const SystemSpec& spec) {
  if (spec.delayed()) {
    throw std::invalid_argument(spec.name + " is a delay system; use rhs_eval with a history");
  }
  return make_dynamics(spec.state_dim, 0, [spec](auto& ctx, const auto& x, const auto&, const TimeRow&) {
    return true_rhs(spec, ctx, x);
  });
}

Vec rhs_eval(const SystemSpec& spec, const Vec& x, double t, const HistoryLookup* history) {
  require_length(x.size(), spec.state_dim, "rhs_eval state");
  if (spec.delayed()) {
    if (!history) throw std::invalid_argument("rhs_eval: " + spec.name + " needs a history lookup");
    return km_rhs(x, (*history)(t - spec.delays[0]), (*history)(t - spec.delays[1]));
  }
  if (history) throw std::invalid_argument("rhs_eval: " + spec.name + " takes no history");
  ad::PrimalContext ctx;
  return true_rhs(spec, ctx, Matrix(x)).col(0);
}

Scaler Scaler::identity(Index n) { return {Vec::Zero(n), Vec::Ones(n)}; }

Scaler Scaler::fit(const RowMatrix& values) {
  if (values.rows() < 2) throw std::invalid_argument("Scaler::fit: need at least two samples");
  Scaler s;
  s.mean = values.colwise().mean().transpose();
  s.scale.resize(values.cols());
  for (Index i = 0; i < values.cols(); ++i) {
    const double sd = std::sqrt((values.col(i).array() - s.mean[i]).square().mean());
    s.scale[i] = sd > 1e-14 * std::max(1.0, std::abs(s.mean[i])) ? sd : 1.0;
  }
  return s;
}

RowMatrix Scaler::apply(const RowMatrix& values) const {
  return ((values.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

RowMatrix Scaler::invert(const RowMatrix& values) const {
  return ((values.array().rowwise() * scale.transpose().array()).rowwise() + mean.transpose().array())
      .matrix();
}

MeasurementSet simulate(const SystemSpec& spec, double t_start, double t_end, Index substeps_per_sample) {
  SystemSpec s = spec;
  s.t_start = t_start;
  Trajectory tr = run(s, t_start, t_end, substeps_per_sample);
  if (tr.failure_time) throw NonFiniteError(spec.name + ": " + tr.failure);
  return {tr.times, tr.values};
}

Dataset generate_data(const SystemSpec& spec, Index substeps_per_sample) {
  if (substeps_per_sample == 0) substeps_per_sample = spec.truth_substeps;
  Dataset d;
  d.spec = spec;
  d.substeps_per_sample = substeps_per_sample;
  d.scaler = Scaler::identity(spec.state_dim);
  const Index T = spec.train_samples();
  Trajectory tr = run(spec, spec.t_start, 2.0 * spec.t_end - spec.t_start, substeps_per_sample);
  if (tr.times.size() < T) throw NonFiniteError(spec.name + ": " + tr.failure);
  d.train = {tr.times.head(T), tr.values.topRows(T)};
  const Index full = 2 * (T - 1) + 1;
  if (tr.times.size() < full) {
    d.test_available = false;
    d.test_failure = tr.failure;
    d.test = {Vec(0), RowMatrix(0, spec.state_dim)};
  } else {
    d.test = {tr.times.tail(T - 1), tr.values.bottomRows(T - 1)};
  }
  return d;
}

Dataset scale(Dataset raw) {
  if (!raw.spec.scaled) return raw;
  raw.scaler = Scaler::fit(raw.train.values);
  raw.train.values = raw.scaler.apply(raw.train.values);
  if (raw.test.samples() > 0) raw.test.values = raw.scaler.apply(raw.test.values);
  return raw;
}

nlohmann::json spec_to_json(const SystemSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["state_dim"] = s.state_dim;
  j["x0"] = std::vector<double>(s.x0.data(), s.x0.data() + s.x0.size());
  j["t_start"] = s.t_start;
  j["t_end"] = s.t_end;
  j["sample_period"] = s.sample_period;
  j["delays"] = s.delays;
  j["scaled"] = s.scaled;
  j["time_input"] = s.time_input;
  j["hidden"] = s.hidden;
  j["intervals"] = s.intervals;
  j["truth_substeps"] = s.truth_substeps;
  j["vdp_as_printed"] = s.options.vdp_as_printed;
  j["oregonator_standard"] = s.options.oregonator_standard;
  return j;
}

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

namespace {

void write_csv(const std::filesystem::path& path, const Vec& t, const RowMatrix& v) {
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write " + path.string());
  csv << "t";
  for (Index i = 0; i < v.cols(); ++i) csv << ",x" << i + 1;
  csv << "\n";
  for (Index r = 0; r < v.rows(); ++r) {
    csv << fmt17(t[r]);
    for (Index i = 0; i < v.cols(); ++i) csv << "," << fmt17(v(r, i));
    csv << "\n";
  }
}

MeasurementSet read_csv(const std::filesystem::path& path, Index rows, Index n) {
  std::ifstream csv(path);
  if (!csv) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(csv, line);
  MeasurementSet m{Vec(rows), RowMatrix(rows, n)};
  for (Index r = 0; r < rows; ++r) {
    if (!std::getline(csv, line)) throw std::runtime_error(path.string() + " is truncated");
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    m.times[r] = std::stod(cell);
    for (Index i = 0; i < n; ++i) {
      std::getline(ss, cell, ',');
      m.values(r, i) = std::stod(cell);
    }
  }
  return m;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& spec = data.spec;
  write_csv(dir / (spec.name + ".csv"), data.train.times, data.scaler.invert(data.train.values));
  const bool with_test = data.test.samples() > 0;
  if (with_test) {
    write_csv(dir / (spec.name + "_test.csv"), data.test.times, data.scaler.invert(data.test.values));
  }

  nlohmann::json j;
  j["spec"] = spec_to_json(spec);
  j["substeps_per_sample"] = data.substeps_per_sample;
  j["scaler"] = {{"mean", to_std(data.scaler.mean)}, {"scale", to_std(data.scaler.scale)}};
  j["split"] = {{"train_end", spec.t_end},
                {"train_samples", data.train.samples()},
                {"test_samples", data.test.samples()},
                {"test_available", data.test_available},
                {"test_failure", data.test_failure}};
  j["csv"] = spec.name + ".csv";
  j["test_csv"] = with_test ? nlohmann::json(spec.name + "_test.csv") : nlohmann::json(nullptr);
  j["units"] = "original";
  std::ofstream out(dir / (spec.name + ".json"));
  out << j.dump(1) << "\n";
}

Dataset load_dataset(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot read " + json_path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  const auto& js = j.at("spec");
  SystemOptions opt;
  opt.vdp_as_printed = js.at("vdp_as_printed").get<bool>();
  opt.oregonator_standard = js.at("oregonator_standard").get<bool>();
  Dataset d;
  d.spec = system_spec(js.at("name").get<std::string>(), opt);
  d.spec.scaled = js.at("scaled").get<bool>();
  d.substeps_per_sample = j.at("substeps_per_sample").get<Index>();
  const Index n = d.spec.state_dim;
  const auto train_n = j.at("split").at("train_samples").get<Index>();
  const auto test_n = j.at("split").at("test_samples").get<Index>();
  d.test_available = j.at("split").at("test_available").get<bool>();
  d.test_failure = j.at("split").at("test_failure").get<std::string>();

  const auto dir = json_path.parent_path();
  d.scaler = Scaler::identity(n);
  d.train = read_csv(dir / j.at("csv").get<std::string>(), train_n, n);
  d.test = test_n > 0 ? read_csv(dir / j.at("test_csv").get<std::string>(), test_n, n)
                      : MeasurementSet{Vec(0), RowMatrix(0, n)};
  return scale(std::move(d));
}

std::shared_ptr<const Dynamics> scaled_dynamics(std::shared_ptr<const Dynamics> f, const Scaler& scaler) {
  require_length(scaler.mean.size(), f->state_dim(), "scaled_dynamics scaler");
  return std::make_shared<ScaledDynamics>(std::move(f), scaler);
}

}  // namespace msnode
