#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace msnode::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw UsageError("'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw UsageError("'" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<Index> to_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    const long long w = to_int(key, item);
    if (w < 1) throw UsageError("'" + key + "' widths must be positive");
    out.push_back(static_cast<Index>(w));
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void apply(RunConfig& c, const std::string& k, const std::string& v) {
  if (k == "intervals") c.intervals = to_int(k, v);
  else if (k == "hidden") c.hidden = to_widths(k, v);
  else if (k == "time_input") c.time_input = to_bool(k, v);
  else if (k == "seed") c.seed = static_cast<std::uint64_t>(to_int(k, v));
  else if (k == "epochs") c.epochs = to_int(k, v);
  else if (k == "lr") c.lr.initial = to_double(k, v);
  else if (k == "lr_factor") c.lr.factor = to_double(k, v);
  else if (k == "lr_patience") c.lr.patience = to_int(k, v);
  else if (k == "lr_min_improvement") c.lr.min_improvement = to_double(k, v);
  else if (k == "lr_floor") c.lr.floor = to_double(k, v);
  else if (k == "lr_regress_factor") c.lr.regress_factor = to_double(k, v);
  else if (k == "lr_regress_patience") c.lr.regress_patience = to_int(k, v);
  else if (k == "cg_tol") c.cg_tol = to_double(k, v);
  else if (k == "cg_max_iter") c.cg_max_iter = to_int(k, v);
  else if (k == "substeps") c.substeps = to_int(k, v);
  else if (k == "scale") c.scale = to_bool(k, v);
  else if (k == "solver") {
    try {
      c.solver = solver_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else if (k == "dense_cap") c.dense_cap = to_int(k, v);
  else if (k == "dense_param_cap") c.dense_param_cap = to_int(k, v);
  else if (k == "stop_phi") c.stop_phi = to_double(k, v);
  else if (k == "stop_g_inf") c.stop_g_inf = to_double(k, v);
  else if (k == "early_stop") c.early_stop = to_bool(k, v);
  else if (k == "freeze_lambda") c.freeze_lambda = to_bool(k, v);
  else if (k == "run_ss") c.run_ss = to_bool(k, v);
  else throw UsageError("unknown config key '" + k + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "system",      "vdp_as_printed", "oregonator_standard", "intervals",         "hidden",
      "time_input",  "seed",           "epochs",              "lr",                "lr_factor",
      "lr_patience", "lr_min_improvement", "lr_floor",        "lr_regress_factor", "lr_regress_patience",
      "cg_tol",      "cg_max_iter",    "substeps",            "scale",             "solver",
      "dense_cap",   "dense_param_cap", "stop_phi",           "stop_g_inf",        "early_stop",
      "freeze_lambda", "run_ss"};
  return keys;
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + s + "'");
  const std::string k = trim(s.substr(0, eq));
  if (k.empty()) throw UsageError("empty key in '" + s + "'");
  return {k, trim(s.substr(eq + 1))};
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  KeyValues out;
  Index line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(split_assignment(line));
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

RunConfig build_config(const KeyValues& kv, const std::string& default_system) {
  std::string system = default_system;
  SystemOptions opt;
  for (const auto& [k, v] : kv) {
    if (k == "system") system = v;
    else if (k == "vdp_as_printed") opt.vdp_as_printed = to_bool(k, v);
    else if (k == "oregonator_standard") opt.oregonator_standard = to_bool(k, v);
  }
  if (!is_system(system)) {
    std::string valid;
    for (const auto& n : system_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw UsageError("unknown system '" + system + "' (valid: " + valid + ")");
  }
  RunConfig c = RunConfig::for_system(system, opt);
  for (const auto& [k, v] : kv) {
    if (k == "system" || k == "vdp_as_printed" || k == "oregonator_standard") continue;
    apply(c, k, v);
  }
  return c;
}

std::string config_echo(const RunConfig& c) {
  std::ostringstream o;
  std::string hidden;
  for (Index h : c.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
  auto b = [](bool x) { return x ? "true" : "false"; };
  o << "system = " << c.system << "\n"
    << "vdp_as_printed = " << b(c.options.vdp_as_printed) << "\n"
    << "oregonator_standard = " << b(c.options.oregonator_standard) << "\n"
    << "intervals = " << c.intervals << "\n"
    << "hidden = " << hidden << "\n"
    << "time_input = " << b(c.time_input) << "\n"
    << "seed = " << c.seed << "\n"
    << "epochs = " << c.epochs << "\n"
    << "lr = " << num(c.lr.initial) << "\n"
    << "lr_factor = " << num(c.lr.factor) << "\n"
    << "lr_patience = " << c.lr.patience << "\n"
    << "lr_min_improvement = " << num(c.lr.min_improvement) << "\n"
    << "lr_floor = " << num(c.lr.floor) << "\n"
    << "lr_regress_factor = " << num(c.lr.regress_factor) << "\n"
    << "lr_regress_patience = " << c.lr.regress_patience << "\n"
    << "cg_tol = " << num(c.cg_tol) << "\n"
    << "cg_max_iter = " << c.cg_max_iter << "\n"
    << "substeps = " << c.substeps << "\n"
    << "scale = " << b(c.scale) << "\n"
    << "solver = " << to_string(c.solver) << "\n"
    << "dense_cap = " << c.dense_cap << "\n"
    << "dense_param_cap = " << c.dense_param_cap << "\n"
    << "stop_phi = " << num(c.stop_phi) << "\n"
    << "stop_g_inf = " << num(c.stop_g_inf) << "\n"
    << "early_stop = " << b(c.early_stop) << "\n"
    << "freeze_lambda = " << b(c.freeze_lambda) << "\n"
    << "run_ss = " << b(c.run_ss) << "\n";
  return o.str();
}

}  // namespace msnode::cli
