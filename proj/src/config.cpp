#include "nlflow/config.hpp"

#include "nlflow/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace nlflow::exp {

using nlohmann::json;

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"alpha0", "beta0", "alpha_m1", "beta_m1", "alpha_1", "beta_1", "v_max",
                                             "s_st",   "s_go",  "p",        "eta_a",   "eta_b",   "c_d",    "h"};
  return axes;
}

microsim::ControllerParams baseline_controller(const std::string& name) {
  if (name == "car_following") return microsim::car_following_baseline();
  if (name == "look_ahead") return microsim::look_ahead_baseline();
  if (name == "nudging") return microsim::nudging_baseline();
  throw ConfigError("unknown controller model '" + name + "' (car_following, look_ahead, nudging)");
}

namespace {

void allow_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type for '" + std::string(key) + "' in " + where);
  }
}

int parse_index(const std::string& key, const std::string& where) {
  int j = 0;
  const auto* end = key.data() + key.size();
  const char* begin = key.data();
  if (!key.empty() && key[0] == '+') ++begin;
  auto [p, ec] = std::from_chars(begin, end, j);
  if (ec != std::errc() || p != end) throw ConfigError("gain index '" + key + "' in " + where + " is not an integer");
  return j;
}

microsim::ControllerParams parse_controller(const json& j, std::string& model, const std::string& where) {
  if (j.is_string()) {
    model = j.get<std::string>();
    return baseline_controller(model);
  }
  allow_keys(j, {"model", "v_max", "s_st", "s_go", "alpha", "beta", "nudging"}, where);
  read(j, "model", model, where);
  auto p = baseline_controller(model);
  read(j, "v_max", p.vopt.v_max, where);
  read(j, "s_st", p.vopt.s_st, where);
  read(j, "s_go", p.vopt.s_go, where);
  read(j, "nudging", p.nudging, where);
  for (const char* which : {"alpha", "beta"}) {
    if (!j.contains(which)) continue;
    const auto& g = j.at(which);
    if (!g.is_object()) throw ConfigError(std::string(which) + " in " + where + " must map index -> gain");
    for (const auto& [k, v] : g.items()) {
      if (!v.is_number()) throw ConfigError("gain " + k + " in " + where + " must be a number");
      const int idx = parse_index(k, where);
      p.widen_to(idx);
      if (which[0] == 'a') p.set_alpha(idx, v.get<double>());
      else p.set_beta(idx, v.get<double>());
    }
  }
  return p;
}

json controller_json(const microsim::ControllerParams& p, const std::string& model) {
  json a = json::object(), b = json::object();
  for (int k = -p.lookahead(); k <= p.lookbehind(); ++k) {
    a[std::to_string(k)] = p.alpha(k);
    b[std::to_string(k)] = p.beta(k);
  }
  return json{{"model", model}, {"v_max", p.vopt.v_max}, {"s_st", p.vopt.s_st}, {"s_go", p.vopt.s_go},
              {"alpha", a},     {"beta", b},             {"nudging", p.nudging}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  allow_keys(j, {"schema_version", "seed", "output_dir", "ring", "fleet", "cases", "kde", "observations", "kernel",
                 "loss", "training", "sweep"},
             "config");
  if (!j.contains("schema_version")) throw ConfigError("config lacks schema_version");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion) {
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  ExperimentConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  if (j.contains("ring")) {
    const auto& r = j["ring"];
    allow_keys(r, {"length", "vehicle_length", "dt", "horizon", "record_interval", "perturbation"}, "ring");
    read(r, "length", c.ring.length, "ring");
    read(r, "vehicle_length", c.ring.vehicle_length, "ring");
    read(r, "dt", c.ring.dt, "ring");
    read(r, "horizon", c.ring.horizon, "ring");
    read(r, "record_interval", c.ring.record_interval, "ring");
    if (r.contains("perturbation")) {
      const auto& p = r["perturbation"];
      allow_keys(p, {"kind", "vehicle", "drop_fraction", "duration", "amplitude", "mode"}, "ring.perturbation");
      std::string kind = microsim::to_string(c.ring.perturbation.kind);
      read(p, "kind", kind, "ring.perturbation");
      try {
        c.ring.perturbation.kind = microsim::perturbation_kind_from_string(kind);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      read(p, "vehicle", c.ring.perturbation.vehicle, "ring.perturbation");
      read(p, "drop_fraction", c.ring.perturbation.drop_fraction, "ring.perturbation");
      read(p, "duration", c.ring.perturbation.duration, "ring.perturbation");
      read(p, "amplitude", c.ring.perturbation.amplitude, "ring.perturbation");
      read(p, "mode", c.ring.perturbation.mode, "ring.perturbation");
    }
  }
  if (j.contains("fleet")) {
    const auto& f = j["fleet"];
    allow_keys(f, {"hv", "cav", "penetration"}, "fleet");
    if (f.contains("hv")) c.hv = parse_controller(f["hv"], c.hv_model, "fleet.hv");
    if (f.contains("cav")) c.cav = parse_controller(f["cav"], c.cav_model, "fleet.cav");
    read(f, "penetration", c.penetration, "fleet");
  }
  read(j, "cases", c.cases, "config");
  if (j.contains("kde")) {
    const auto& k = j["kde"];
    allow_keys(k, {"bandwidth", "dx", "dt", "truncation"}, "kde");
    read(k, "bandwidth", c.kde.bandwidth, "kde");
    read(k, "dx", c.kde.dx, "kde");
    read(k, "dt", c.kde.dt, "kde");
    read(k, "truncation", c.kde.truncation, "kde");
  }
  if (j.contains("observations")) {
    allow_keys(j["observations"], {"loops"}, "observations");
    read(j["observations"], "loops", c.loops, "observations");
  }
  c.train.dx = c.kde.dx;
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    allow_keys(k, {"eta_a", "eta_b"}, "kernel");
    read(k, "eta_a", c.train.eta_a, "kernel");
    read(k, "eta_b", c.train.eta_b, "kernel");
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    allow_keys(l, {"c_d", "p_omega", "p_v"}, "loss");
    read(l, "c_d", c.train.weights.c_d, "loss");
    read(l, "p_omega", c.train.weights.p_omega, "loss");
    read(l, "p_v", c.train.weights.p_v, "loss");
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    allow_keys(t, {"density_hidden", "fd_hidden", "epochs", "learning_rate", "time_stride", "rho_max", "fd_samples",
                   "v_scale", "local_baseline", "cpu_seconds"},
               "training");
    read(t, "density_hidden", c.train.density_hidden, "training");
    read(t, "fd_hidden", c.train.fd_hidden, "training");
    read(t, "epochs", c.train.epochs, "training");
    read(t, "learning_rate", c.train.learning_rate, "training");
    read(t, "time_stride", c.train.time_stride, "training");
    read(t, "rho_max", c.train.rho_max, "training");
    read(t, "fd_samples", c.train.fd_samples, "training");
    read(t, "v_scale", c.train.v_scale, "training");
    read(t, "local_baseline", c.local_baseline, "training");
    read(t, "cpu_seconds", c.train.cpu_seconds, "training");
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    allow_keys(s, {"axis", "values", "target"}, "sweep");
    read(s, "axis", c.sweep.axis, "sweep");
    read(s, "values", c.sweep.values, "sweep");
    read(s, "target", c.sweep.target, "sweep");
  }
  c.train.seed = c.seed;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  const auto& p = c.ring.perturbation;
  j["ring"] = {{"length", c.ring.length},
               {"vehicle_length", c.ring.vehicle_length},
               {"dt", c.ring.dt},
               {"horizon", c.ring.horizon},
               {"record_interval", c.ring.record_interval},
               {"perturbation",
                {{"kind", microsim::to_string(p.kind)},
                 {"vehicle", p.vehicle},
                 {"drop_fraction", p.drop_fraction},
                 {"duration", p.duration},
                 {"amplitude", p.amplitude},
                 {"mode", p.mode}}}};
  j["fleet"] = {{"hv", controller_json(c.hv, c.hv_model)},
                {"cav", controller_json(c.cav, c.cav_model)},
                {"penetration", c.penetration}};
  j["cases"] = c.cases;
  j["kde"] = {{"bandwidth", c.kde.bandwidth}, {"dx", c.kde.dx}, {"dt", c.kde.dt}, {"truncation", c.kde.truncation}};
  j["observations"] = {{"loops", c.loops}};
  j["kernel"] = {{"eta_a", c.train.eta_a}, {"eta_b", c.train.eta_b}};
  j["loss"] = {{"c_d", c.train.weights.c_d}, {"p_omega", c.train.weights.p_omega}, {"p_v", c.train.weights.p_v}};
  j["training"] = {{"density_hidden", c.train.density_hidden}, {"fd_hidden", c.train.fd_hidden},
                   {"epochs", c.train.epochs},                 {"learning_rate", c.train.learning_rate},
                   {"time_stride", c.train.time_stride},       {"rho_max", c.train.rho_max},
                   {"fd_samples", c.train.fd_samples},         {"v_scale", c.train.v_scale},
                   {"local_baseline", c.local_baseline}, {"cpu_seconds", c.train.cpu_seconds}};
  if (!c.sweep.axis.empty()) j["sweep"] = {{"axis", c.sweep.axis}, {"values", c.sweep.values}, {"target", c.sweep.target}};
  return j.dump(2);
}

void validate(const ExperimentConfig& c) {
  if (c.cases.empty()) throw ConfigError("at least one case (vehicle count) is required");
  for (int n : c.cases) {
    microsim::RingConfig r = c.ring;
    r.vehicles = n;
    try {
      microsim::validate(r);
    } catch (const Error& e) {
      throw ConfigError("case N=" + std::to_string(n) + ": " + e.what());
    }
  }
  try {
    microsim::validate(c.hv);
    microsim::validate(c.cav);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(c.penetration >= 0.0 && c.penetration <= 1.0)) throw ConfigError("penetration must lie in [0, 1]");
  if (!(c.kde.bandwidth > 0.0)) throw ConfigError("kde.bandwidth must be positive");
  if (c.loops < 1) throw ConfigError("observations.loops must be >= 1");
  const auto& t = c.train;
  if (t.epochs < 0) throw ConfigError("training.epochs must be >= 0");
  if (!(t.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
  if (t.time_stride < 1) throw ConfigError("training.time_stride must be >= 1");
  if (!(t.cpu_seconds >= 0.0)) throw ConfigError("training.cpu_seconds must be >= 0");
  if (t.density_hidden.empty() || t.fd_hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  for (int w : t.density_hidden) if (w < 1) throw ConfigError("hidden widths must be positive");
  for (int w : t.fd_hidden) if (w < 1) throw ConfigError("hidden widths must be positive");
  if (!(t.weights.c_d > 0 && t.weights.p_omega > 0 && t.weights.p_v > 0)) throw ConfigError("loss weights must be positive");
  pinn::make_layout(t.eta_a, t.eta_b, c.kde.dx);
  if (!c.sweep.axis.empty()) {
    const auto& axes = sweep_axes();
    if (std::find(axes.begin(), axes.end(), c.sweep.axis) == axes.end()) {
      throw ConfigError("unknown sweep axis '" + c.sweep.axis + "'");
    }
    if (c.sweep.target != "auto" && c.sweep.target != "hv" && c.sweep.target != "cav") {
      throw ConfigError("sweep.target must be auto, hv or cav");
    }
  }
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg, const std::string& axis, double value,
                            const std::string& target) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) throw ConfigError("unknown sweep axis '" + axis + "'");
  ExperimentConfig c = cfg;
  const bool cav = target == "cav" || (target == "auto" && c.penetration > 0.0);
  microsim::ControllerParams& p = cav ? c.cav : c.hv;
  auto gain = [&](bool alpha, int j) {
    p.widen_to(j);
    if (alpha) p.set_alpha(j, value);
    else p.set_beta(j, value);
  };
  if (axis == "alpha0") gain(true, 0);
  else if (axis == "beta0") gain(false, 0);
  else if (axis == "alpha_m1") gain(true, -1);
  else if (axis == "beta_m1") gain(false, -1);
  else if (axis == "alpha_1") gain(true, 1);
  else if (axis == "beta_1") gain(false, 1);
  else if (axis == "v_max") p.vopt.v_max = value;
  else if (axis == "s_st") p.vopt.s_st = value;
  else if (axis == "s_go") p.vopt.s_go = value;
  else if (axis == "p") c.penetration = value;
  else if (axis == "eta_a") c.train.eta_a = value;
  else if (axis == "eta_b") c.train.eta_b = value;
  else if (axis == "c_d") c.train.weights.c_d = value;
  else if (axis == "h") c.kde.bandwidth = value;
  c.sweep = {};
  validate(c);
  return c;
}

}  // namespace nlflow::exp
