#include "nlflow/calib.hpp"

#include "feedback.hpp"
#include "nlflow/csv.hpp"
#include "nlflow/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace nlflow::calib {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::normal: return "normal";
    case Scenario::nudging: return "nudging";
    case Scenario::lookahead: return "lookahead";
  }
  return "normal";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::car_following: return "car_following";
    case Variant::look_ahead: return "look_ahead";
    case Variant::nudging: return "nudging";
  }
  return "car_following";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "normal") return Scenario::normal;
  if (s == "nudging") return Scenario::nudging;
  if (s == "lookahead") return Scenario::lookahead;
  throw DataError("unknown scenario '" + s + "'");
}

Variant variant_from_string(const std::string& s) {
  if (s == "car_following") return Variant::car_following;
  if (s == "look_ahead") return Variant::look_ahead;
  if (s == "nudging") return Variant::nudging;
  throw ConfigError("unknown model variant '" + s + "'");
}

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_record(const DriveRecord& r) {
  if (r.size() < 2) throw DataError("record '" + r.id + "' needs at least 2 samples");
  const double period = r.t[1] - r.t[0];
  for (std::size_t k = 1; k < r.size(); ++k) {
    const double step = r.t[k] - r.t[k - 1];
    if (!(step > 0.0)) throw DataError("record '" + r.id + "': timestamps not increasing at sample " + std::to_string(k));
    if (std::abs(step - period) > 1e-6 * std::max(1.0, period)) {
      throw DataError("record '" + r.id + "': non-uniform sampling at sample " + std::to_string(k));
    }
  }
}

}  // namespace

std::vector<DriveRecord> load_records(std::istream& is, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  std::string first;
  while (std::getline(is, first)) {
    if (first.find_first_not_of(" \t\r") != std::string::npos) break;
    first.clear();
  }
  if (first.empty()) {
    warn("empty record file");
    return {};
  }
  const auto header = csv::split(first);
  std::map<std::string, std::size_t> col;
  static const std::vector<std::string> known{"exp_id", "t", "v0", "s0", "v_l1", "v_l2", "v_l3", "v_f1", "scenario"};
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(known.begin(), known.end(), header[c]) == known.end()) {
      throw DataError("unknown column '" + header[c] + "' in record header");
    }
    if (!col.emplace(header[c], c).second) throw DataError("duplicate column '" + header[c] + "'");
  }
  for (const char* req : {"exp_id", "t", "v0", "s0", "v_l1", "scenario"}) {
    if (!col.count(req)) throw DataError(std::string("record header lacks column '") + req + "'");
  }

  std::vector<DriveRecord> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::string> r;
  long line = 1;
  while (csv::next_row(is, r, line)) {
    const std::string where = "line " + std::to_string(line);
    if (r.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
    auto num = [&](const char* name, bool required) {
      const auto it = col.find(name);
      if (it == col.end() || r[it->second].empty()) {
        if (required) throw DataError(where + ": missing value for " + name);
        return kNaN;
      }
      return csv::to_double(r[it->second], where + " column " + name);
    };
    const std::string id = r[col["exp_id"]];
    if (id.empty()) throw DataError(where + ": empty exp_id");
    Scenario sc;
    try {
      sc = scenario_from_string(r[col["scenario"]]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    auto [it, fresh] = index.emplace(id, out.size());
    if (fresh) {
      out.push_back({});
      out.back().id = id;
      out.back().scenario = sc;
    }
    DriveRecord& rec = out[it->second];
    if (rec.scenario != sc) throw DataError(where + ": scenario changes within record '" + id + "'");
    const bool full = sc != Scenario::normal;
    const double t = num("t", true), v0 = num("v0", true), s0 = num("s0", true), l1 = num("v_l1", true);
    const double l2 = num("v_l2", full), l3 = num("v_l3", full), f1 = num("v_f1", sc == Scenario::nudging);
    for (double v : {v0, l1, l2, l3, f1}) {
      if (v < 0.0) throw DataError(where + ": negative speed");
    }
    if (!(s0 > 0.0)) throw DataError(where + ": gap must be positive");
    if (!rec.t.empty() && !(t > rec.t.back())) {
      throw DataError(where + ": timestamps of record '" + id + "' are not increasing");
    }
    rec.t.push_back(t);
    rec.v0.push_back(v0);
    rec.s0.push_back(s0);
    rec.v_l1.push_back(l1);
    rec.v_l2.push_back(l2);
    rec.v_l3.push_back(l3);
    rec.v_f1.push_back(f1);
  }
  if (out.empty()) warn("record file has a header but no rows");
  for (auto& rec : out) {
    check_record(rec);
    rec.period = rec.t[1] - rec.t[0];
  }
  return out;
}

std::vector<DriveRecord> load_records(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_records(in, warnings);
}

void write_records(std::ostream& os, const std::vector<DriveRecord>& records) {
  os << "exp_id,t,v0,s0,v_l1,v_l2,v_l3,v_f1,scenario\n" << std::setprecision(17);
  auto field = [&](double v) {
    if (!std::isnan(v)) os << v;
  };
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      os << r.id << ',' << r.t[k] << ',' << r.v0[k] << ',' << r.s0[k] << ',' << r.v_l1[k] << ',';
      field(r.v_l2[k]);
      os << ',';
      field(r.v_l3[k]);
      os << ',';
      field(r.v_f1[k]);
      os << ',' << to_string(r.scenario) << '\n';
    }
  }
}

double ModelSpec::get(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("parameter '" + name + "' is not active for " + to_string(variant));
  return values[static_cast<std::size_t>(it - names.begin())];
}

void ModelSpec::set(const std::string& name, double value) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("parameter '" + name + "' is not active for " + to_string(variant));
  values[static_cast<std::size_t>(it - names.begin())] = value;
}

ModelSpec default_spec(Variant v) {
  ModelSpec s;
  s.variant = v;
  microsim::ControllerParams base = v == Variant::look_ahead ? microsim::look_ahead_baseline()
                                    : v == Variant::nudging  ? microsim::nudging_baseline()
                                                             : microsim::car_following_baseline();
  auto add = [&](const char* name, double value, double lo, double hi) {
    s.names.push_back(name);
    s.values.push_back(value);
    s.lower.push_back(lo);
    s.upper.push_back(hi);
  };
  add("alpha0", base.alpha(0), 0.0, 1.0);
  add("beta0", base.beta(0), 0.0, 2.0);
  add("v_max", base.vopt.v_max, 5.0, 40.0);
  add("s_st", base.vopt.s_st, 0.0, 5.0);
  add("s_go", base.vopt.s_go, 10.0, 60.0);
  if (v == Variant::look_ahead) {
    add("beta_m1", base.beta(-1), 0.0, 1.0);
    add("beta_m2", base.beta(-2), 0.0, 1.0);
  } else if (v == Variant::nudging) {
    add("beta_1", base.beta(1), 0.0, 1.0);
  }
  return s;
}

void validate(const ModelSpec& spec) {
  const auto ref = default_spec(spec.variant);
  if (spec.names != ref.names) throw ParameterError("parameter names do not match the " + to_string(spec.variant) + " variant");
  const std::size_t n = spec.names.size();
  if (spec.values.size() != n || spec.lower.size() != n || spec.upper.size() != n) {
    throw ParameterError("parameter vector and bounds must have one entry per name");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(spec.lower[k]) || !std::isfinite(spec.upper[k]) || spec.lower[k] > spec.upper[k]) {
      throw ParameterError("invalid bounds for " + spec.names[k]);
    }
  }
}

microsim::ControllerParams to_controller(const ModelSpec& spec) {
  validate(spec);
  microsim::VOptParams vo{spec.get("v_max"), spec.get("s_st"), spec.get("s_go")};
  const int ahead = spec.variant == Variant::look_ahead ? 2 : 0;
  const int behind = spec.variant == Variant::nudging ? 1 : 0;
  microsim::ControllerParams p(vo, ahead, behind);
  p.set_alpha(0, spec.get("alpha0"));
  p.set_beta(0, spec.get("beta0"));
  if (ahead) {
    p.set_beta(-1, spec.get("beta_m1"));
    p.set_beta(-2, spec.get("beta_m2"));
  }
  if (behind) {
    p.set_beta(1, spec.get("beta_1"));
    p.nudging = true;
  }
  return p;
}

namespace {

struct Signals {
  double l1, l2, l3, f1;
};

Signals signals_at(const DriveRecord& r, std::size_t k, double frac) {
  auto lerp = [&](const std::vector<double>& x) {
    if (x.size() != r.size()) return kNaN;
    return frac == 0.0 ? x[k] : x[k] + frac * (x[k + 1] - x[k]);
  };
  return {lerp(r.v_l1), lerp(r.v_l2), lerp(r.v_l3), lerp(r.v_f1)};
}

double ego_accel(double s, double v, const Signals& sig, const microsim::ControllerParams& p) {
  auto speed = [&](int j) {
    switch (j) {
      case 0: return v;
      case -1: return sig.l1;
      case -2: return sig.l2;
      case -3: return sig.l3;
      case 1: return sig.f1;
      default: return v;
    }
  };
  // Only the ego gap enters with a nonzero gain for the calibrated variants.
  auto gap = [&](int) { return s; };
  return microsim::detail::feedback(0, gap, speed, p);
}

void require_signals(const DriveRecord& r, Variant v) {
  if (r.v0.size() != r.size() || r.s0.size() != r.size() || r.v_l1.size() != r.size()) {
    throw DataError("record '" + r.id + "' has signals of unequal length");
  }
  auto has = [&](const std::vector<double>& x) {
    return x.size() == r.size() && std::none_of(x.begin(), x.end(), [](double y) { return std::isnan(y); });
  };
  if (v == Variant::look_ahead && !(has(r.v_l2) && has(r.v_l3))) {
    throw DataError("record '" + r.id + "' lacks v_l2/v_l3 needed by the look_ahead variant");
  }
  if (v == Variant::nudging && !has(r.v_f1)) {
    throw DataError("record '" + r.id + "' lacks v_f1 needed by the nudging variant");
  }
}

Rollout rollout_with(const microsim::ControllerParams& p, Variant variant, const DriveRecord& r) {
  if (r.size() < 2) throw DataError("record '" + r.id + "' needs at least 2 samples");
  require_signals(r, variant);
  Rollout out;
  out.v.resize(r.size());
  out.s.resize(r.size());
  double s = r.s0[0], v = r.v0[0];
  out.s[0] = s;
  out.v[0] = v;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    const double h = r.t[k + 1] - r.t[k];
    const Signals a = signals_at(r, k, 0.0), m = signals_at(r, k, 0.5), b = signals_at(r, k, 1.0);
    const double k1s = a.l1 - v, k1v = ego_accel(s, v, a, p);
    const double s2 = s + 0.5 * h * k1s, v2 = v + 0.5 * h * k1v;
    const double k2s = m.l1 - v2, k2v = ego_accel(s2, v2, m, p);
    const double s3 = s + 0.5 * h * k2s, v3 = v + 0.5 * h * k2v;
    const double k3s = m.l1 - v3, k3v = ego_accel(s3, v3, m, p);
    const double s4 = s + h * k3s, v4 = v + h * k3v;
    const double k4s = b.l1 - v4, k4v = ego_accel(s4, v4, b, p);
    s += h / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s);
    v = std::max(0.0, v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v));
    out.s[k + 1] = s;
    out.v[k + 1] = v;
  }
  return out;
}

double error_with(const microsim::ControllerParams& p, Variant variant, const std::vector<DriveRecord>& records) {
  double total = 0.0;
  for (const auto& r : records) {
    const Rollout ro = rollout_with(p, variant, r);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double ev = (ro.v[k] - r.v0[k]) / std::max(std::abs(r.v0[k]), 0.1);
      const double es = (ro.s[k] - r.s0[k]) / std::max(std::abs(r.s0[k]), 0.1);
      total += ev * ev + es * es;
    }
  }
  return total;
}

}  // namespace

Rollout rollout(const ModelSpec& spec, const DriveRecord& record) {
  return rollout_with(to_controller(spec), spec.variant, record);
}

double calibration_error(const ModelSpec& spec, const std::vector<DriveRecord>& records) {
  return error_with(to_controller(spec), spec.variant, records);
}

namespace {

double fitness(const ModelSpec& proto, const std::vector<double>& genes, const std::vector<DriveRecord>& records) {
  ModelSpec s = proto;
  s.values = genes;
  try {
    microsim::ControllerParams p = to_controller(s);
    microsim::validate(p.vopt);
    const double e = error_with(p, s.variant, records);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
  } catch (const ParameterError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

GaResult ga_calibrate(const ModelSpec& start, const std::vector<DriveRecord>& records, const GaConfig& cfg) {
  validate(start);
  if (records.empty()) throw DataError("calibration needs at least one record");
  if (cfg.population < 2 || cfg.generations < 0 || cfg.tournament < 1 || cfg.elitism < 0 ||
      cfg.elitism > cfg.population) {
    throw ConfigError("invalid genetic-algorithm settings");
  }
  for (const auto& r : records) require_signals(r, start.variant);
  const std::size_t dim = start.names.size();
  const auto& lo = start.lower;
  const auto& hi = start.upper;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  using Genome = std::vector<double>;
  std::vector<Genome> pop(static_cast<std::size_t>(cfg.population), Genome(dim));
  for (auto& g : pop) {
    for (std::size_t d = 0; d < dim; ++d) g[d] = lo[d] + unit(rng) * (hi[d] - lo[d]);
  }
  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness(start, pop[i], records);

  auto ranked = [&]() {
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    return order;
  };
  auto tournament = [&]() -> const Genome& {
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    std::size_t best = pick(rng);
    for (int k = 1; k < cfg.tournament; ++k) {
      const std::size_t c = pick(rng);
      if (fit[c] < fit[best]) best = c;
    }
    return pop[best];
  };
  auto sbx = [&](Genome& a, Genome& b) {
    const double e = cfg.sbx_eta;
    for (std::size_t d = 0; d < dim; ++d) {
      if (unit(rng) > 0.5 || std::abs(a[d] - b[d]) < 1e-14 || hi[d] == lo[d]) continue;
      const double y1 = std::min(a[d], b[d]), y2 = std::max(a[d], b[d]);
      const double u = unit(rng);
      auto child = [&](double beta) {
        const double alpha = 2.0 - std::pow(beta, -(e + 1.0));
        return u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (e + 1.0))
                                : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (e + 1.0));
      };
      const double bq1 = child(1.0 + 2.0 * (y1 - lo[d]) / (y2 - y1));
      const double bq2 = child(1.0 + 2.0 * (hi[d] - y2) / (y2 - y1));
      double c1 = std::clamp(0.5 * ((y1 + y2) - bq1 * (y2 - y1)), lo[d], hi[d]);
      double c2 = std::clamp(0.5 * ((y1 + y2) + bq2 * (y2 - y1)), lo[d], hi[d]);
      if (unit(rng) < 0.5) std::swap(c1, c2);
      a[d] = c1;
      b[d] = c2;
    }
  };
  auto mutate = [&](Genome& g) {
    const double e = cfg.mutation_eta;
    for (std::size_t d = 0; d < dim; ++d) {
      if (unit(rng) >= cfg.mutation_rate || hi[d] == lo[d]) continue;
      const double span = hi[d] - lo[d];
      const double d1 = (g[d] - lo[d]) / span, d2 = (hi[d] - g[d]) / span;
      const double u = unit(rng);
      const double p = 1.0 / (e + 1.0);
      double dq;
      if (u < 0.5) {
        const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, e + 1.0);
        dq = std::pow(val, p) - 1.0;
      } else {
        const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, e + 1.0);
        dq = 1.0 - std::pow(val, p);
      }
      g[d] = std::clamp(g[d] + dq * span, lo[d], hi[d]);
    }
  };

  GaResult res;
  auto order = ranked();
  res.initial_best = fit[order.front()];
  res.best_per_generation.push_back(res.initial_best);
  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Genome> next;
    std::vector<double> next_fit;
    for (int e = 0; e < cfg.elitism; ++e) {
      next.push_back(pop[order[static_cast<std::size_t>(e)]]);
      next_fit.push_back(fit[order[static_cast<std::size_t>(e)]]);
    }
    while (next.size() < pop.size()) {
      Genome a = tournament(), b = tournament();
      if (unit(rng) < cfg.crossover_rate) sbx(a, b);
      mutate(a);
      mutate(b);
      next.push_back(std::move(a));
      next_fit.push_back(fitness(start, next.back(), records));
      if (next.size() < pop.size()) {
        next.push_back(std::move(b));
        next_fit.push_back(fitness(start, next.back(), records));
      }
    }
    pop = std::move(next);
    fit = std::move(next_fit);
    order = ranked();
    res.best_per_generation.push_back(fit[order.front()]);
  }
  res.spec = start;
  res.spec.values = pop[order.front()];
  res.error = fit[order.front()];
  res.no_improvement = !(res.error < res.initial_best);
  return res;
}

std::string spec_to_json(const ModelSpec& spec, double error, bool no_improvement) {
  validate(spec);
  nlohmann::json j;
  j["format"] = "nlflow-modelspec";
  j["version"] = 1;
  j["variant"] = to_string(spec.variant);
  nlohmann::json params = nlohmann::json::object(), bounds = nlohmann::json::object();
  for (std::size_t k = 0; k < spec.names.size(); ++k) {
    params[spec.names[k]] = spec.values[k];
    bounds[spec.names[k]] = {spec.lower[k], spec.upper[k]};
  }
  j["parameters"] = params;
  j["bounds"] = bounds;
  if (error >= 0.0) {
    j["error"] = error;
    j["no_improvement"] = no_improvement;
  }
  return j.dump(2);
}

ModelSpec spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "nlflow-modelspec" || j.at("version") != 1) throw DataError("unsupported model spec");
    ModelSpec s = default_spec(variant_from_string(j.at("variant").get<std::string>()));
    for (std::size_t k = 0; k < s.names.size(); ++k) {
      if (j.contains("parameters") && j["parameters"].contains(s.names[k])) {
        s.values[k] = j["parameters"][s.names[k]].get<double>();
      }
      if (j.contains("bounds") && j["bounds"].contains(s.names[k])) {
        const auto b = j["bounds"][s.names[k]].get<std::vector<double>>();
        if (b.size() != 2) throw DataError("bounds for " + s.names[k] + " must be [lo, hi]");
        s.lower[k] = b[0];
        s.upper[k] = b[1];
      }
    }
    const auto given = j.value("parameters", nlohmann::json::object());
    for (const auto& [key, value] : given.items()) {
      if (std::find(s.names.begin(), s.names.end(), key) == s.names.end()) {
        throw ConfigError("parameter '" + key + "' is not active for " + to_string(s.variant));
      }
    }
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model spec: ") + e.what());
  }
}

}  // namespace nlflow::calib
