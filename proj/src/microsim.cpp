#include "nlflow/microsim.hpp"

#include "feedback.hpp"
#include "nlflow/csv.hpp"
#include "nlflow/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace nlflow::microsim {

void validate(const VOptParams& p) {
  if (!(std::isfinite(p.v_max) && p.v_max > 0.0)) throw ParameterError("v_max must be positive");
  if (!(std::isfinite(p.s_st) && p.s_st > 0.0)) throw ParameterError("s_st must be positive");
  if (!(std::isfinite(p.s_go) && p.s_go > p.s_st)) throw ParameterError("s_go must exceed s_st");
}

double v_opt(double gap, const VOptParams& p) {
  if (gap <= p.s_st) return 0.0;
  if (gap >= p.s_go) return p.v_max;
  return p.v_max * (gap - p.s_st) / (p.s_go - p.s_st);
}

ControllerParams::ControllerParams(VOptParams vopt_, int lookahead, int lookbehind)
    : vopt(vopt_), lookahead_(lookahead), lookbehind_(lookbehind) {
  if (lookahead < 0 || lookbehind < 0) throw ParameterError("look-ahead/behind counts must be >= 0");
  alpha_.assign(static_cast<std::size_t>(lookahead + lookbehind + 1), 0.0);
  beta_ = alpha_;
}

std::size_t ControllerParams::slot(int j) const {
  if (j < -lookahead_ || j > lookbehind_) {
    throw ParameterError("gain index " + std::to_string(j) + " outside window [-" +
                         std::to_string(lookahead_) + ", " + std::to_string(lookbehind_) + "]");
  }
  return static_cast<std::size_t>(j + lookahead_);
}

double ControllerParams::alpha(int j) const { return alpha_[slot(j)]; }
double ControllerParams::beta(int j) const { return beta_[slot(j)]; }
void ControllerParams::set_alpha(int j, double gain) { alpha_[slot(j)] = gain; }
void ControllerParams::set_beta(int j, double gain) { beta_[slot(j)] = gain; }

void ControllerParams::widen_to(int j) {
  const int n = std::max(lookahead_, -j);
  const int m = std::max(lookbehind_, j);
  if (n == lookahead_ && m == lookbehind_) return;
  std::vector<double> a(static_cast<std::size_t>(n + m + 1), 0.0), b = a;
  for (int k = -lookahead_; k <= lookbehind_; ++k) {
    a[static_cast<std::size_t>(k + n)] = alpha(k);
    b[static_cast<std::size_t>(k + n)] = beta(k);
  }
  alpha_ = std::move(a);
  beta_ = std::move(b);
  lookahead_ = n;
  lookbehind_ = m;
}

void validate(const ControllerParams& p) {
  validate(p.vopt);
  if (p.alpha(0) < 0.0 || p.beta(0) < 0.0) throw ParameterError("ACC gains must be >= 0");
  for (int j = -p.lookahead(); j <= p.lookbehind(); ++j) {
    if (!std::isfinite(p.alpha(j)) || !std::isfinite(p.beta(j))) {
      throw ParameterError("controller gains must be finite");
    }
  }
}

ControllerParams car_following_baseline() {
  ControllerParams p({17.08, 1.53, 24.96}, 0, 0);
  p.set_alpha(0, 0.011);
  p.set_beta(0, 0.718);
  return p;
}

ControllerParams look_ahead_baseline() {
  ControllerParams p({26.53, 1.12, 27.97}, 2, 0);
  p.set_alpha(0, 0.027);
  p.set_beta(0, 0.965);
  p.set_beta(-1, 0.0500);
  p.set_beta(-2, 0.0082);
  return p;
}

ControllerParams nudging_baseline() {
  ControllerParams p({16.24, 1.00, 21.40}, 0, 1);
  p.set_alpha(0, 0.014);
  p.set_beta(0, 0.789);
  p.set_beta(1, 0.092);
  p.nudging = true;
  return p;
}

std::string to_string(Perturbation::Kind kind) {
  switch (kind) {
    case Perturbation::Kind::none: return "none";
    case Perturbation::Kind::speed_drop: return "speed_drop";
    case Perturbation::Kind::sinusoidal: return "sinusoidal";
    case Perturbation::Kind::random: return "random";
  }
  return "none";
}

Perturbation::Kind perturbation_kind_from_string(const std::string& name) {
  if (name == "none") return Perturbation::Kind::none;
  if (name == "speed_drop") return Perturbation::Kind::speed_drop;
  if (name == "sinusoidal") return Perturbation::Kind::sinusoidal;
  if (name == "random") return Perturbation::Kind::random;
  throw ConfigError("unknown perturbation kind '" + name + "'");
}

void validate(const RingConfig& cfg) {
  if (cfg.vehicles < 1) throw ConfigError("need at least one vehicle");
  if (!(cfg.vehicle_length >= 0.0)) throw ConfigError("vehicle length must be >= 0");
  if (!(cfg.length > cfg.vehicles * cfg.vehicle_length)) {
    throw ConfigError("ring length must exceed N * l (positive equilibrium gap)");
  }
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(cfg.horizon > 0.0)) throw ConfigError("horizon must be positive");
  const double ratio = cfg.record_interval / cfg.dt;
  if (!(cfg.record_interval > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("record interval must be a positive multiple of dt");
  }
  const auto& pert = cfg.perturbation;
  if (pert.vehicle < 0 || pert.vehicle >= cfg.vehicles) {
    throw ConfigError("perturbed vehicle index out of range");
  }
  if (pert.kind == Perturbation::Kind::speed_drop &&
      (pert.drop_fraction < 0.0 || pert.drop_fraction > 1.0 || !(pert.duration > 0.0))) {
    throw ConfigError("speed drop needs fraction in [0,1] and positive duration");
  }
}

Equilibrium equilibrium(const RingConfig& cfg, const VOptParams& p) {
  const double gap = cfg.length / cfg.vehicles - cfg.vehicle_length;
  if (!(gap > 0.0)) throw ConfigError("non-positive equilibrium gap");
  return {gap, v_opt(gap, p)};
}

std::vector<int> cav_indices(int vehicles, double penetration) {
  if (penetration < 0.0 || penetration > 1.0) throw ConfigError("penetration must lie in [0, 1]");
  const int count = static_cast<int>(std::lround(penetration * vehicles));
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double pos = static_cast<double>(k) * vehicles / count;
    idx.push_back(static_cast<int>(std::ceil(pos - 0.5)));
  }
  return idx;
}

std::vector<ControllerParams> assign_controllers(int vehicles, const FleetSpec& fleet) {
  std::vector<ControllerParams> out(static_cast<std::size_t>(vehicles), fleet.hv);
  for (int i : cav_indices(vehicles, fleet.penetration)) out[static_cast<std::size_t>(i)] = fleet.cav;
  return out;
}

double controller_accel(int i, std::span<const double> gaps, std::span<const double> speeds,
                        const ControllerParams& params) {
  const int n = static_cast<int>(gaps.size());
  auto wrap = [n](int k) { return static_cast<std::size_t>(((k % n) + n) % n); };
  return detail::feedback(
      i, [&](int k) { return gaps[wrap(k)]; }, [&](int k) { return speeds[wrap(k)]; }, params);
}

namespace {

bool same_vopt(const std::vector<ControllerParams>& ctrl) {
  for (const auto& c : ctrl) {
    if (c.vopt.v_max != ctrl.front().vopt.v_max || c.vopt.s_st != ctrl.front().vopt.s_st ||
        c.vopt.s_go != ctrl.front().vopt.s_go) {
      return false;
    }
  }
  return true;
}

double inverse_vopt(double v, const VOptParams& p) {
  return p.s_st + v * (p.s_go - p.s_st) / p.v_max;
}

// Common-speed equilibrium of a heterogeneous ring: gaps s_i = V_i^{-1}(v)
// summing to L - N l. Homogeneous rings use s* = L/N - l directly so that the
// initial state is an exact fixed point.
void mixed_equilibrium(const RingConfig& cfg, const std::vector<ControllerParams>& ctrl,
                       Eigen::VectorXd& gaps, double& speed) {
  const int n = cfg.vehicles;
  gaps.resize(n);
  if (same_vopt(ctrl)) {
    const auto eq = equilibrium(cfg, ctrl.front().vopt);
    gaps.setConstant(eq.gap);
    speed = eq.speed;
    return;
  }
  const double total = cfg.length - n * cfg.vehicle_length;
  double vmin = ctrl.front().vopt.v_max;
  double st_sum = 0.0;
  for (const auto& c : ctrl) {
    vmin = std::min(vmin, c.vopt.v_max);
    st_sum += c.vopt.s_st;
  }
  auto total_at = [&](double v) {
    double s = 0.0;
    for (const auto& c : ctrl) s += inverse_vopt(v, c.vopt);
    return s;
  };
  if (total <= st_sum) {
    speed = 0.0;
    for (int i = 0; i < n; ++i) gaps[i] = ctrl[static_cast<std::size_t>(i)].vopt.s_st * total / st_sum;
    return;
  }
  if (total >= total_at(vmin)) {
    speed = vmin;
    int saturated = 0;
    for (const auto& c : ctrl) saturated += (c.vopt.v_max == vmin);
    const double extra = (total - total_at(vmin)) / saturated;
    for (int i = 0; i < n; ++i) {
      const auto& p = ctrl[static_cast<std::size_t>(i)].vopt;
      gaps[i] = inverse_vopt(vmin, p) + (p.v_max == vmin ? extra : 0.0);
    }
    return;
  }
  double lo = 0.0, hi = vmin;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total_at(mid) < total ? lo : hi) = mid;
  }
  speed = 0.5 * (lo + hi);
  for (int i = 0; i < n; ++i) gaps[i] = inverse_vopt(speed, ctrl[static_cast<std::size_t>(i)].vopt);
  // Close the ring exactly.
  gaps[n - 1] += total - gaps.sum();
}

double wrap_position(double x, double L) {
  double w = std::fmod(x, L);
  if (w < 0.0) w += L;
  if (w >= L) w = 0.0;
  return w;
}

struct RingState {
  Eigen::VectorXd s, v, x;
};

}  // namespace

TrajectorySet simulate(const RingConfig& cfg, const FleetSpec& fleet) {
  validate(cfg);
  validate(fleet.hv);
  validate(fleet.cav);
  const int n = cfg.vehicles;
  const auto ctrl = assign_controllers(n, fleet);

  RingState state;
  double v_star = 0.0;
  mixed_equilibrium(cfg, ctrl, state.s, v_star);
  state.v = Eigen::VectorXd::Constant(n, v_star);

  const auto& pert = cfg.perturbation;
  if (pert.kind == Perturbation::Kind::sinusoidal) {
    Eigen::VectorXd offset(n);
    for (int i = 0; i < n; ++i) offset[i] = pert.amplitude * std::sin(2.0 * M_PI * pert.mode * i / n);
    for (int i = 0; i < n; ++i) state.s[i] += offset[(i + n - 1) % n] - offset[i];
  } else if (pert.kind == Perturbation::Kind::random) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(-pert.amplitude, pert.amplitude);
    for (int i = 0; i < n; ++i) state.v[i] = std::max(0.0, state.v[i] + dist(rng));
  }
  state.x.resize(n);
  state.x[0] = 0.0;
  for (int i = 1; i < n; ++i) state.x[i] = state.x[i - 1] - state.s[i] - cfg.vehicle_length;

  const double forced = pert.kind == Perturbation::Kind::speed_drop
                            ? -pert.drop_fraction * state.v[pert.vehicle] / pert.duration
                            : 0.0;

  auto accel = [&](double t, const Eigen::VectorXd& s, const Eigen::VectorXd& v) {
    Eigen::VectorXd a(n);
    const std::span<const double> gs(s.data(), static_cast<std::size_t>(n));
    const std::span<const double> vs(v.data(), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) a[i] = controller_accel(i, gs, vs, ctrl[static_cast<std::size_t>(i)]);
    if (pert.kind == Perturbation::Kind::speed_drop && t < pert.duration) a[pert.vehicle] = forced;
    return a;
  };
  auto gap_rate = [n](const Eigen::VectorXd& v) {
    Eigen::VectorXd ds(n);
    ds[0] = v[n - 1] - v[0];
    ds.tail(n - 1) = v.head(n - 1) - v.tail(n - 1);
    return ds;
  };

  const long steps = std::lround(cfg.horizon / cfg.dt);
  const long every = std::lround(cfg.record_interval / cfg.dt);
  const long records = steps / every + 1;

  TrajectorySet out;
  out.ring_length = cfg.length;
  out.times.reserve(static_cast<std::size_t>(records));
  out.positions.resize(records, n);
  out.speeds.resize(records, n);
  out.gaps.resize(records, n);

  long recorded = 0;
  auto record = [&](long step) {
    out.times.push_back(static_cast<double>(step / every) * cfg.record_interval);
    for (int i = 0; i < n; ++i) out.positions(recorded, i) = wrap_position(state.x[i], cfg.length);
    out.speeds.row(recorded) = state.v.transpose();
    out.gaps.row(recorded) = state.s.transpose();
    ++recorded;
  };
  record(0);

  const double h = cfg.dt;
  for (long step = 1; step <= steps; ++step) {
    const double t = (step - 1) * h;
    const Eigen::VectorXd& s0 = state.s;
    const Eigen::VectorXd& v0 = state.v;
    const Eigen::VectorXd k1v = accel(t, s0, v0);
    const Eigen::VectorXd k1s = gap_rate(v0);
    const Eigen::VectorXd v1 = v0 + 0.5 * h * k1v, s1 = s0 + 0.5 * h * k1s;
    const Eigen::VectorXd k2v = accel(t + 0.5 * h, s1, v1);
    const Eigen::VectorXd k2s = gap_rate(v1);
    const Eigen::VectorXd v2 = v0 + 0.5 * h * k2v, s2 = s0 + 0.5 * h * k2s;
    const Eigen::VectorXd k3v = accel(t + 0.5 * h, s2, v2);
    const Eigen::VectorXd k3s = gap_rate(v2);
    const Eigen::VectorXd v3 = v0 + h * k3v, s3 = s0 + h * k3s;
    const Eigen::VectorXd k4v = accel(t + h, s3, v3);
    const Eigen::VectorXd k4s = gap_rate(v3);

    state.x += (h / 6.0) * (v0 + 2.0 * v1 + 2.0 * v2 + v3);
    state.s += (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
    state.v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    state.v = state.v.cwiseMax(0.0);

    if ((state.s.array() <= 0.0).any()) {
      out.collided = true;
      out.collision_time = step * h;
      break;
    }
    if (step % every == 0) record(step);
  }

  out.positions.conservativeResize(recorded, n);
  out.speeds.conservativeResize(recorded, n);
  out.gaps.conservativeResize(recorded, n);
  return out;
}

void write_trajectory_csv(std::ostream& os, const TrajectorySet& traj) {
  os << "t,vehicle_id,x,v,s\n";
  os << std::setprecision(17);
  for (int k = 0; k < traj.samples(); ++k) {
    for (int i = 0; i < traj.vehicles(); ++i) {
      os << traj.times[static_cast<std::size_t>(k)] << ',' << i << ',' << traj.positions(k, i) << ','
         << traj.speeds(k, i) << ',' << traj.gaps(k, i) << '\n';
    }
  }
}

TrajectorySet read_trajectory_csv(std::istream& is, double ring_length) {
  const auto header = csv::read_header(is);
  const std::vector<std::string> expected{"t", "vehicle_id", "x", "v", "s"};
  if (header != expected) throw DataError("trajectory CSV header must be t,vehicle_id,x,v,s");

  std::map<double, std::map<long, std::array<double, 3>>> rows;
  std::vector<std::string> f;
  long line = 1;
  while (csv::next_row(is, f, line)) {
    const std::string where = "line " + std::to_string(line);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields");
    const double t = csv::to_double(f[0], where);
    const long id = csv::to_long(f[1], where);
    rows[t][id] = {csv::to_double(f[2], where), csv::to_double(f[3], where),
                   csv::to_double(f[4], where)};
  }
  TrajectorySet out;
  out.ring_length = ring_length;
  if (rows.empty()) return out;
  const long n = static_cast<long>(rows.begin()->second.size());
  out.positions.resize(static_cast<Eigen::Index>(rows.size()), n);
  out.speeds.resizeLike(out.positions);
  out.gaps.resizeLike(out.positions);
  Eigen::Index k = 0;
  for (const auto& [t, vehicles] : rows) {
    if (static_cast<long>(vehicles.size()) != n) {
      throw DataError("time " + std::to_string(t) + " has a different vehicle count");
    }
    out.times.push_back(t);
    for (const auto& [id, vals] : vehicles) {
      if (id < 0 || id >= n) throw DataError("vehicle ids must be 0..N-1");
      out.positions(k, id) = vals[0];
      out.speeds(k, id) = vals[1];
      out.gaps(k, id) = vals[2];
    }
    ++k;
  }
  return out;
}

}  // namespace nlflow::microsim
