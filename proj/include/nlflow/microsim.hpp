#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace nlflow::microsim {

/// Piecewise-linear desired speed: zero below the stopping gap, v_max above
/// the free-flow gap, linear in between.
struct VOptParams {
  double v_max = 17.08;
  double s_st = 1.53;
  double s_go = 24.96;
};

/// Throws ParameterError unless v_max > 0 and 0 < s_st < s_go.
void validate(const VOptParams& p);

double v_opt(double gap, const VOptParams& p);

/// Feedback gains of the look-ahead / look-behind controller.
///
/// Relative index j runs over {-n..m}: j = 0 is the ACC part, j < 0 indexes
/// leaders (look-ahead), j > 0 followers (look-behind). Accessing an index
/// outside that window throws.
class ControllerParams {
 public:
  ControllerParams() : ControllerParams(VOptParams{}, 0, 0) {}
  ControllerParams(VOptParams vopt, int lookahead, int lookbehind);

  int lookahead() const { return lookahead_; }
  int lookbehind() const { return lookbehind_; }

  double alpha(int j) const;
  double beta(int j) const;
  void set_alpha(int j, double gain);
  void set_beta(int j, double gain);

  /// Grow (never shrink) the index window so that j becomes addressable.
  void widen_to(int j);

  VOptParams vopt;
  /// Apply 1(v_follower > v_ego) to the look-behind speed terms.
  bool nudging = false;

 private:
  std::size_t slot(int j) const;

  int lookahead_;
  int lookbehind_;
  std::vector<double> alpha_;
  std::vector<double> beta_;
};

void validate(const ControllerParams& p);

/// Calibrated human-driver baselines: plain car following, car following with
/// look-ahead speed terms, and car following with a one-sided nudging term.
ControllerParams car_following_baseline();
ControllerParams look_ahead_baseline();
ControllerParams nudging_baseline();

struct Perturbation {
  enum class Kind { none, speed_drop, sinusoidal, random };
  Kind kind = Kind::speed_drop;
  int vehicle = 0;
  /// speed_drop: vehicle loses this fraction of v* over `duration` seconds.
  double drop_fraction = 0.2;
  double duration = 2.0;
  /// sinusoidal: position offset amplitude (m) and ring mode number.
  /// random: half-width of uniform speed offsets (m/s).
  double amplitude = 1.0;
  int mode = 1;
};

std::string to_string(Perturbation::Kind kind);
Perturbation::Kind perturbation_kind_from_string(const std::string& name);

struct RingConfig {
  double length = 260.0;
  int vehicles = 10;
  double vehicle_length = 5.0;
  double dt = 0.05;
  double horizon = 300.0;
  /// Spacing of the recorded samples; must be a multiple of dt.
  double record_interval = 1.0;
  std::uint64_t seed = 0;
  Perturbation perturbation;
};

void validate(const RingConfig& cfg);

struct Equilibrium {
  double gap;
  double speed;
};

Equilibrium equilibrium(const RingConfig& cfg, const VOptParams& p);

struct FleetSpec {
  ControllerParams hv = car_following_baseline();
  ControllerParams cav = car_following_baseline();
  double penetration = 0.0;
};

/// Evenly strided CAV slots: round(k * N / n_cav) for k < n_cav with
/// n_cav = round(p * N), halves rounded toward the lower index.
std::vector<int> cav_indices(int vehicles, double penetration);

/// Per-vehicle controller assignment for a fleet.
std::vector<ControllerParams> assign_controllers(int vehicles, const FleetSpec& fleet);

/// Controller output for vehicle `i` on a ring of N = gaps.size() vehicles.
/// Vehicle i follows i-1; indices wrap modulo N.
double controller_accel(int i, std::span<const double> gaps, std::span<const double> speeds,
                        const ControllerParams& params);

/// Recorded trajectories. Rows are time samples, columns vehicles.
struct TrajectorySet {
  std::vector<double> times;
  Eigen::MatrixXd positions;  // wrapped to [0, L)
  Eigen::MatrixXd speeds;
  Eigen::MatrixXd gaps;
  double ring_length = 0.0;
  bool collided = false;
  double collision_time = 0.0;

  int vehicles() const { return static_cast<int>(positions.cols()); }
  int samples() const { return static_cast<int>(positions.rows()); }
};

TrajectorySet simulate(const RingConfig& cfg, const FleetSpec& fleet);

/// Open platoon driven by an exogenous head speed profile v_0(t). Leaders
/// beyond the head are virtual copies of it (head speed, constant gap
/// `gap`); followers beyond the tail mirror the tail. Returns the recorded
/// speeds (rows: samples every `record_interval`, columns: vehicles).
Eigen::MatrixXd simulate_platoon(const ControllerParams& params, int vehicles, double gap,
                                 const std::function<double(double)>& head_speed, double dt,
                                 double horizon, double record_interval);

/// `t,vehicle_id,x,v,s`, one row per (t, vehicle).
void write_trajectory_csv(std::ostream& os, const TrajectorySet& traj);
TrajectorySet read_trajectory_csv(std::istream& is, double ring_length);

}  // namespace nlflow::microsim
