#pragma once

#include "nlflow/macrorecon.hpp"
#include "nlflow/microsim.hpp"
#include "nlflow/pinn/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nlflow::exp {

inline constexpr int kSchemaVersion = 1;

struct SweepSpec {
  std::string axis;
  std::vector<double> values;
  /// Controller class the gain/FD axes act on: "hv", "cav", or "auto"
  /// (cav when penetration > 0, else hv).
  std::string target = "auto";
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  microsim::RingConfig ring;
  std::string hv_model = "car_following";
  microsim::ControllerParams hv = microsim::car_following_baseline();
  std::string cav_model = "car_following";
  microsim::ControllerParams cav = microsim::car_following_baseline();
  double penetration = 0.0;
  std::vector<int> cases = {10, 13, 16, 19};
  macro::ReconstructOptions kde;
  int loops = 5;
  pinn::TrainConfig train;
  /// Also train the local-LWR baseline (kernel frozen to a unit spike).
  bool local_baseline = true;
  SweepSpec sweep;

  microsim::FleetSpec fleet() const { return {hv, cav, penetration}; }
};

/// The sweepable axes, in documentation order.
const std::vector<std::string>& sweep_axes();

/// Parses and validates a config document. Unknown keys, wrong types or an
/// unsupported schema_version raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

/// Cross-field checks (ring fits every case, grid divides domain, ...).
void validate(const ExperimentConfig& cfg);

/// Copy of `cfg` with `axis` set to `value`. Unknown axis -> ConfigError.
ExperimentConfig apply_axis(const ExperimentConfig& cfg, const std::string& axis, double value,
                            const std::string& target = "auto");

/// Named baseline controller: car_following, look_ahead, nudging.
microsim::ControllerParams baseline_controller(const std::string& name);

}  // namespace nlflow::exp
