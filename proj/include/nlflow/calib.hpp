#pragma once

#include "nlflow/microsim.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlflow::calib {

enum class Scenario { normal, nudging, lookahead };
enum class Variant { car_following, look_ahead, nudging };

std::string to_string(Scenario s);
std::string to_string(Variant v);
Scenario scenario_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

/// One recorded drive: ego speed/gap plus the surrounding vehicles' speeds,
/// uniformly sampled. Missing signals are NaN.
struct DriveRecord {
  std::string id;
  Scenario scenario = Scenario::normal;
  double period = 0.0;
  std::vector<double> t;
  std::vector<double> v0, s0;
  std::vector<double> v_l1, v_l2, v_l3, v_f1;

  std::size_t size() const { return t.size(); }
};

/// CSV `exp_id,t,v0,s0,v_l1,v_l2,v_l3,v_f1,scenario`. v_l2, v_l3 and v_f1
/// may be absent (column missing or empty) for the normal scenario. Rows are
/// grouped by exp_id in order of first appearance. An empty input yields no
/// records and a warning.
std::vector<DriveRecord> load_records(std::istream& is, std::vector<std::string>* warnings = nullptr);
std::vector<DriveRecord> load_records(const std::string& path, std::vector<std::string>* warnings = nullptr);
void write_records(std::ostream& os, const std::vector<DriveRecord>& records);

struct ModelSpec {
  Variant variant = Variant::car_following;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> lower;
  std::vector<double> upper;

  double get(const std::string& name) const;
  void set(const std::string& name, double value);
};

/// Default bounds and the calibrated baseline values for a variant. Active
/// parameters: alpha0, beta0, v_max, s_st, s_go, plus beta_m1, beta_m2
/// (look-ahead) or beta_1 (nudging).
ModelSpec default_spec(Variant v);

/// Throws ParameterError for non-finite or inverted bounds or a parameter
/// name/value count mismatch.
void validate(const ModelSpec& spec);

microsim::ControllerParams to_controller(const ModelSpec& spec);

struct Rollout {
  std::vector<double> v;
  std::vector<double> s;
};

/// RK4 integration of the ego from the recorded initial state at the
/// record's sampling period; surrounding speeds are linear between samples.
Rollout rollout(const ModelSpec& spec, const DriveRecord& record);

/// Sum of squared relative speed and gap errors; denominators below 0.1
/// are floored at 0.1.
double calibration_error(const ModelSpec& spec, const std::vector<DriveRecord>& records);

struct GaConfig {
  int population = 64;
  int generations = 200;
  int tournament = 3;
  double crossover_rate = 0.9;
  double sbx_eta = 15.0;
  double mutation_rate = 0.1;
  double mutation_eta = 20.0;
  int elitism = 2;
  std::uint64_t seed = 0;
};

struct GaResult {
  ModelSpec spec;
  double error = 0.0;
  double initial_best = 0.0;
  /// Set when the best individual is no better than the initial population.
  bool no_improvement = false;
  std::vector<double> best_per_generation;
};

/// Genetic-algorithm minimization of calibration_error within the bounds
/// of `start` (its values are ignored).
GaResult ga_calibrate(const ModelSpec& start, const std::vector<DriveRecord>& records, const GaConfig& cfg);

std::string spec_to_json(const ModelSpec& spec, double error = -1.0, bool no_improvement = false);
ModelSpec spec_from_json(const std::string& text);

}  // namespace nlflow::calib
