#pragma once

#include "nlflow/config.hpp"
#include "nlflow/stability.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace nlflow::exp {

enum class Stage { simulate, reconstruct, train, evaluate };

struct CaseResult {
  int vehicles = 0;
  bool collided = false;
  double mass_error = 0.0;  // max over t of |dx sum rho - N| / N
  double error_nonlocal = -1.0;
  double error_local = -1.0;
};

struct EvalReport {
  std::string run_dir;
  std::vector<CaseResult> cases;
  double error_nonlocal = -1.0;  // mean over cases
  double error_local = -1.0;
  std::vector<double> kernel;
  pinn::KernelLayout layout;
  double kernel_mass_5m = 0.0;
  double kernel_mean = 0.0;
  double scatter_rho = -1.0;
  double scatter_rho_eta = -1.0;
  bool scatter_degenerate = false;
  std::vector<double> fd_rho, fd_speed;
  int epochs_nonlocal = 0;
  int epochs_local = 0;
  /// Largest well-posedness hinge of the trained nonlocal model.
  double constraint_violation = -1.0;
  bool ok = true;
  std::string failed_stage;
  std::string error;
};

/// Runs the stages up to and including `last` for every case, writing
/// artifacts and manifest.json under `cfg.output_dir`. A failing stage is
/// recorded in the manifest and later stages are skipped.
EvalReport run_pipeline(const ExperimentConfig& cfg, Stage last = Stage::evaluate);

/// One run per sweep value under <output_dir>/<axis>_<index>, plus collated
/// sweep.csv, sweep_kernels.csv and sweep_fd.csv in <output_dir>.
std::vector<EvalReport> sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values,
                              const std::string& target = "auto");

/// Stability report for the HV controller at each case's equilibrium.
std::vector<stability::StabilityReport> stability_reports(const ExperimentConfig& cfg);

/// Recomputes artifact hashes of a run directory; returns the paths whose
/// content no longer matches the manifest.
std::vector<std::string> verify_manifest(const std::filesystem::path& run_dir);

std::string report_to_json(const EvalReport& r);

}  // namespace nlflow::exp
