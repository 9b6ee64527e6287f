#pragma once

#include "nlflow/microsim.hpp"

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nlflow::stability {

/// Controller linearized about a ring equilibrium (s*, v*).
struct LinearizedModel {
  double kappa = 0.0;  // V_opt slope at s*
  microsim::ControllerParams gains;
  double s_star = 0.0;
  double v_star = 0.0;
};

/// Throws ParameterError when s* sits exactly on a V_opt breakpoint.
LinearizedModel linearize(const microsim::ControllerParams& params, double s_star, double v_star);

/// Log-spaced grid on [lo, hi] with `points` samples.
std::vector<double> log_grid(double lo = 1e-3, double hi = 1e2, int points = 200);

/// Frequency response of the speed of vehicle `chain_length - 1` relative to
/// the head of an open platoon whose virtual leaders copy the head.
std::complex<double> chain_response(const LinearizedModel& model, double omega, int chain_length);

/// Closed-form ACC link transfer G(jw) = (b0 jw + a0 k) / (-w^2 + (a0+b0) jw + a0 k).
std::complex<double> acc_transfer(double alpha0, double beta0, double kappa, double omega);

/// sup over the grid (plus the analytic interior peak for ACC-only gains) of
/// the per-link gain. For look-ahead gains the per-link gain is the
/// (chain_length-1)-th root of the head-to-tail response, which coincides with
/// |G| when only ACC gains are present. Throws UnsupportedAnalysis when any
/// look-behind gain is nonzero.
double string_stability_margin(const LinearizedModel& model, std::span<const double> omega_grid,
                               int chain_length = 10);

/// V_opt slope at `gap`; zero on the flat branches. Throws ParameterError at
/// a breakpoint.
double vopt_slope(double gap, const microsim::VOptParams& p);

/// Linear ring system in (gap, speed) perturbations, 2N x 2N, ordered
/// [s_0..s_{N-1}, v_0..v_{N-1}]. `slope(i, k)` is the V_opt slope vehicle i
/// applies to the gap of vehicle k.
Eigen::MatrixXd ring_system_matrix(std::span<const microsim::ControllerParams> ctrl,
                                   const std::function<double(int, int)>& slope,
                                   bool nudging_active);

/// Largest real part of the ring eigenvalues after dropping the structural
/// zero mode (conservation of total gap). With the nudging indicator the
/// worse of the active/inactive branches is reported.
double plant_stability_ring(const LinearizedModel& model, int vehicles);

/// Heterogeneous ring linearized about per-vehicle equilibrium gaps.
double plant_stability_ring(std::span<const microsim::ControllerParams> ctrl,
                            std::span<const double> eq_gaps);

struct StabilityReport {
  bool plant_stable = false;
  bool string_stable = false;
  bool string_analysis_supported = true;
  double max_gain = 0.0;
  double spectral_abscissa = 0.0;
  double kappa = 0.0;
};

/// Full classification for a homogeneous ring of `vehicles` vehicles.
StabilityReport analyze(const microsim::ControllerParams& params, double s_star, double v_star,
                        int vehicles);

std::string to_json(const StabilityReport& report);

}  // namespace nlflow::stability
