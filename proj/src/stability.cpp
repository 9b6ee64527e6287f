#include "nlflow/stability.hpp"

#include "nlflow/error.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace nlflow::stability {

using microsim::ControllerParams;
using cplx = std::complex<double>;

double vopt_slope(double gap, const microsim::VOptParams& p) {
  if (gap == p.s_st || gap == p.s_go) {
    throw ParameterError("equilibrium gap lies on a V_opt breakpoint; slope undefined");
  }
  return (gap > p.s_st && gap < p.s_go) ? p.v_max / (p.s_go - p.s_st) : 0.0;
}

LinearizedModel linearize(const ControllerParams& params, double s_star, double v_star) {
  LinearizedModel m;
  m.kappa = vopt_slope(s_star, params.vopt);
  m.gains = params;
  m.s_star = s_star;
  m.v_star = v_star;
  return m;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> w(static_cast<std::size_t>(points));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) {
    w[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / std::max(1, points - 1));
  }
  return w;
}

cplx acc_transfer(double alpha0, double beta0, double kappa, double omega) {
  const cplx s(0.0, omega);
  return (beta0 * s + alpha0 * kappa) / (s * s + (alpha0 + beta0) * s + alpha0 * kappa);
}

namespace {

bool has_look_behind(const ControllerParams& g) {
  for (int j = 1; j <= g.lookbehind(); ++j) {
    if (g.alpha(j) != 0.0 || g.beta(j) != 0.0) return true;
  }
  return false;
}

bool has_look_ahead(const ControllerParams& g) {
  for (int j = -1; j >= -g.lookahead(); --j) {
    if (g.alpha(j) != 0.0 || g.beta(j) != 0.0) return true;
  }
  return false;
}

// Interior maximiser of |G(jw)|^2 over z = w^2 for the ACC link, if any.
// Stationary points solve b0^2 z^2 + 2 a^2 z - a^2 (b0^2 - (a0+b0)^2 + 2a) = 0
// with a = a0 k; a positive root exists iff 2k > a0 + 2 b0.
double acc_interior_peak(double alpha0, double beta0, double kappa) {
  const double a = alpha0 * kappa, b = alpha0 + beta0, c = beta0;
  const double disc_term = c * c - b * b + 2.0 * a;
  if (disc_term <= 0.0 || a <= 0.0) return 0.0;
  double z;
  if (c == 0.0) {
    z = disc_term / 2.0;
  } else {
    z = (-a * a + std::sqrt(a * a * a * a + c * c * a * a * disc_term)) / (c * c);
  }
  if (!(z > 0.0)) return 0.0;
  return std::abs(acc_transfer(alpha0, beta0, kappa, std::sqrt(z)));
}

}  // namespace

cplx chain_response(const LinearizedModel& model, double omega, int chain_length) {
  if (chain_length < 2) throw ConfigError("chain length must be >= 2");
  const auto& g = model.gains;
  const int n = g.lookahead();
  const double k = model.kappa;
  const cplx s(0.0, omega);

  cplx sum_gains = 0.0;
  for (int j = 0; j <= n; ++j) sum_gains += g.alpha(-j) + g.beta(-j);
  const cplx den = s * s + s * sum_gains + g.alpha(0) * k;

  // c[m] multiplies the speed of the m-th vehicle ahead, m = 1..n+1.
  std::vector<cplx> c(static_cast<std::size_t>(n + 2), 0.0);
  for (int m = 1; m <= n + 1; ++m) {
    c[static_cast<std::size_t>(m)] = g.beta(-(m - 1)) * s + g.alpha(-(m - 1)) * k;
    if (m <= n) c[static_cast<std::size_t>(m)] -= g.alpha(-m) * k;
  }

  std::vector<cplx> v(static_cast<std::size_t>(chain_length), 0.0);
  v[0] = 1.0;
  for (int i = 1; i < chain_length; ++i) {
    cplx acc = 0.0;
    for (int m = 1; m <= n + 1; ++m) acc += c[static_cast<std::size_t>(m)] * v[static_cast<std::size_t>(std::max(i - m, 0))];
    v[static_cast<std::size_t>(i)] = acc / den;
  }
  return v.back();
}

double string_stability_margin(const LinearizedModel& model, std::span<const double> omega_grid,
                               int chain_length) {
  const auto& g = model.gains;
  if (has_look_behind(g)) {
    throw UnsupportedAnalysis(
        "head-to-tail transfer is undefined with look-behind gains; use plant_stability_ring or a "
        "time-domain simulation");
  }
  double best = 0.0;
  if (!has_look_ahead(g)) {
    for (double w : omega_grid) best = std::max(best, std::abs(acc_transfer(g.alpha(0), g.beta(0), model.kappa, w)));
    // w -> 0+ endpoint: |G| -> 1 when a0 k > 0, else b0 / (a0 + b0).
    const double a0 = g.alpha(0), b0 = g.beta(0);
    if (a0 * model.kappa == 0.0 && a0 + b0 > 0.0) best = std::max(best, b0 / (a0 + b0));
    return std::max(best, acc_interior_peak(a0, b0, model.kappa));
  }
  const double root = 1.0 / (chain_length - 1);
  for (double w : omega_grid) best = std::max(best, std::pow(std::abs(chain_response(model, w, chain_length)), root));
  return best;
}

Eigen::MatrixXd ring_system_matrix(std::span<const ControllerParams> ctrl,
                                   const std::function<double(int, int)>& slope,
                                   bool nudging_active) {
  const int n = static_cast<int>(ctrl.size());
  auto w = [n](int k) { return ((k % n) + n) % n; };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  auto sv = [](int k) { return k; };
  auto vv = [n](int k) { return n + k; };
  for (int i = 0; i < n; ++i) {
    // gap rate
    a(sv(i), vv(w(i - 1))) += 1.0;
    a(sv(i), vv(i)) -= 1.0;
    const auto& g = ctrl[static_cast<std::size_t>(i)];
    const int row = vv(i);
    for (int j = -g.lookahead(); j <= g.lookbehind(); ++j) {
      const double aj = g.alpha(j), bj = g.beta(j);
      const int gap_of = w(i + j);
      a(row, sv(gap_of)) += aj * slope(i, gap_of);
      a(row, row) -= aj;
      if (j > 0 && g.nudging && !nudging_active) continue;
      const int other = j <= 0 ? w(i + j - 1) : w(i + j);
      a(row, vv(other)) += bj;
      a(row, row) -= bj;
    }
  }
  return a;
}

namespace {

double abscissa_without_zero_mode(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, false);
  const Eigen::VectorXcd ev = solver.eigenvalues();
  Eigen::Index zero = 0;
  ev.cwiseAbs().minCoeff(&zero);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (k != zero) best = std::max(best, ev[k].real());
  }
  return best;
}

bool any_nudging(std::span<const ControllerParams> ctrl) {
  return std::any_of(ctrl.begin(), ctrl.end(), [](const auto& c) { return c.nudging; });
}

double abscissa(std::span<const ControllerParams> ctrl, const std::function<double(int, int)>& slope) {
  double worst = abscissa_without_zero_mode(ring_system_matrix(ctrl, slope, true));
  if (any_nudging(ctrl)) worst = std::max(worst, abscissa_without_zero_mode(ring_system_matrix(ctrl, slope, false)));
  return worst;
}

}  // namespace

double plant_stability_ring(const LinearizedModel& model, int vehicles) {
  if (vehicles < 2) throw ConfigError("ring analysis needs N >= 2");
  const std::vector<ControllerParams> ctrl(static_cast<std::size_t>(vehicles), model.gains);
  const double k = model.kappa;
  return abscissa(ctrl, [k](int, int) { return k; });
}

double plant_stability_ring(std::span<const ControllerParams> ctrl, std::span<const double> eq_gaps) {
  if (ctrl.size() < 2 || ctrl.size() != eq_gaps.size()) throw ConfigError("ring analysis needs N >= 2 matching gaps");
  return abscissa(ctrl, [&](int i, int k) {
    return vopt_slope(eq_gaps[static_cast<std::size_t>(k)], ctrl[static_cast<std::size_t>(i)].vopt);
  });
}

StabilityReport analyze(const ControllerParams& params, double s_star, double v_star, int vehicles) {
  const auto model = linearize(params, s_star, v_star);
  StabilityReport r;
  r.kappa = model.kappa;
  r.spectral_abscissa = plant_stability_ring(model, vehicles);
  // Marginal modes sit at |Re| ~ 1e-15; treat them as not asymptotically stable.
  r.plant_stable = r.spectral_abscissa < -1e-9;
  try {
    const auto grid = log_grid();
    r.max_gain = string_stability_margin(model, grid);
    r.string_stable = r.max_gain < 1.0;
  } catch (const UnsupportedAnalysis&) {
    r.string_analysis_supported = false;
  }
  return r;
}

std::string to_json(const StabilityReport& report) {
  nlohmann::json j;
  j["plant_stable"] = report.plant_stable;
  j["string_stable"] = report.string_stable;
  j["string_analysis_supported"] = report.string_analysis_supported;
  j["max_gain"] = report.max_gain;
  j["spectral_abscissa"] = report.spectral_abscissa;
  j["kappa"] = report.kappa;
  return j.dump(2);
}

}  // namespace nlflow::stability
