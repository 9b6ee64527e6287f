#include "nlflow/pinn/kernel.hpp"
#include "nlflow/pinn/model.hpp"

#include <cmath>

namespace nlflow::pinn {

namespace {

int cell_count(double length, double dx, const char* what) {
  const double ratio = length / dx;
  const long n = std::lround(ratio);
  if (!std::isfinite(ratio) || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError(std::string(what) + " must be an integer multiple of dx");
  }
  return static_cast<int>(n);
}

}  // namespace

KernelLayout make_layout(double eta_a, double eta_b, double dx) {
  if (!(dx > 0.0)) throw ConfigError("dx must be positive");
  if (eta_a < 0.0 || eta_b < 0.0) throw ConfigError("kernel lengths must be nonnegative");
  KernelLayout layout;
  layout.ahead = cell_count(eta_a, dx, "eta_a");
  layout.behind = cell_count(eta_b, dx, "eta_b");
  layout.dx = dx;
  if (layout.ahead < 1) throw ConfigError("eta_a must cover at least one cell");
  return layout;
}

CaseData make_case(const macro::MacroField& field, const macro::ObservationSet& obs, int stride) {
  if (stride < 1) throw ConfigError("collocation stride must be positive");
  CaseData c;
  c.nx = field.nx();
  c.nt = field.nt();
  c.dx = field.dx;
  c.dt = field.dt;
  c.observations = obs.points;
  for (int j = 0; j < c.nt; j += stride) c.collocation_rows.push_back(j);
  return c;
}

}  // namespace nlflow::pinn
