#include "oracles/fv_nonlocal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

}  // namespace

Eigen::MatrixXd solve(const FvProblem& p, double dt_out, int steps) {
  const int nx = static_cast<int>(std::lround(p.length / p.dx));
  const int n = nx * p.refine;
  const double h = p.dx / p.refine;
  Eigen::VectorXd rho(n);
  for (int i = 0; i < n; ++i) {
    // cell average by 4-point Gauss-Legendre on [x - h/2, x + h/2]
    static const double g[2] = {0.3399810435848563, 0.8611363115940526};
    static const double wg[2] = {0.6521451548625461, 0.3478548451374538};
    double acc = 0.0;
    for (int q = 0; q < 2; ++q) {
      acc += wg[q] * (p.initial(i * h + 0.5 * h * g[q]) + p.initial(i * h - 0.5 * h * g[q]));
    }
    rho[i] = 0.5 * acc;
  }

  auto rhs = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd bar = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      const int s = p.offsets[k] * p.refine;
      for (int i = 0; i < n; ++i) bar[i] += p.weights[k] * r[((i + s) % n + n) % n];
    }
    Eigen::VectorXd flux(n);  // flux through the right face of cell i
    for (int i = 0; i < n; ++i) {
      const int im = (i - 1 + n) % n, ip = (i + 1) % n;
      const double left = r[i] + 0.5 * minmod(r[i] - r[im], r[ip] - r[i]);
      const double vbar = p.speed(0.5 * (bar[i] + bar[ip]));
      flux[i] = left * vbar;
    }
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = -(flux[i] - flux[(i - 1 + n) % n]) / h;
    return out;
  };

  Eigen::MatrixXd result(nx, steps);
  const double dt_max = p.cfl * h / p.v_bound;
  for (int j = 0; j < steps; ++j) {
    for (int i = 0; i < nx; ++i) result(i, j) = rho[i * p.refine];
    if (j + 1 == steps) break;
    const int sub = static_cast<int>(std::ceil(dt_out / dt_max));
    const double dt = dt_out / sub;
    for (int s = 0; s < sub; ++s) {
      const Eigen::VectorXd u1 = rho + dt * rhs(rho);
      const Eigen::VectorXd u2 = 0.75 * rho + 0.25 * (u1 + dt * rhs(u1));
      rho = (rho + 2.0 * (u2 + dt * rhs(u2))) / 3.0;
    }
  }
  if (!result.allFinite()) throw std::runtime_error("finite-volume oracle produced non-finite values");
  return result;
}

}  // namespace oracle
