#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace oracle {

// Periodic finite-volume solver for rho_t + (rho V(rho_bar))_x = 0 with
// rho_bar(x) = sum_k w_k rho(x + off_k dx) on a grid refined `refine` times
// relative to the kernel cell dx. Second-order MUSCL (minmod) upwind flux
// for V >= 0 and SSP-RK3 in time.
struct FvProblem {
  double length = 100.0;
  double dx = 1.0;  // kernel cell
  int refine = 4;
  std::vector<double> weights;
  std::vector<int> offsets;  // in kernel cells
  std::function<double(double)> speed;
  std::function<double(double)> initial;
  double cfl = 0.4;
  double v_bound = 30.0;
};

// Density sampled at x = i dx (i < length/dx), t = j dt_out (j < steps).
Eigen::MatrixXd solve(const FvProblem& p, double dt_out, int steps);

}  // namespace oracle
