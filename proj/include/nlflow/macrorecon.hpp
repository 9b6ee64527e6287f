#pragma once

#include "nlflow/microsim.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace nlflow::macro {

/// Unsigned distance between two positions on a ring of length L.
double ring_distance(double x, double y, double L);

/// Gaussian smoothing kernel with bandwidth h; throws ParameterError for h <= 0.
double gaussian_kernel(double u, double h);

/// Gridded macroscopic state. Matrices are indexed (x cell, t cell).
struct MacroField {
  Eigen::MatrixXd rho;  // veh/m
  Eigen::MatrixXd q;    // veh/s
  Eigen::MatrixXd v;    // m/s
  double dx = 1.0;
  double dt = 1.0;
  double length = 0.0;
  double horizon = 0.0;
  double bandwidth = 0.0;
  int vehicles = 0;

  int nx() const { return static_cast<int>(rho.rows()); }
  int nt() const { return static_cast<int>(rho.cols()); }
  double x_at(int i) const { return i * dx; }
  double t_at(int j) const { return j * dt; }
};

struct ReconstructOptions {
  double bandwidth = 6.0;
  double dx = 1.0;
  double dt = 1.0;
  /// Kernel support is cut at this many bandwidths.
  double truncation = 6.0;
};

/// KDE reconstruction on cells x_i = i dx (i < L/dx) and t_j = j dt
/// (j < T/dt), where T is the last recorded time. Every grid time must be a
/// recorded sample.
MacroField reconstruct(const microsim::TrajectorySet& traj, const ReconstructOptions& opts = {});

struct ObservationPoint {
  int x_index;
  int t_index;
  double rho;
};

struct ObservationSet {
  std::vector<ObservationPoint> points;
  std::vector<double> loop_positions;
};

/// Full initial row plus `loops` evenly spaced detector columns.
ObservationSet select_observations(const MacroField& field, int loops);

/// Long-format `x,t,rho,q,v`.
void write_field_csv(std::ostream& os, const MacroField& field);
MacroField read_field_csv(std::istream& is, const MacroField& metadata);
std::string field_metadata_json(const MacroField& field);
MacroField field_from_metadata_json(const std::string& text);

}  // namespace nlflow::macro
