#pragma once

#include "nlflow/pinn/kernel.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>

namespace nlflow::metrics {

/// Root-mean-square relative error in percent over a whole grid.
/// Throws DataError on shape mismatch or a non-positive true density.
double estimation_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

/// Weight carried by offsets strictly closer than `radius` metres to x = 0.
double kernel_mass_within(std::span<const double> weights, const pinn::KernelLayout& layout, double radius);

/// First moment (m) of the look-ahead weights, normalized by their mass.
double kernel_mean(std::span<const double> weights, const pinn::KernelLayout& layout);

struct ScatterWidth {
  double width = 0.0;
  bool degenerate = false;
};

/// Mean absolute residual of v around its non-increasing least-squares fit
/// in the density variable. Needs at least 10 pairs.
ScatterWidth fd_scatter_width(std::span<const double> density, std::span<const double> speed);

/// Lowercase hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace nlflow::metrics
