#pragma once

#include "nlflow/pinn/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace nlflow::pinn {

struct TrainConfig {
  std::vector<int> density_hidden = {64, 64, 64, 64, 64, 64};
  std::vector<int> fd_hidden = {32, 32, 32};
  double eta_a = 30.0;
  double eta_b = 0.0;
  double dx = 1.0;
  /// Freeze the kernel to a unit spike at offset zero (local LWR).
  bool local = false;
  LossWeights weights;
  double rho_max = 0.2;
  int fd_samples = 100;
  double v_scale = 30.0;
  int epochs = 20000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Collocation on every `time_stride`-th grid time row.
  int time_stride = 1;
  /// Stop after this much process CPU time; 0 means no limit.
  double cpu_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct EpochLoss {
  double data;
  double physics;
  double constraint;
  double total() const { return data + physics + constraint; }
};

struct FdCurve {
  std::vector<double> rho;
  std::vector<double> speed;
};

struct TrainResult {
  PinnState<double> state;
  std::vector<EpochLoss> history;
  std::vector<double> kernel;
  FdCurve fd;
  LossParts final_loss;
  bool diverged = false;
  bool time_limited = false;
  std::string message;
};

/// Callback invoked after every epoch with (epoch, loss); returning false
/// stops training early.
using EpochCallback = std::function<bool(int, const EpochLoss&)>;

/// Freshly initialized state for the given cases.
template <class Scalar>
PinnState<Scalar> init_state(const std::vector<macro::MacroField>& fields, const TrainConfig& cfg);

/// Trains in single precision and returns the state in double precision.
/// On a non-finite loss training stops and `diverged` is set; the history up
/// to that point is kept.
TrainResult train(const std::vector<macro::MacroField>& fields, const std::vector<macro::ObservationSet>& obs,
                  const TrainConfig& cfg, const EpochCallback& callback = {});

/// Density on the full grid of a case (cells x times).
Eigen::MatrixXd predict_density(const PinnState<double>& s, std::size_t k, int nx, int nt, double dx, double dt);

/// FD speed at the given densities.
Eigen::VectorXd predict_fd(const PinnState<double>& s, const Eigen::VectorXd& rho);

/// FD samples on [0, rho_max] with the constraint grid spacing.
FdCurve sample_fd(const PinnState<double>& s);

/// Largest hinge magnitude of the kernel and FD well-posedness conditions
/// (negativity, monotonicity) on the constraint grid.
double max_constraint_violation(const PinnState<double>& s);

}  // namespace nlflow::pinn
