#pragma once

#include "nlflow/macrorecon.hpp"
#include "nlflow/pinn/kernel.hpp"
#include "nlflow/pinn/mlp.hpp"

#include <cstdint>
#include <vector>

namespace nlflow::pinn {

struct LossWeights {
  double c_d = 0.1;
  double p_omega = 1e6;
  double p_v = 1e6;
};

/// Per-case density network with its input/output normalization:
/// inputs (x/L, t/T), output rho / rho_max.
template <class Scalar>
struct DensityNet {
  Mlp<Scalar> net;
  double length = 1.0;
  double horizon = 1.0;
};

/// Trainable state: one density network per case plus the shared kernel
/// parameters and fundamental-diagram network.
template <class Scalar>
struct PinnState {
  std::vector<DensityNet<Scalar>> density;
  VectorX<Scalar> kernel_theta;
  KernelLayout layout;
  bool kernel_frozen = false;
  Mlp<Scalar> fd;
  double rho_max = 0.2;
  double v_scale = 30.0;
  int fd_samples = 100;

  Eigen::Index parameter_count() const {
    Eigen::Index n = kernel_theta.size() + fd.parameter_count();
    for (const auto& d : density) n += d.net.parameter_count();
    return n;
  }

  /// Flat layout: density_0 .. density_{K-1}, kernel theta, fd.
  VectorX<Scalar> flat() const {
    VectorX<Scalar> out(parameter_count());
    Eigen::Index pos = 0;
    for (const auto& d : density) {
      out.segment(pos, d.net.parameter_count()) = d.net.params;
      pos += d.net.parameter_count();
    }
    out.segment(pos, kernel_theta.size()) = kernel_theta;
    pos += kernel_theta.size();
    out.segment(pos, fd.parameter_count()) = fd.params;
    return out;
  }

  void set_flat(const VectorX<Scalar>& v) {
    Eigen::Index pos = 0;
    for (auto& d : density) {
      d.net.params = v.segment(pos, d.net.parameter_count());
      pos += d.net.parameter_count();
    }
    kernel_theta = v.segment(pos, kernel_theta.size());
    pos += kernel_theta.size();
    fd.params = v.segment(pos, fd.parameter_count());
  }

  Eigen::Index kernel_offset() const {
    Eigen::Index pos = 0;
    for (const auto& d : density) pos += d.net.parameter_count();
    return pos;
  }
  Eigen::Index fd_offset() const { return kernel_offset() + kernel_theta.size(); }

  VectorX<Scalar> kernel_weights() const { return normalize_kernel(kernel_theta); }

  template <class Other>
  PinnState<Other> cast() const {
    PinnState<Other> out;
    for (const auto& d : density) out.density.push_back({d.net.template cast<Other>(), d.length, d.horizon});
    out.kernel_theta = kernel_theta.template cast<Other>();
    out.layout = layout;
    out.kernel_frozen = kernel_frozen;
    out.fd = fd.template cast<Other>();
    out.rho_max = rho_max;
    out.v_scale = v_scale;
    out.fd_samples = fd_samples;
    return out;
  }
};

/// Grid-indexed training data for one simulation case.
struct CaseData {
  int nx = 0;
  int nt = 0;
  double dx = 1.0;
  double dt = 1.0;
  std::vector<macro::ObservationPoint> observations;
  /// Time indices whose full spatial rows form the collocation set.
  std::vector<int> collocation_rows;
};

/// Collocation rows every `stride` time cells, starting at 0.
CaseData make_case(const macro::MacroField& field, const macro::ObservationSet& obs, int stride = 1);

}  // namespace nlflow::pinn
