#pragma once

#include "nlflow/error.hpp"
#include "nlflow/pinn/mlp.hpp"

#include <cmath>

namespace nlflow::pinn {

/// Discrete look-ahead / look-behind stencil.
///
/// Weight k < ahead sits at offset +k cells (downstream), weight ahead+k-1
/// for k = 1..behind at offset -k cells (upstream).
struct KernelLayout {
  int ahead = 1;
  int behind = 0;
  double dx = 1.0;

  int size() const { return ahead + behind; }
  int offset(int k) const { return k < ahead ? k : -(k - ahead + 1); }
};

/// N_a = eta_a / dx and N_b = eta_b / dx; both must be integers and N_a >= 1.
KernelLayout make_layout(double eta_a, double eta_b, double dx);

/// Layout of the local model: a single unit weight at offset zero.
inline KernelLayout local_layout(double dx) { return {1, 0, dx}; }

/// w_k = theta_k / sum(theta). Throws DegenerateParameter if |sum| < 1e-12.
template <class Scalar>
VectorX<Scalar> normalize_kernel(const VectorX<Scalar>& theta) {
  const Scalar sum = theta.sum();
  if (!(std::abs(static_cast<double>(sum)) >= 1e-12)) {
    throw DegenerateParameter("kernel parameters sum to zero; cannot normalize");
  }
  return theta / sum;
}

/// Adjoint of normalize_kernel: theta_bar_j = (w_bar_j - <w_bar, w>) / sum(theta).
template <class Scalar>
VectorX<Scalar> normalize_kernel_adjoint(const VectorX<Scalar>& theta, const VectorX<Scalar>& weights,
                                         const VectorX<Scalar>& weights_bar) {
  const Scalar sum = theta.sum();
  return (weights_bar.array() - weights_bar.dot(weights)).matrix() / sum;
}

/// Nonlocal density along one periodic row of cells.
template <class Scalar>
VectorX<Scalar> nonlocal_density(const VectorX<Scalar>& row, const VectorX<Scalar>& weights,
                                 const KernelLayout& layout) {
  const Eigen::Index n = row.size();
  if (layout.ahead + layout.behind > n) throw ConfigError("kernel stencil is longer than the ring");
  VectorX<Scalar> out = VectorX<Scalar>::Zero(n);
  for (int k = 0; k < layout.size(); ++k) {
    const Eigen::Index shift = ((layout.offset(k) % n) + n) % n;
    const Scalar w = weights[k];
    // out[i] += w * row[(i + shift) mod n]
    out.head(n - shift) += w * row.tail(n - shift);
    out.tail(shift) += w * row.head(shift);
  }
  return out;
}

/// Same stencil applied column-wise to a (cells x rows) block.
template <class Scalar>
MatrixX<Scalar> nonlocal_density(const MatrixX<Scalar>& block, const VectorX<Scalar>& weights,
                                 const KernelLayout& layout) {
  const Eigen::Index n = block.rows();
  if (layout.ahead + layout.behind > n) throw ConfigError("kernel stencil is longer than the ring");
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(n, block.cols());
  for (int k = 0; k < layout.size(); ++k) {
    const Eigen::Index shift = ((layout.offset(k) % n) + n) % n;
    const Scalar w = weights[k];
    out.topRows(n - shift) += w * block.bottomRows(n - shift);
    out.bottomRows(shift) += w * block.topRows(shift);
  }
  return out;
}

/// Transpose of the stencil: scatters `out_bar` back onto the density cells
/// (accumulated into `block_bar`) and returns the weight adjoints.
template <class Scalar>
VectorX<Scalar> nonlocal_density_adjoint(const MatrixX<Scalar>& block, const VectorX<Scalar>& weights,
                                         const KernelLayout& layout, const MatrixX<Scalar>& out_bar,
                                         MatrixX<Scalar>& block_bar) {
  const Eigen::Index n = block.rows();
  VectorX<Scalar> w_bar(layout.size());
  for (int k = 0; k < layout.size(); ++k) {
    const Eigen::Index shift = ((layout.offset(k) % n) + n) % n;
    const Scalar w = weights[k];
    block_bar.bottomRows(n - shift) += w * out_bar.topRows(n - shift);
    block_bar.topRows(shift) += w * out_bar.bottomRows(shift);
    w_bar[k] = (out_bar.topRows(n - shift).array() * block.bottomRows(n - shift).array()).sum() +
               (out_bar.bottomRows(shift).array() * block.topRows(shift).array()).sum();
  }
  return w_bar;
}

/// Hinge penalties for a nonnegative kernel that decreases away from the
/// origin on each side and whose first look-behind weight does not exceed
/// the origin weight. Adds d/dw into `grad` when non-null.
template <class Scalar>
Scalar kernel_constraint(const VectorX<Scalar>& w, const KernelLayout& layout, VectorX<Scalar>* grad) {
  Scalar total = 0;
  auto hinge = [&](int up, int down) {
    // penalize w[up] - w[down] > 0
    const Scalar gap = w[up] - w[down];
    if (gap > 0) {
      total += gap * gap;
      if (grad) {
        (*grad)[up] += 2 * gap;
        (*grad)[down] -= 2 * gap;
      }
    }
  };
  for (int k = 0; k < layout.size(); ++k) {
    if (w[k] < 0) {
      total += w[k] * w[k];
      if (grad) (*grad)[k] += 2 * w[k];
    }
  }
  for (int k = 0; k + 1 < layout.ahead; ++k) hinge(k + 1, k);
  for (int k = layout.ahead; k + 1 < layout.size(); ++k) hinge(k + 1, k);
  if (layout.behind > 0) hinge(layout.ahead, 0);
  return total;
}

}  // namespace nlflow::pinn
