#include "nlflow/metrics.hpp"

#include "nlflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nlflow::metrics {

double estimation_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw DataError("estimation_error: grids differ in shape");
  }
  if (truth.size() == 0) throw DataError("estimation_error: empty grid");
  if (!(truth.minCoeff() > 0.0)) throw DataError("estimation_error: true density must be positive");
  const double mean_sq = ((truth - estimate).array() / truth.array()).square().mean();
  return std::sqrt(mean_sq) * 100.0;
}

double kernel_mass_within(std::span<const double> weights, const pinn::KernelLayout& layout, double radius) {
  if (static_cast<int>(weights.size()) != layout.size()) throw ConfigError("kernel length does not match layout");
  double mass = 0.0;
  for (int k = 0; k < layout.size(); ++k) {
    if (std::abs(layout.offset(k)) * layout.dx < radius) mass += weights[static_cast<std::size_t>(k)];
  }
  return mass;
}

double kernel_mean(std::span<const double> weights, const pinn::KernelLayout& layout) {
  if (static_cast<int>(weights.size()) != layout.size()) throw ConfigError("kernel length does not match layout");
  double mass = 0.0, moment = 0.0;
  for (int k = 0; k < layout.ahead; ++k) {
    mass += weights[static_cast<std::size_t>(k)];
    moment += weights[static_cast<std::size_t>(k)] * k * layout.dx;
  }
  return mass > 0.0 ? moment / mass : 0.0;
}

ScatterWidth fd_scatter_width(std::span<const double> density, std::span<const double> speed) {
  if (density.size() != speed.size()) throw DataError("scatter pairs differ in length");
  const std::size_t n = density.size();
  if (n < 10) throw DataError("scatter width needs at least 10 pairs");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return density[a] < density[b]; });
  if (density[order.front()] == density[order.back()]) return {0.0, true};

  // Pool-adjacent-violators for a non-increasing fit; equal densities start
  // in one block so the fit is a function of density.
  struct Block {
    double sum;
    double count;
    std::size_t end;  // one past last position in `order`
  };
  std::vector<Block> blocks;
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    double sum = 0.0;
    while (q < n && density[order[q]] == density[order[p]]) sum += speed[order[q++]];
    blocks.push_back({sum, static_cast<double>(q - p), q});
    while (blocks.size() > 1) {
      auto& last = blocks[blocks.size() - 1];
      auto& prev = blocks[blocks.size() - 2];
      if (prev.sum / prev.count >= last.sum / last.count) break;
      prev.sum += last.sum;
      prev.count += last.count;
      prev.end = last.end;
      blocks.pop_back();
    }
    p = q;
  }
  double total = 0.0;
  std::size_t p = 0;
  for (const auto& b : blocks) {
    const double fit = b.sum / b.count;
    for (; p < b.end; ++p) total += std::abs(speed[order[p]] - fit);
  }
  return {total / static_cast<double>(n), false};
}

}  // namespace nlflow::metrics
