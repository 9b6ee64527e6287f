#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace nlflow::pinn {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fully connected tanh network with a linear scalar output.
///
/// All weights live in one flat vector (per layer: W column-major, then b),
/// so optimizers and finite-difference checks can treat the network as a
/// plain parameter vector. Batches are stored column-wise (features x batch).
template <class Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using ConstMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;

  Mlp() = default;

  /// widths = {inputs, hidden..., 1}
  explicit Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2 || widths_.back() != 1) {
      throw std::invalid_argument("Mlp needs at least input and scalar output widths");
    }
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(total);
      total += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
    }
    params = Vector::Zero(total);
  }

  const std::vector<int>& widths() const { return widths_; }
  int layers() const { return static_cast<int>(widths_.size()) - 1; }
  int inputs() const { return widths_.front(); }
  Eigen::Index parameter_count() const { return params.size(); }

  ConstMap weight(int l) const { return ConstMap(params.data() + offsets_[l], widths_[l + 1], widths_[l]); }
  Map weight(int l) { return Map(params.data() + offsets_[l], widths_[l + 1], widths_[l]); }
  Eigen::Map<const Vector> bias(int l) const {
    return Eigen::Map<const Vector>(params.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]);
  }
  Eigen::Map<Vector> bias(int l) {
    return Eigen::Map<Vector>(params.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]);
  }

  /// Views into a gradient vector laid out like `params`.
  Map weight_in(Vector& flat, int l) const { return Map(flat.data() + offsets_[l], widths_[l + 1], widths_[l]); }
  Eigen::Map<Vector> bias_in(Vector& flat, int l) const {
    return Eigen::Map<Vector>(flat.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]);
  }

  /// Glorot-uniform weights, zero biases.
  template <class Rng>
  void init_glorot(Rng& rng) {
    for (int l = 0; l < layers(); ++l) {
      const double limit = std::sqrt(6.0 / (widths_[l] + widths_[l + 1]));
      std::uniform_real_distribution<double> dist(-limit, limit);
      auto w = weight(l);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<Scalar>(dist(rng));
      bias(l).setZero();
    }
  }

  template <class Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(widths_);
    out.params = params.template cast<Other>();
    return out;
  }

  Vector params;

 private:
  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
};

/// Forward cache: activations h[l] (h[0] = input) and, per input direction d,
/// the pre-activation tangents da[d][l] = d a_l / d input_d for hidden layers.
template <class Scalar>
struct MlpTape {
  std::vector<MatrixX<Scalar>> h;
  std::vector<std::vector<MatrixX<Scalar>>> da;
  MatrixX<Scalar> y;                // 1 x B
  std::vector<MatrixX<Scalar>> dy;  // per direction, 1 x B
  bool tangents = false;
};

/// Batched forward pass; with `tangents` also propagates d/d input_d for
/// every input dimension.
template <class Scalar>
void forward(const Mlp<Scalar>& net, const MatrixX<Scalar>& input, bool tangents, MlpTape<Scalar>& tape) {
  using Matrix = MatrixX<Scalar>;
  const int hidden = net.layers() - 1;
  const int din = net.inputs();
  const Eigen::Index batch = input.cols();
  assert(input.rows() == din);
  tape.tangents = tangents;
  tape.h.resize(static_cast<std::size_t>(hidden + 1));
  tape.h[0] = input;
  tape.da.assign(tangents ? static_cast<std::size_t>(din) : 0, std::vector<Matrix>(static_cast<std::size_t>(hidden + 1)));

  for (int l = 1; l <= hidden; ++l) {
    const auto w = net.weight(l - 1);
    Matrix a = w * tape.h[static_cast<std::size_t>(l - 1)];
    a.colwise() += net.bias(l - 1);
    for (int d = 0; d < (tangents ? din : 0); ++d) {
      auto& da = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
      if (l == 1) {
        da = w.col(d).replicate(1, batch);
      } else {
        const auto& hp = tape.h[static_cast<std::size_t>(l - 1)];
        const auto& dap = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(l - 1)];
        da.noalias() = w * (dap.array() * (Scalar(1) - hp.array().square())).matrix();
      }
    }
    tape.h[static_cast<std::size_t>(l)] = a.array().tanh();
  }

  const auto wo = net.weight(hidden);
  const auto& hl = tape.h[static_cast<std::size_t>(hidden)];
  tape.y.noalias() = wo * hl;
  tape.y.array() += net.bias(hidden)(0);
  tape.dy.resize(tangents ? static_cast<std::size_t>(din) : 0);
  for (int d = 0; d < (tangents ? din : 0); ++d) {
    if (hidden == 0) {
      tape.dy[static_cast<std::size_t>(d)] = Matrix::Constant(1, batch, wo(0, d));
    } else {
      const auto& dal = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(hidden)];
      tape.dy[static_cast<std::size_t>(d)].noalias() = wo * (dal.array() * (Scalar(1) - hl.array().square())).matrix();
    }
  }
}

/// Reverse pass through the values and (if present) the input tangents.
///
/// y_bar: adjoint of y (1 x B); dy_bar[d]: adjoint of dy/d input_d (empty
/// when the tape has no tangents or the loss does not use them). Parameter
/// gradients are accumulated into `grad`; the adjoint of the input is
/// written to `input_bar` when non-null.
template <class Scalar>
void backward(const Mlp<Scalar>& net, const MlpTape<Scalar>& tape, const MatrixX<Scalar>& y_bar,
              const std::vector<MatrixX<Scalar>>& dy_bar, VectorX<Scalar>& grad,
              MatrixX<Scalar>* input_bar) {
  using Matrix = MatrixX<Scalar>;
  const int hidden = net.layers() - 1;
  const int din = net.inputs();
  const bool use_tangents = tape.tangents && !dy_bar.empty();
  const int dirs = use_tangents ? din : 0;

  // Adjoints of h_l and of the activation tangents dh_l = s_l * da_l.
  const auto wo = net.weight(hidden);
  const auto& hl = tape.h[static_cast<std::size_t>(hidden)];
  auto gwo = net.weight_in(grad, hidden);
  gwo.noalias() += y_bar * hl.transpose();
  net.bias_in(grad, hidden)(0) += y_bar.sum();
  Matrix h_bar = wo.transpose() * y_bar;
  std::vector<Matrix> dh_bar(static_cast<std::size_t>(dirs));
  for (int d = 0; d < dirs; ++d) {
    const auto& yb = dy_bar[static_cast<std::size_t>(d)];
    if (hidden == 0) {
      gwo(0, d) += yb.sum();
    } else {
      const auto& dal = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(hidden)];
      gwo.noalias() += yb * (dal.array() * (Scalar(1) - hl.array().square())).matrix().transpose();
      dh_bar[static_cast<std::size_t>(d)] = wo.transpose() * yb;
    }
  }

  for (int l = hidden; l >= 1; --l) {
    const auto& h = tape.h[static_cast<std::size_t>(l)];
    const auto slope = (Scalar(1) - h.array().square()).eval();
    // s_bar = sum_d da_d * dh_bar_d ; a_bar = s * (h_bar - 2 h s_bar)
    Matrix a_bar;
    std::vector<Matrix> da_bar(static_cast<std::size_t>(dirs));
    if (dirs > 0) {
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> s_bar = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(h.rows(), h.cols());
      for (int d = 0; d < dirs; ++d) {
        const auto& da = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
        s_bar += da.array() * dh_bar[static_cast<std::size_t>(d)].array();
        da_bar[static_cast<std::size_t>(d)] = (slope * dh_bar[static_cast<std::size_t>(d)].array()).matrix();
      }
      a_bar = (slope * (h_bar.array() - Scalar(2) * h.array() * s_bar)).matrix();
    } else {
      a_bar = (slope * h_bar.array()).matrix();
    }

    const auto w = net.weight(l - 1);
    auto gw = net.weight_in(grad, l - 1);
    const auto& hp = tape.h[static_cast<std::size_t>(l - 1)];
    gw.noalias() += a_bar * hp.transpose();
    net.bias_in(grad, l - 1) += a_bar.rowwise().sum();
    for (int d = 0; d < dirs; ++d) {
      if (l == 1) {
        gw.col(d) += da_bar[static_cast<std::size_t>(d)].rowwise().sum();
      } else {
        const auto& dap = tape.da[static_cast<std::size_t>(d)][static_cast<std::size_t>(l - 1)];
        gw.noalias() += da_bar[static_cast<std::size_t>(d)] *
                        (dap.array() * (Scalar(1) - hp.array().square())).matrix().transpose();
      }
    }

    if (l > 1) {
      h_bar = w.transpose() * a_bar;
      for (int d = 0; d < dirs; ++d) {
        dh_bar[static_cast<std::size_t>(d)] = w.transpose() * da_bar[static_cast<std::size_t>(d)];
      }
    } else if (input_bar) {
      *input_bar = w.transpose() * a_bar;
    }
  }
  if (hidden == 0 && input_bar) *input_bar = wo.transpose() * y_bar;
}

/// Value-only evaluation, processed in chunks to bound memory.
template <class Scalar>
VectorX<Scalar> evaluate(const Mlp<Scalar>& net, const MatrixX<Scalar>& input, Eigen::Index chunk = 8192) {
  VectorX<Scalar> out(input.cols());
  MlpTape<Scalar> tape;
  for (Eigen::Index start = 0; start < input.cols(); start += chunk) {
    const Eigen::Index len = std::min(chunk, input.cols() - start);
    forward(net, MatrixX<Scalar>(input.middleCols(start, len)), false, tape);
    out.segment(start, len) = tape.y.transpose();
  }
  return out;
}

}  // namespace nlflow::pinn
