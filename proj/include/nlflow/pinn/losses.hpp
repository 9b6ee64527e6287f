#pragma once

#include "nlflow/pinn/model.hpp"

#include <algorithm>

namespace nlflow::pinn {

struct LossParts {
  double data = 0.0;
  double physics = 0.0;
  double constraint = 0.0;
  /// Raw penalty terms before the p weights, kept for reporting.
  double kernel_hinge = 0.0;
  double fd_negative = 0.0;
  double fd_slope = 0.0;

  double total() const { return data + physics + constraint; }
};

/// Density, its normalized input derivatives and the scaling back to physical
/// units, for a batch of (x/L, t/T) inputs.
template <class Scalar>
struct DensityEval {
  MatrixX<Scalar> rho;    // veh/m
  MatrixX<Scalar> rho_x;  // veh/m^2
  MatrixX<Scalar> rho_t;  // veh/(m s)
};

template <class Scalar>
MatrixX<Scalar> density_inputs(const DensityNet<Scalar>& d, const std::vector<std::pair<double, double>>& xt) {
  MatrixX<Scalar> in(2, static_cast<Eigen::Index>(xt.size()));
  for (std::size_t k = 0; k < xt.size(); ++k) {
    in(0, static_cast<Eigen::Index>(k)) = static_cast<Scalar>(xt[k].first / d.length);
    in(1, static_cast<Eigen::Index>(k)) = static_cast<Scalar>(xt[k].second / d.horizon);
  }
  return in;
}

/// Inputs for every cell of the given time rows, cell-major within a row.
template <class Scalar>
MatrixX<Scalar> row_inputs(const DensityNet<Scalar>& d, const CaseData& c, const std::vector<int>& rows) {
  MatrixX<Scalar> in(2, static_cast<Eigen::Index>(c.nx) * static_cast<Eigen::Index>(rows.size()));
  Eigen::Index col = 0;
  for (int j : rows) {
    for (int i = 0; i < c.nx; ++i, ++col) {
      in(0, col) = static_cast<Scalar>(i * c.dx / d.length);
      in(1, col) = static_cast<Scalar>(j * c.dt / d.horizon);
    }
  }
  return in;
}

/// Loss evaluator over all cases. Holds the precomputed network inputs so
/// repeated evaluation during training does not rebuild them.
template <class Scalar>
class LossEvaluator {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  LossEvaluator(const PinnState<Scalar>& state, std::vector<CaseData> cases, LossWeights weights)
      : cases_(std::move(cases)), weights_(weights) {
    if (cases_.empty()) throw ConfigError("training needs at least one case");
    if (state.density.size() != cases_.size()) throw ConfigError("one density network per case is required");
    if (!(weights_.c_d > 0) || !(weights_.p_omega > 0) || !(weights_.p_v > 0)) {
      throw ParameterError("loss weights must be positive");
    }
    for (std::size_t k = 0; k < cases_.size(); ++k) {
      const auto& c = cases_[k];
      const auto& d = state.density[k];
      if (c.observations.empty()) throw DataError("case " + std::to_string(k) + " has no observations");
      if (state.layout.size() > c.nx) throw ConfigError("kernel stencil is longer than the ring");
      std::vector<std::pair<double, double>> xt;
      Vector target(static_cast<Eigen::Index>(c.observations.size()));
      for (std::size_t p = 0; p < c.observations.size(); ++p) {
        const auto& o = c.observations[p];
        if (o.x_index < 0 || o.x_index >= c.nx || o.t_index < 0 || o.t_index >= c.nt) {
          throw DataError("observation outside the grid");
        }
        xt.emplace_back(o.x_index * c.dx, o.t_index * c.dt);
        target[static_cast<Eigen::Index>(p)] = static_cast<Scalar>(o.rho);
      }
      for (int j : c.collocation_rows) {
        if (j < 0 || j >= c.nt) throw ConfigError("collocation row outside the grid");
      }
      obs_inputs_.push_back(density_inputs(d, xt));
      obs_targets_.push_back(std::move(target));
      col_inputs_.push_back(row_inputs(d, c, c.collocation_rows));
    }
    fd_grid_.resize(1, state.fd_samples);
    for (int i = 0; i < state.fd_samples; ++i) fd_grid_(0, i) = static_cast<Scalar>(double(i) / state.fd_samples);
  }

  const std::vector<CaseData>& cases() const { return cases_; }
  const LossWeights& weights() const { return weights_; }

  /// Loss decomposition; when `grad` is non-null it receives d total / d flat
  /// parameters in PinnState::flat() order.
  LossParts evaluate(const PinnState<Scalar>& s, Vector* grad) const {
    LossParts parts;
    if (grad) *grad = Vector::Zero(s.parameter_count());
    const Vector w = normalize_kernel(s.kernel_theta);
    Vector w_bar = Vector::Zero(w.size());
    Vector fd_grad = Vector::Zero(s.fd.parameter_count());

    Eigen::Index pos = 0;
    for (std::size_t k = 0; k < cases_.size(); ++k) {
      const auto& d = s.density[k];
      Vector dgrad = Vector::Zero(d.net.parameter_count());
      parts.data += data_term(s, k, grad ? &dgrad : nullptr);
      if (!cases_[k].collocation_rows.empty()) {
        parts.physics += physics_term(s, k, w, grad ? &dgrad : nullptr, grad ? &w_bar : nullptr,
                                      grad ? &fd_grad : nullptr);
      }
      if (grad) grad->segment(pos, dgrad.size()) = dgrad;
      pos += d.net.parameter_count();
    }
    parts.constraint = constraint_term(s, w, parts, grad ? &w_bar : nullptr, grad ? &fd_grad : nullptr);

    if (grad) {
      if (!s.kernel_frozen) {
        grad->segment(s.kernel_offset(), w.size()) = normalize_kernel_adjoint(s.kernel_theta, w, w_bar);
      }
      grad->segment(s.fd_offset(), fd_grad.size()) = fd_grad;
    }
    return parts;
  }

  /// Per-point residual f on the collocation rows of case k, shaped
  /// (cells x rows).
  Matrix residual_field(const PinnState<Scalar>& s, std::size_t k) const {
    Matrix f;
    Scratch tmp;
    residual_block(s, k, normalize_kernel(s.kernel_theta), f, tmp);
    return f;
  }

 private:
  struct Scratch {
    MlpTape<Scalar> dtape;
    MlpTape<Scalar> ftape;
    Matrix rho, rx, rt, rb, rbx, v, vp;
  };

  void residual_block(const PinnState<Scalar>& s, std::size_t k, const Vector& w, Matrix& f, Scratch& sc) const {
    const auto& c = cases_[k];
    const auto& d = s.density[k];
    const Eigen::Index rows = static_cast<Eigen::Index>(c.collocation_rows.size());
    const Scalar rm = static_cast<Scalar>(s.rho_max);
    forward(d.net, col_inputs_[k], true, sc.dtape);
    sc.rho = Eigen::Map<const Matrix>(sc.dtape.y.data(), c.nx, rows) * rm;
    sc.rx = Eigen::Map<const Matrix>(sc.dtape.dy[0].data(), c.nx, rows) * static_cast<Scalar>(s.rho_max / d.length);
    sc.rt = Eigen::Map<const Matrix>(sc.dtape.dy[1].data(), c.nx, rows) * static_cast<Scalar>(s.rho_max / d.horizon);
    sc.rb = nonlocal_density(sc.rho, w, s.layout);
    sc.rbx = nonlocal_density(sc.rx, w, s.layout);
    const Matrix fd_in = Eigen::Map<const Matrix>(sc.rb.data(), 1, sc.rb.size()) / rm;
    forward(s.fd, fd_in, true, sc.ftape);
    sc.v = Eigen::Map<const Matrix>(sc.ftape.y.data(), c.nx, rows) * static_cast<Scalar>(s.v_scale);
    sc.vp = Eigen::Map<const Matrix>(sc.ftape.dy[0].data(), c.nx, rows) * static_cast<Scalar>(s.v_scale / s.rho_max);
    f = (sc.rt.array() + sc.rx.array() * sc.v.array() + sc.rho.array() * sc.vp.array() * sc.rbx.array()).matrix();
  }

  Scalar data_term(const PinnState<Scalar>& s, std::size_t k, Vector* dgrad) const {
    const auto& d = s.density[k];
    MlpTape<Scalar> tape;
    forward(d.net, obs_inputs_[k], false, tape);
    const Scalar rm = static_cast<Scalar>(s.rho_max);
    const Matrix err = (tape.y * rm - obs_targets_[k].transpose());
    const Scalar n = static_cast<Scalar>(err.cols());
    const Scalar cd = static_cast<Scalar>(weights_.c_d);
    if (dgrad) {
      const Matrix y_bar = err * (Scalar(2) * cd * rm / n);
      backward(d.net, tape, y_bar, {}, *dgrad, static_cast<Matrix*>(nullptr));
    }
    return cd * err.squaredNorm() / n;
  }

  Scalar physics_term(const PinnState<Scalar>& s, std::size_t k, const Vector& w, Vector* dgrad, Vector* w_bar,
                      Vector* fd_grad) const {
    const auto& c = cases_[k];
    const auto& d = s.density[k];
    Scratch sc;
    Matrix f;
    residual_block(s, k, w, f, sc);
    const Scalar np = static_cast<Scalar>(f.size());
    const Scalar loss = f.squaredNorm() / np;
    if (!dgrad) return loss;

    const Eigen::Index rows = f.cols();
    const Scalar rm = static_cast<Scalar>(s.rho_max);
    const auto fb = (f.array() * (Scalar(2) / np)).eval();
    Matrix rt_bar = fb.matrix();
    Matrix rx_bar = (fb * sc.v.array()).matrix();
    const Matrix v_bar = (fb * sc.rx.array()).matrix();
    const Matrix vp_bar = (fb * sc.rho.array() * sc.rbx.array()).matrix();
    Matrix rho_bar = (fb * sc.vp.array() * sc.rbx.array()).matrix();
    const Matrix rbx_bar = (fb * sc.rho.array() * sc.vp.array()).matrix();

    // Fundamental-diagram network: value and slope adjoints.
    const Matrix y_bar = Eigen::Map<const Matrix>(v_bar.data(), 1, v_bar.size()) * static_cast<Scalar>(s.v_scale);
    std::vector<Matrix> dy_bar{Eigen::Map<const Matrix>(vp_bar.data(), 1, vp_bar.size()) *
                               static_cast<Scalar>(s.v_scale / s.rho_max)};
    Matrix in_bar;
    backward(s.fd, sc.ftape, y_bar, dy_bar, *fd_grad, &in_bar);
    const Matrix rb_bar = Eigen::Map<const Matrix>(in_bar.data(), c.nx, rows) / rm;

    // Stencil transposes.
    *w_bar += nonlocal_density_adjoint(sc.rho, w, s.layout, rb_bar, rho_bar);
    *w_bar += nonlocal_density_adjoint(sc.rx, w, s.layout, rbx_bar, rx_bar);

    // Density network.
    const Matrix dy = Eigen::Map<const Matrix>(rho_bar.data(), 1, rho_bar.size()) * rm;
    std::vector<Matrix> ddy{Eigen::Map<const Matrix>(rx_bar.data(), 1, rx_bar.size()) *
                                static_cast<Scalar>(s.rho_max / d.length),
                            Eigen::Map<const Matrix>(rt_bar.data(), 1, rt_bar.size()) *
                                static_cast<Scalar>(s.rho_max / d.horizon)};
    backward(d.net, sc.dtape, dy, ddy, *dgrad, static_cast<Matrix*>(nullptr));
    return loss;
  }

  Scalar constraint_term(const PinnState<Scalar>& s, const Vector& w, LossParts& parts, Vector* w_bar,
                         Vector* fd_grad) const {
    const Scalar po = static_cast<Scalar>(weights_.p_omega);
    const Scalar pv = static_cast<Scalar>(weights_.p_v);
    Scalar kernel = 0;
    if (!s.kernel_frozen) {
      Vector kg = Vector::Zero(w.size());
      kernel = kernel_constraint(w, s.layout, w_bar ? &kg : nullptr);
      if (w_bar) *w_bar += po * kg;
    }

    MlpTape<Scalar> tape;
    forward(s.fd, fd_grid_, true, tape);
    const Scalar vs = static_cast<Scalar>(s.v_scale);
    const Scalar ss = static_cast<Scalar>(s.v_scale / s.rho_max);
    const auto v = (tape.y.array() * vs).eval();
    const auto vp = (tape.dy[0].array() * ss).eval();
    const auto neg = v.min(Scalar(0)).eval();
    const auto pos = vp.max(Scalar(0)).eval();
    const Scalar l1 = neg.square().sum();
    const Scalar l2 = pos.square().sum();
    if (fd_grad) {
      const Matrix y_bar = (neg * (Scalar(2) * pv * vs)).matrix();
      std::vector<Matrix> dy_bar{(pos * (Scalar(2) * pv * ss)).matrix()};
      backward(s.fd, tape, y_bar, dy_bar, *fd_grad, static_cast<Matrix*>(nullptr));
    }
    parts.kernel_hinge = static_cast<double>(kernel);
    parts.fd_negative = static_cast<double>(l1);
    parts.fd_slope = static_cast<double>(l2);
    return po * kernel + pv * (l1 + l2);
  }

  std::vector<CaseData> cases_;
  LossWeights weights_;
  std::vector<Matrix> obs_inputs_;
  std::vector<Vector> obs_targets_;
  std::vector<Matrix> col_inputs_;
  Matrix fd_grid_;
};

/// Residual at grid cell (i, j) of a case, evaluated pointwise from the
/// networks. Useful for spot checks against LossEvaluator::residual_field.
template <class Scalar>
double residual_at(const PinnState<Scalar>& s, std::size_t k, const CaseData& c, int i, int j) {
  const auto& d = s.density[k];
  const auto w = normalize_kernel(s.kernel_theta);
  const int n = s.layout.size();
  MatrixX<Scalar> in(2, n);
  for (int m = 0; m < n; ++m) {
    const int cell = ((i + s.layout.offset(m)) % c.nx + c.nx) % c.nx;
    in(0, m) = static_cast<Scalar>(cell * c.dx / d.length);
    in(1, m) = static_cast<Scalar>(j * c.dt / d.horizon);
  }
  MlpTape<Scalar> tape;
  forward(d.net, in, true, tape);
  double rb = 0.0, rbx = 0.0;
  for (int m = 0; m < n; ++m) {
    rb += double(w[m]) * s.rho_max * double(tape.y(0, m));
    rbx += double(w[m]) * s.rho_max / d.length * double(tape.dy[0](0, m));
  }
  // offset 0 is always the first weight
  const double rho = s.rho_max * double(tape.y(0, 0));
  const double rx = s.rho_max / d.length * double(tape.dy[0](0, 0));
  const double rt = s.rho_max / d.horizon * double(tape.dy[1](0, 0));
  MlpTape<Scalar> ft;
  MatrixX<Scalar> fin(1, 1);
  fin(0, 0) = static_cast<Scalar>(rb / s.rho_max);
  forward(s.fd, fin, true, ft);
  const double v = s.v_scale * double(ft.y(0, 0));
  const double vp = s.v_scale / s.rho_max * double(ft.dy[0](0, 0));
  return rt + rx * v + rho * vp * rbx;
}

}  // namespace nlflow::pinn
