#include "nlflow/pinn/trainer.hpp"

#include <cmath>
#include <ctime>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nlflow::pinn {

template <class Scalar>
PinnState<Scalar> init_state(const std::vector<macro::MacroField>& fields, const TrainConfig& cfg) {
  if (fields.empty()) throw ConfigError("training needs at least one case");
  if (!(cfg.rho_max > 0) || !(cfg.v_scale > 0) || cfg.fd_samples < 2) throw ConfigError("invalid FD scaling");
  std::mt19937_64 rng(cfg.seed);
  PinnState<Scalar> s;
  s.rho_max = cfg.rho_max;
  s.v_scale = cfg.v_scale;
  s.fd_samples = cfg.fd_samples;

  std::vector<int> dw{2};
  dw.insert(dw.end(), cfg.density_hidden.begin(), cfg.density_hidden.end());
  dw.push_back(1);
  double mean_speed = 0.0;
  for (const auto& f : fields) {
    DensityNet<Scalar> d{Mlp<Scalar>(dw), f.length, f.horizon};
    d.net.init_glorot(rng);
    d.net.bias(d.net.layers() - 1)(0) = static_cast<Scalar>(f.rho.mean() / cfg.rho_max);
    s.density.push_back(std::move(d));
    mean_speed += f.v.mean() / static_cast<double>(fields.size());
  }

  if (cfg.local) {
    s.layout = local_layout(cfg.dx);
    s.kernel_frozen = true;
  } else {
    s.layout = make_layout(cfg.eta_a, cfg.eta_b, cfg.dx);
  }
  s.kernel_theta = VectorX<Scalar>::Ones(s.layout.size());

  std::vector<int> fw{1};
  fw.insert(fw.end(), cfg.fd_hidden.begin(), cfg.fd_hidden.end());
  fw.push_back(1);
  s.fd = Mlp<Scalar>(fw);
  s.fd.init_glorot(rng);
  // Start from a constant FD: a random initial curve violates the monotone
  // hinge, and the resulting huge penalty gradients inflate Adam's second
  // moments for the FD weights for tens of thousands of epochs.
  s.fd.weight(s.fd.layers() - 1).setZero();
  if (std::isfinite(mean_speed)) s.fd.bias(s.fd.layers() - 1)(0) = static_cast<Scalar>(mean_speed / cfg.v_scale);
  return s;
}

template PinnState<float> init_state<float>(const std::vector<macro::MacroField>&, const TrainConfig&);
template PinnState<double> init_state<double>(const std::vector<macro::MacroField>&, const TrainConfig&);

TrainResult train(const std::vector<macro::MacroField>& fields, const std::vector<macro::ObservationSet>& obs,
                  const TrainConfig& cfg, const EpochCallback& callback) {
  if (fields.size() != obs.size()) throw ConfigError("one observation set per case is required");
  if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(cfg.learning_rate > 0)) throw ConfigError("learning rate must be positive");
#if defined(__GLIBC__)
  // Keep large activation buffers in the heap instead of fresh mmaps, which
  // otherwise page-fault on every epoch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  using S = float;
  PinnState<S> state = init_state<S>(fields, cfg);
  std::vector<CaseData> cases;
  for (std::size_t k = 0; k < fields.size(); ++k) cases.push_back(make_case(fields[k], obs[k], cfg.time_stride));
  LossEvaluator<S> eval(state, cases, cfg.weights);

  TrainResult result;
  VectorX<S> params = state.flat();
  VectorX<S> m = VectorX<S>::Zero(params.size());
  VectorX<S> v = VectorX<S>::Zero(params.size());
  VectorX<S> grad;
  const S lr = static_cast<S>(cfg.learning_rate);
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  const S eps = static_cast<S>(cfg.epsilon);
  double b1t = 1.0, b2t = 1.0;
  const std::clock_t start = std::clock();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossParts parts = eval.evaluate(state, &grad);
    const EpochLoss loss{parts.data, parts.physics, parts.constraint};
    result.history.push_back(loss);
    if (!std::isfinite(loss.total()) || !grad.allFinite()) {
      result.diverged = true;
      result.message = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    if (callback && !callback(epoch, loss)) break;
    if (cfg.cpu_seconds > 0.0 && double(std::clock() - start) / CLOCKS_PER_SEC > cfg.cpu_seconds) {
      result.time_limited = true;
      result.message = "cpu limit reached after " + std::to_string(epoch + 1) + " epochs";
      break;
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = b1 * m + (S(1) - b1) * grad;
    v = b2 * v + (S(1) - b2) * grad.cwiseAbs2();
    const S c1 = static_cast<S>(1.0 / (1.0 - b1t));
    const S c2 = static_cast<S>(1.0 / (1.0 - b2t));
    params.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
    state.set_flat(params);
  }

  result.state = state.cast<double>();
  if (!result.diverged) {
    LossEvaluator<double> final_eval(result.state, cases, cfg.weights);
    result.final_loss = final_eval.evaluate(result.state, nullptr);
  }
  const auto w = result.state.kernel_weights();
  result.kernel.assign(w.data(), w.data() + w.size());
  result.fd = sample_fd(result.state);
  return result;
}

Eigen::MatrixXd predict_density(const PinnState<double>& s, std::size_t k, int nx, int nt, double dx, double dt) {
  if (k >= s.density.size()) throw ConfigError("case index out of range");
  CaseData c;
  c.nx = nx;
  c.nt = nt;
  c.dx = dx;
  c.dt = dt;
  std::vector<int> rows(static_cast<std::size_t>(nt));
  for (int j = 0; j < nt; ++j) rows[static_cast<std::size_t>(j)] = j;
  const auto in = row_inputs(s.density[k], c, rows);
  const Eigen::VectorXd y = evaluate(s.density[k].net, in) * s.rho_max;
  return Eigen::Map<const Eigen::MatrixXd>(y.data(), nx, nt);
}

Eigen::VectorXd predict_fd(const PinnState<double>& s, const Eigen::VectorXd& rho) {
  const Eigen::MatrixXd in = rho.transpose() / s.rho_max;
  return evaluate(s.fd, in) * s.v_scale;
}

FdCurve sample_fd(const PinnState<double>& s) {
  FdCurve c;
  Eigen::VectorXd rho(s.fd_samples + 1);
  for (int i = 0; i <= s.fd_samples; ++i) rho[i] = s.rho_max * i / s.fd_samples;
  const Eigen::VectorXd v = predict_fd(s, rho);
  c.rho.assign(rho.data(), rho.data() + rho.size());
  c.speed.assign(v.data(), v.data() + v.size());
  return c;
}

double max_constraint_violation(const PinnState<double>& s) {
  double worst = 0.0;
  if (!s.kernel_frozen) {
    const auto w = s.kernel_weights();
    const auto& L = s.layout;
    for (int k = 0; k < L.size(); ++k) worst = std::max(worst, -w[k]);
    for (int k = 0; k + 1 < L.ahead; ++k) worst = std::max(worst, w[k + 1] - w[k]);
    for (int k = L.ahead; k + 1 < L.size(); ++k) worst = std::max(worst, w[k + 1] - w[k]);
    if (L.behind > 0) worst = std::max(worst, w[L.ahead] - w[0]);
  }
  Eigen::MatrixXd grid(1, s.fd_samples);
  for (int i = 0; i < s.fd_samples; ++i) grid(0, i) = double(i) / s.fd_samples;
  MlpTape<double> tape;
  forward(s.fd, grid, true, tape);
  const double vs = s.v_scale;
  const double ss = s.v_scale / s.rho_max;
  worst = std::max(worst, -(tape.y.minCoeff() * vs));
  worst = std::max(worst, tape.dy[0].maxCoeff() * ss);
  return worst;
}

}  // namespace nlflow::pinn
