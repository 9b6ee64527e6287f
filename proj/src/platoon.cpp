#include "feedback.hpp"
#include "nlflow/error.hpp"
#include "nlflow/microsim.hpp"

#include <cmath>

namespace nlflow::microsim {

Eigen::MatrixXd simulate_platoon(const ControllerParams& params, int vehicles, double gap,
                                 const std::function<double(double)>& head_speed, double dt,
                                 double horizon, double record_interval) {
  if (vehicles < 2) throw ConfigError("platoon needs at least two vehicles");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigError("dt and horizon must be positive");
  const long every = std::lround(record_interval / dt);
  if (every < 1) throw ConfigError("record interval must be >= dt");
  const int n = vehicles;

  // State of followers 1..n-1; the head is exogenous.
  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, gap);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, head_speed(0.0));

  auto accel = [&](double t, const Eigen::VectorXd& sg, const Eigen::VectorXd& sp) {
    const double vh = head_speed(t);
    auto gap_of = [&](int k) { return k <= 0 ? gap : sg[std::min(k, n - 1)]; };
    auto speed_of = [&](int k) { return k <= 0 ? vh : sp[std::min(k, n - 1)]; };
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 1; i < n; ++i) a[i] = detail::feedback(i, gap_of, speed_of, params);
    return a;
  };
  auto rates = [&](double t, const Eigen::VectorXd& sp) {
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(n);
    ds[1] = head_speed(t) - sp[1];
    for (int i = 2; i < n; ++i) ds[i] = sp[i - 1] - sp[i];
    return ds;
  };

  const long steps = std::lround(horizon / dt);
  Eigen::MatrixXd out(steps / every + 1, n);
  long row = 0;
  auto record = [&](double t) {
    v[0] = head_speed(t);
    out.row(row++) = v.transpose();
  };
  record(0.0);
  for (long step = 1; step <= steps; ++step) {
    const double t = (step - 1) * dt;
    const Eigen::VectorXd k1v = accel(t, s, v), k1s = rates(t, v);
    const Eigen::VectorXd v1 = v + 0.5 * dt * k1v, s1 = s + 0.5 * dt * k1s;
    const Eigen::VectorXd k2v = accel(t + 0.5 * dt, s1, v1), k2s = rates(t + 0.5 * dt, v1);
    const Eigen::VectorXd v2 = v + 0.5 * dt * k2v, s2 = s + 0.5 * dt * k2s;
    const Eigen::VectorXd k3v = accel(t + 0.5 * dt, s2, v2), k3s = rates(t + 0.5 * dt, v2);
    const Eigen::VectorXd v3 = v + dt * k3v, s3 = s + dt * k3s;
    const Eigen::VectorXd k4v = accel(t + dt, s3, v3), k4s = rates(t + dt, v3);
    s += (dt / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
    v += (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (step % every == 0) record(step * dt);
  }
  out.conservativeResize(row, n);
  return out;
}

}  // namespace nlflow::microsim
