#include "nlflow/error.hpp"
#include "nlflow/stability.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>

using namespace nlflow;
using namespace nlflow::stability;
using microsim::ControllerParams;

namespace {

ControllerParams acc(double a0, double b0, microsim::VOptParams vo = {20.0, 2.0, 22.0}) {
  ControllerParams p(vo, 0, 0);
  p.set_alpha(0, a0);
  p.set_beta(0, b0);
  return p;
}

LinearizedModel model_with_kappa(const ControllerParams& p, double kappa) {
  LinearizedModel m;
  m.gains = p;
  m.kappa = kappa;
  return m;
}

// Brute-force maximum of |G(jw)| by dense sampling over the grid range,
// independent of the closed-form peak used in the library.
double dense_acc_peak(double a0, double b0, double k) {
  double best = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double w = std::pow(10.0, -3.0 + 5.0 * i / 200000.0);
    const std::complex<double> s(0.0, w);
    best = std::max(best, std::abs((b0 * s + a0 * k) / (s * s + (a0 + b0) * s + a0 * k)));
  }
  return best;
}

}  // namespace

TEST_CASE("linearization slope on each V_opt branch") {
  const auto cf = microsim::car_following_baseline();
  CHECK(linearize(cf, 21.0, 14.193).kappa == doctest::Approx(17.08 / (24.96 - 1.53)));
  CHECK(linearize(cf, 21.0, 14.193).kappa == doctest::Approx(0.729).epsilon(1e-3));
  CHECK(linearize(cf, 30.0, 17.08).kappa == 0.0);
  CHECK(linearize(cf, 1.0, 0.0).kappa == 0.0);
  CHECK_THROWS_AS(linearize(cf, 1.53, 0.0), ParameterError);
  CHECK_THROWS_AS(linearize(cf, 24.96, 17.08), ParameterError);
}

TEST_CASE("ACC margin examples") {
  const auto grid = log_grid();
  CHECK(grid.size() == 200);
  CHECK(grid.front() == doctest::Approx(1e-3));
  CHECK(grid.back() == doctest::Approx(1e2));
  CHECK(string_stability_margin(model_with_kappa(acc(1, 1), 1.0), grid) < 1.0);
  CHECK(string_stability_margin(model_with_kappa(acc(1, 0), 1.0), grid) > 1.0);
  for (auto [a0, b0] : {std::pair{0.3, 0.6}, std::pair{2.0, 0.5}, std::pair{0.01, 0.7}}) {
    CHECK(string_stability_margin(model_with_kappa(acc(a0, b0), 0.0), grid) == doctest::Approx(b0 / (a0 + b0)));
  }
}

TEST_CASE("ACC margin matches a dense brute-force maximum") {
  const auto grid = log_grid();
  for (double a0 : {0.011, 0.2, 1.0, 3.0}) {
    for (double b0 : {0.0, 0.3, 0.718, 2.0}) {
      for (double k : {0.3, 0.729, 1.5}) {
        const double margin = string_stability_margin(model_with_kappa(acc(a0, b0), k), grid);
        const double dense = dense_acc_peak(a0, b0, k);
        CHECK(margin == doctest::Approx(dense).epsilon(1e-6));
        // closed-form condition for a peak above one
        if (2 * k > a0 + 2 * b0 + 1e-9) CHECK(margin > 1.0);
        if (2 * k < a0 + 2 * b0 - 1e-9) CHECK(margin <= 1.0);
      }
    }
  }
}

TEST_CASE("margin does not depend on v*") {
  auto m = linearize(microsim::look_ahead_baseline(), 20.0, 10.0);
  const double a = string_stability_margin(m, log_grid());
  m.v_star = 3.0;
  CHECK(string_stability_margin(m, log_grid()) == a);
}

TEST_CASE("chain response reduces to powers of G for ACC-only gains") {
  const auto m = model_with_kappa(acc(0.4, 0.9), 0.8);
  for (double w : {0.01, 0.3, 2.0}) {
    const auto g = acc_transfer(0.4, 0.9, 0.8, w);
    const auto h = chain_response(m, w, 10);
    CHECK(std::abs(h - std::pow(g, 9)) < 1e-12 * std::max(1.0, std::abs(h)));
  }
}

TEST_CASE("look-ahead chain response against a direct linear solve") {
  // Build the frequency-domain equations of a 6-vehicle open platoon and
  // solve them as a dense complex system.
  ControllerParams p({20.0, 2.0, 22.0}, 2, 0);
  p.set_alpha(0, 0.3);
  p.set_beta(0, 0.6);
  p.set_alpha(-1, 0.1);
  p.set_beta(-1, 0.2);
  p.set_alpha(-2, 0.05);
  p.set_beta(-2, 0.07);
  const double k = 1.0, w = 0.7;
  const auto m = model_with_kappa(p, k);
  const std::complex<double> s(0.0, w);
  const int n = 6;
  // unknowns: V_0..V_{n-1}, S_0..S_{n-1}; V_0 = 1; virtual leaders copy the head
  // (speed V_0, gap perturbation 0).
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(2 * n);
  auto V = [](int i) { return i; };
  auto S = [n](int i) { return n + i; };
  A(0, V(0)) = 1.0;
  b(0) = 1.0;
  A(S(0), S(0)) = 1.0;  // head gap perturbation fixed at 0
  for (int i = 1; i < n; ++i) {
    auto vidx = [&](int j) { return std::max(j, 0); };
    // s S_i = V_{i-1} - V_i
    A(S(i), S(i)) = s;
    A(S(i), V(i - 1)) -= 1.0;
    A(S(i), V(i)) += 1.0;
    // s V_i = sum_j a_j (k S_{i+j} - V_i) + b_j (V_{i+j-1} - V_i)
    A(V(i), V(i)) += s;
    for (int j = 0; j >= -2; --j) {
      const int gi = i + j;
      if (gi >= 1) A(V(i), S(gi)) -= p.alpha(j) * k;
      A(V(i), V(i)) += p.alpha(j) + p.beta(j);
      A(V(i), V(vidx(i + j - 1))) -= p.beta(j);
    }
  }
  const Eigen::VectorXcd x = A.fullPivLu().solve(b);
  CHECK(std::abs(chain_response(m, w, n) - x(V(n - 1))) < 1e-10);
}

TEST_CASE("look-behind gains are not analysed in the frequency domain") {
  const auto m = linearize(microsim::nudging_baseline(), 10.0, 5.0);
  CHECK_THROWS_AS(string_stability_margin(m, log_grid()), UnsupportedAnalysis);
  const auto r = analyze(microsim::nudging_baseline(), 10.0, v_opt(10.0, microsim::nudging_baseline().vopt), 10);
  CHECK_FALSE(r.string_analysis_supported);
}

TEST_CASE("ring spectrum examples") {
  ControllerParams zero({20.0, 2.0, 22.0}, 0, 0);
  CHECK(std::abs(plant_stability_ring(model_with_kappa(zero, 1.0), 10)) < 1e-12);
  CHECK(plant_stability_ring(model_with_kappa(acc(1, 1), 1.0), 10) < 0.0);
  CHECK_THROWS_AS(plant_stability_ring(model_with_kappa(acc(1, 1), 1.0), 1), ConfigError);
}

TEST_CASE("ring matrix structure") {
  const std::vector<ControllerParams> ctrl(4, acc(0.5, 0.25));
  const auto a = ring_system_matrix(ctrl, [](int, int) { return 2.0; }, true);
  CHECK(a.rows() == 8);
  // gap of vehicle 1 grows with the speed of vehicle 0
  CHECK(a(1, 4 + 0) == 1.0);
  CHECK(a(1, 4 + 1) == -1.0);
  // vehicle 0 follows vehicle 3 across the wrap
  CHECK(a(0, 4 + 3) == 1.0);
  CHECK(a(4 + 2, 2) == doctest::Approx(0.5 * 2.0));
  CHECK(a(4 + 2, 4 + 1) == doctest::Approx(0.25));
  CHECK(a(4 + 2, 4 + 2) == doctest::Approx(-0.75));
  // total gap is conserved: the gap rows sum to zero
  CHECK(a.topRows(4).colwise().sum().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stability report JSON") {
  const auto r = analyze(microsim::car_following_baseline(), 21.0, 14.193, 10);
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["kappa"].get<double>() == doctest::Approx(0.729).epsilon(1e-3));
  CHECK(j["plant_stable"].get<bool>() == r.plant_stable);
  CHECK(j["max_gain"].get<double>() == r.max_gain);
  // baseline CF: 2 kappa = 1.458 > a0 + 2 b0 = 1.447, a faint amplification
  CHECK(r.max_gain > 1.0);
  CHECK(r.max_gain < 1.01);
}
