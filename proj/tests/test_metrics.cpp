#include "nlflow/error.hpp"
#include "nlflow/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nlflow;
using namespace nlflow::metrics;

TEST_CASE("estimation error examples") {
  Eigen::MatrixXd rho(3, 4);
  rho << 0.1, 0.2, 0.3, 0.4, 0.05, 0.06, 0.07, 0.08, 0.01, 0.02, 0.03, 0.04;
  CHECK(estimation_error(rho, rho) == 0.0);
  CHECK(estimation_error(rho, 1.1 * rho) == doctest::Approx(10.0).epsilon(1e-12));
  Eigen::MatrixXd t(2, 1), e(2, 1);
  t << 1.0, 2.0;
  e << 1.1, 1.4;
  CHECK(estimation_error(t, e) == doctest::Approx(100.0 * std::sqrt(0.05)).epsilon(1e-12));
  CHECK(std::abs(estimation_error(t, e) - 22.36) <= 0.01);
}

TEST_CASE("estimation error is scale consistent") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.1);
  Eigen::MatrixXd a(20, 30), b(20, 30);
  for (auto& x : a.reshaped()) x = u(rng);
  for (auto& x : b.reshaped()) x = u(rng);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    CHECK(estimation_error(c * a, c * b) == doctest::Approx(estimation_error(a, b)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(estimation_error(a, b.topRows(3)), DataError);
  a(3, 3) = 0.0;
  CHECK_THROWS_AS(estimation_error(a, b), DataError);
}

TEST_CASE("kernel mass and mean") {
  const pinn::KernelLayout spike{1, 0, 1.0};
  const std::vector<double> one{1.0};
  CHECK(kernel_mass_within(one, spike, 5.0) == 1.0);
  CHECK(kernel_mean(one, spike) == 0.0);

  const pinn::KernelLayout u30{30, 0, 1.0};
  const std::vector<double> uniform(30, 1.0 / 30.0);
  CHECK(kernel_mass_within(uniform, u30, 5.0) == doctest::Approx(5.0 / 30.0));
  CHECK(kernel_mean(uniform, u30) == doctest::Approx(14.5));

  const pinn::KernelLayout three{3, 0, 2.0};
  const std::vector<double> w{0.5, 0.3, 0.2};
  CHECK(kernel_mass_within(w, three, 4.0) == doctest::Approx(0.8));
  CHECK(kernel_mean(w, three) == doctest::Approx(0.3 * 2.0 + 0.2 * 4.0));

  // look-behind weights count toward the mass but not the look-ahead mean
  const pinn::KernelLayout both{2, 2, 1.0};
  const std::vector<double> wb{0.4, 0.2, 0.3, 0.1};
  CHECK(kernel_mass_within(wb, both, 1.5) == doctest::Approx(0.9));
  CHECK(kernel_mean(wb, both) == doctest::Approx(0.2 / 0.6));
}

TEST_CASE("FD scatter width") {
  std::vector<double> rho, v;
  for (int i = 0; i < 200; ++i) {
    rho.push_back(0.001 * i);
    v.push_back(30.0 - 100.0 * rho.back());
  }
  CHECK(fd_scatter_width(rho, v).width == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(fd_scatter_width(rho, v).degenerate);

  // two readings per density, +-delta around the curve
  const double delta = 0.01;
  std::vector<double> rho2, noisy;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    rho2.insert(rho2.end(), {rho[i], rho[i]});
    noisy.insert(noisy.end(), {v[i] + delta, v[i] - delta});
  }
  CHECK(fd_scatter_width(rho2, noisy).width == doctest::Approx(delta).epsilon(1e-9));

  // random-sign noise on a steep curve: the fit cannot absorb it either way
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> r2;
  for (std::size_t i = 0; i < rho2.size(); i += 2) {
    const double s = coin(rng) ? delta : -delta;
    r2.insert(r2.end(), {v[i / 2] + s, v[i / 2] - s});
  }
  CHECK(fd_scatter_width(rho2, r2).width == doctest::Approx(delta).epsilon(1e-9));

  // order of pairs does not matter
  std::vector<double> rr(rho2.rbegin(), rho2.rend()), vr(noisy.rbegin(), noisy.rend());
  CHECK(fd_scatter_width(rr, vr).width == doctest::Approx(delta).epsilon(1e-9));

  // monotone noise is absorbed by the fit
  std::vector<double> mono = v;
  for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += (i % 2 ? delta : -delta);
  CHECK(fd_scatter_width(rho, mono).width < 1e-12);

  const std::vector<double> flat(20, 0.05), speeds(20, 3.0);
  const auto d = fd_scatter_width(flat, speeds);
  CHECK(d.degenerate);
  CHECK(d.width == 0.0);
  CHECK_THROWS_AS(fd_scatter_width(std::vector<double>(5, 0.1), std::vector<double>(5, 1.0)), DataError);
  CHECK_THROWS_AS(fd_scatter_width(rho, std::vector<double>(10, 1.0)), DataError);
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
