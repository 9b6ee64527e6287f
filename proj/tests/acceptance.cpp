// Acceptance suite. Prints one PASS/FAIL line per criterion; the exit code is
// nonzero when a gated criterion fails. Soft criteria are reported only.

#include "nlflow/config.hpp"
#include "nlflow/error.hpp"
#include "nlflow/metrics.hpp"
#include "nlflow/microsim.hpp"
#include "nlflow/pinn/losses.hpp"
#include "nlflow/pinn/trainer.hpp"
#include "nlflow/pipeline.hpp"
#include "nlflow/stability.hpp"
#include "oracles/fv_nonlocal.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nlflow;
namespace fs = std::filesystem;

namespace {

struct Options {
  bool quick = false;
  std::string out = (fs::temp_directory_path() / "nlflow_acceptance").string();
  double train_cpu = 900.0;  // per training run
  double trend_cpu = 180.0;
  double identify_cpu = 600.0;
  int max_epochs = 20000;
  int time_stride = 10;
  int stability_samples = 100;
  int gradient_draws = 100;
  std::set<int> only;
};

struct Line {
  int id;
  bool gated;
  bool pass;
  std::string title;
  std::string detail;
};

std::vector<Line> g_lines;

void emit(int id, bool gated, bool pass, const std::string& title, const std::string& detail) {
  g_lines.push_back({id, gated, pass, title, detail});
  std::printf("%s criterion %d%s: %s | %s\n", pass ? "PASS" : "FAIL", id, gated ? "" : " (soft, not gated)",
              title.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

const std::vector<std::string> kModels = {"car_following", "look_ahead", "nudging"};

exp::ExperimentConfig base_config(const Options& o, const std::string& model, const std::string& dir) {
  auto cfg = exp::parse_config(R"({"schema_version": 1})");
  cfg.hv_model = model;
  cfg.hv = exp::baseline_controller(model);
  if (model == "nudging") cfg.train.eta_b = 30.0;
  cfg.train.epochs = o.max_epochs;
  cfg.train.time_stride = o.time_stride;
  cfg.train.cpu_seconds = o.train_cpu;
  cfg.output_dir = (fs::path(o.out) / dir).string();
  return cfg;
}

// ---------------------------------------------------------------------------
// 1 and 5: nonlocal vs local estimation error; constraint satisfaction.

std::map<std::string, exp::EvalReport> g_runs;

const exp::EvalReport& baseline_run(const Options& o, const std::string& model) {
  auto it = g_runs.find(model);
  if (it != g_runs.end()) return it->second;
  note("training " + model + " (nonlocal + local, " + fmt(o.train_cpu) + " s CPU each)");
  const auto rep = exp::run_pipeline(base_config(o, model, "baseline_" + model));
  note(model + ": nonlocal " + fmt(rep.error_nonlocal) + "% after " + std::to_string(rep.epochs_nonlocal) +
       " epochs, local " + fmt(rep.error_local) + "% after " + std::to_string(rep.epochs_local) + " epochs");
  return g_runs.emplace(model, rep).first->second;
}

void criterion_ordering(const Options& o) {
  bool pass = true;
  std::string detail;
  for (const auto& m : kModels) {
    const auto& r = baseline_run(o, m);
    if (!r.ok) {
      pass = false;
      detail += m + ": run failed in " + r.failed_stage + " (" + r.error + "); ";
      continue;
    }
    const bool ok = r.error_nonlocal <= 0.5 * r.error_local && r.error_nonlocal <= 2.0;
    pass = pass && ok;
    detail += m + " nonlocal " + fmt(r.error_nonlocal) + "% vs local " + fmt(r.error_local) + "% (" +
              std::to_string(r.epochs_nonlocal) + "/" + std::to_string(r.epochs_local) + " epochs)" +
              (ok ? "" : " [miss]") + "; ";
  }
  emit(1, true, pass, "nonlocal error <= 0.5x local and <= 2% for CF, look-ahead, nudging", detail);
}

void criterion_constraints(const Options& o) {
  bool pass = true;
  std::string detail;
  for (const auto& m : kModels) {
    const auto& r = baseline_run(o, m);
    if (r.constraint_violation < 0.0) {
      pass = false;
      detail += m + ": no trained model; ";
      continue;
    }
    pass = pass && r.constraint_violation <= 1e-3;
    detail += m + " max hinge " + fmt(r.constraint_violation) + "; ";
  }
  emit(5, true, pass, "kernel/FD well-posedness hinge <= 1e-3 after training with p = 1e6", detail);
}

// ---------------------------------------------------------------------------
// 2: KDE mass conservation

void criterion_mass(const Options& o) {
  bool pass = true;
  double worst = 0.0;
  int cases = 0;
  for (const auto& m : kModels) {
    auto cfg = base_config(o, m, "mass_" + m);
    const auto rep = exp::run_pipeline(cfg, exp::Stage::reconstruct);
    if (!rep.ok) {
      pass = false;
      note(m + ": " + rep.error);
      continue;
    }
    for (const auto& c : rep.cases) {
      worst = std::max(worst, c.mass_error);
      pass = pass && c.mass_error <= 1e-3;
      ++cases;
    }
  }
  emit(2, true, pass, "|dx sum rho - N| / N <= 1e-3 at every time slice",
       std::to_string(cases) + " cases, worst " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 3: differentiation against central differences

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

macro::MacroField random_field(std::mt19937_64& rng, int nx, int nt) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = 0.1 + 0.5 * u(rng), b = 0.1 + 0.5 * u(rng), c = 6.28 * u(rng);
  const double base = 0.03 + 0.08 * u(rng), amp = 0.3 * base * u(rng);
  macro::MacroField f;
  f.dx = 1.0;
  f.dt = 1.0;
  f.length = nx;
  f.horizon = nt;
  f.rho.resize(nx, nt);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nt; ++j) f.rho(i, j) = base + amp * std::sin(a * i + b * j + c);
  f.v = Eigen::MatrixXd::Constant(nx, nt, 5.0 + 10.0 * u(rng));
  f.q = f.rho.cwiseProduct(f.v);
  return f;
}

// Central difference with step h from samples at -2h, -h, +h, +2h, plus an
// estimate of its own error: truncation h^2 |f3| / 6 with the third
// derivative f3 taken from the wide stencil, and roundoff of the values.
struct Central {
  double value;
  double bound;
};

Central central(double fm2, double fm1, double fp1, double fp2, double f0, double h) {
  const double third = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h);
  const double round = 1e-15 * std::max({std::abs(fm2), std::abs(fm1), std::abs(fp1), std::abs(fp2), std::abs(f0)}) / h;
  return {(fp1 - fm1) / (2.0 * h), h * h * std::abs(third) / 6.0 + 4.0 * round};
}

void criterion_derivatives(const Options& o) {
  const double h = 1e-4, tol = 1e-5;
  long checked = 0, bad = 0, unresolved = 0;
  double worst = 0.0;
  for (int draw = 0; draw < o.gradient_draws; ++draw) {
    std::mt19937_64 rng(1000 + draw);
    std::normal_distribution<double> nd(0.0, 0.3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto f1 = random_field(rng, 24, 10);
    const auto f2 = random_field(rng, 24, 10);
    const auto o1 = macro::select_observations(f1, 2);
    const auto o2 = macro::select_observations(f2, 3);
    pinn::TrainConfig cfg;
    cfg.density_hidden = {6, 6};
    cfg.fd_hidden = {5, 5};
    cfg.eta_a = 4;
    cfg.eta_b = 2;
    cfg.fd_samples = 20;
    cfg.seed = static_cast<std::uint64_t>(draw);
    cfg.weights = {0.5, 10.0, 1e-3};
    auto s = pinn::init_state<double>({f1, f2}, cfg);
    Eigen::VectorXd p = s.flat();
    for (auto& x : p) x += nd(rng);
    for (Eigen::Index k = 0; k < s.kernel_theta.size(); ++k) p[s.kernel_offset() + k] = 0.2 + u(rng);
    s.set_flat(p);

    auto tally = [&](const std::string& what, double analytic, const Central& c) {
      ++checked;
      const double diff = std::abs(analytic - c.value);
      const double r = rel_err(analytic, c.value);
      if (r <= tol) {
        worst = std::max(worst, r);
        return;
      }
      if (diff <= c.bound) {
        // the difference quotient cannot resolve this derivative to 1e-5
        ++unresolved;
        return;
      }
      worst = std::max(worst, r);
      ++bad;
      note("draw " + std::to_string(draw) + " " + what + ": analytic " + fmt(analytic, 10) + ", central " +
           fmt(c.value, 10) + " (oracle error bound " + fmt(c.bound) + ")");
    };

    // Input derivatives of the density networks and the FD network.
    auto check_inputs = [&](const pinn::Mlp<double>& net, int dims, const std::string& what) {
      Eigen::MatrixXd in(dims, 16);
      for (auto& x : in.reshaped()) x = u(rng);
      pinn::MlpTape<double> tape;
      pinn::forward(net, in, true, tape);
      const Eigen::VectorXd y0 = pinn::evaluate(net, in);
      for (int d = 0; d < dims; ++d) {
        auto shifted = [&](double step) {
          Eigen::MatrixXd x = in;
          x.row(d).array() += step;
          return Eigen::VectorXd(pinn::evaluate(net, x));
        };
        const Eigen::VectorXd m2 = shifted(-2 * h), m1 = shifted(-h), p1 = shifted(h), p2 = shifted(2 * h);
        for (int c = 0; c < in.cols(); ++c) {
          tally(what + " input " + std::to_string(d), tape.dy[static_cast<std::size_t>(d)](0, c),
                central(m2[c], m1[c], p1[c], p2[c], y0[c], h));
        }
      }
    };
    for (const auto& d : s.density) check_inputs(d.net, 2, "density net");
    check_inputs(s.fd, 1, "FD net");

    // Parameter derivatives of the total loss (data + residual + constraints).
    pinn::LossEvaluator<double> ev(s, {pinn::make_case(f1, o1, 3), pinn::make_case(f2, o2, 2)}, cfg.weights);
    Eigen::VectorXd g;
    const double l0 = ev.evaluate(s, &g).total();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      auto loss_at = [&](double step) {
        Eigen::VectorXd q = p;
        q[i] += step;
        s.set_flat(q);
        return ev.evaluate(s, nullptr).total();
      };
      const double m2 = loss_at(-2 * h), m1 = loss_at(-h), p1 = loss_at(h), p2 = loss_at(2 * h);
      tally("parameter " + std::to_string(i), g[i], central(m2, m1, p1, p2, l0, h));
    }
    s.set_flat(p);
  }
  emit(3, true, bad == 0, "input and parameter derivatives match central differences (rel <= 1e-5)",
       std::to_string(o.gradient_draws) + " draws, " + std::to_string(checked) + " derivatives, " +
           std::to_string(bad) + " mismatches, " + std::to_string(unresolved) +
           " below the difference quotient's own error, worst resolved rel " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 4: recovery of a known kernel and FD from finite-volume data

void criterion_identifiability(const Options& o) {
  const double length = 100.0, horizon = 30.0, v_max = 10.0, rho_max = 0.2;
  const int cells = 10;
  oracle::FvProblem p;
  p.length = length;
  p.dx = 1.0;
  p.refine = 4;
  const double z = cells * (cells + 1) / 2.0;
  for (int k = 0; k < cells; ++k) {
    p.weights.push_back((cells - k) / z);
    p.offsets.push_back(k);
  }
  p.speed = [&](double r) { return v_max * (1.0 - r / rho_max); };
  p.initial = [&](double x) {
    return 0.08 + 0.03 * std::sin(2 * M_PI * x / length) + 0.015 * std::sin(4 * M_PI * x / length + 1.0);
  };
  p.v_bound = v_max;
  const int nt = static_cast<int>(horizon) + 1;
  const Eigen::MatrixXd rho = oracle::solve(p, 1.0, nt);

  macro::MacroField f;
  f.rho = rho;
  f.dx = 1.0;
  f.dt = 1.0;
  f.length = length;
  f.horizon = nt;
  f.v = rho.unaryExpr(p.speed);
  f.q = f.rho.cwiseProduct(f.v);
  macro::ObservationSet obs;
  for (int j = 0; j < f.nt(); ++j)
    for (int i = 0; i < f.nx(); ++i) obs.points.push_back({i, j, rho(i, j)});

  pinn::TrainConfig tc;
  tc.eta_a = cells;
  tc.eta_b = 0.0;
  tc.v_scale = v_max;
  tc.rho_max = rho_max;
  tc.epochs = o.max_epochs;
  tc.cpu_seconds = o.identify_cpu;
  const auto res = pinn::train({f}, {obs}, tc);

  double l1 = 0.0;
  for (int k = 0; k < cells; ++k) l1 += std::abs(res.kernel[static_cast<std::size_t>(k)] - p.weights[static_cast<std::size_t>(k)]);
  const double lo = rho.minCoeff(), hi = rho.maxCoeff();
  double se = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < res.fd.rho.size(); ++i) {
    const double r = res.fd.rho[i];
    if (r < lo || r > hi) continue;
    const double d = res.fd.speed[i] - p.speed(r);
    se += d * d;
    ++n;
  }
  const double rmse_pct = n > 0 ? 100.0 * std::sqrt(se / n) / v_max : 1e9;
  emit(4, true, !res.diverged && l1 <= 0.1 && rmse_pct <= 5.0,
       "finite-volume data recovers kernel (L1 <= 0.1) and FD (RMSE <= 5% v_max)",
       "L1 " + fmt(l1) + ", FD RMSE " + fmt(rmse_pct) + "% of v_max over observed rho [" + fmt(lo) + ", " + fmt(hi) +
           "], " + std::to_string(res.history.size()) + " epochs");
}

// ---------------------------------------------------------------------------
// 6: stability classification vs simulation

// Largest steady-state ratio of tail to head speed deviation over a sweep of
// sinusoidal head speed excitations.
double chain_amplification(const microsim::ControllerParams& params, double gap, double v_star, int vehicles) {
  const double eps = 1e-3, dt = 0.05, settle = 300.0;
  double worst = 0.0;
  for (int k = 0; k < 24; ++k) {
    const double omega = 0.005 * std::pow(1000.0, k / 23.0);
    const double window = std::max(200.0, 2.0 * 2.0 * M_PI / omega);
    const auto v = microsim::simulate_platoon(
        params, vehicles, gap, [&](double t) { return v_star + eps * std::sin(omega * t); }, dt, settle + window, dt);
    const Eigen::Index first = static_cast<Eigen::Index>(std::lround(settle / dt));
    const auto tail = v.col(vehicles - 1).segment(first, v.rows() - first).array() - v_star;
    const auto head = v.col(0).segment(first, v.rows() - first).array() - v_star;
    worst = std::max(worst, tail.abs().maxCoeff() / head.abs().maxCoeff());
  }
  return worst;
}

void criterion_stability(const Options& o) {
  const int n = o.stability_samples;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto vopt = microsim::car_following_baseline().vopt;

  int agree_string = 0, freq_stable = 0, band = 0;
  std::vector<std::string> string_mismatch;
  for (int k = 0; k < n; ++k) {
    microsim::ControllerParams c(vopt, 2, 0);
    c.set_alpha(0, 0.05 + 0.95 * u(rng));
    c.set_beta(0, 0.6 * u(rng));
    for (int j : {-1, -2}) {
      c.set_alpha(j, 0.05 * u(rng));
      c.set_beta(j, 0.1 * u(rng));
    }
    const double gap = 4.0 + 18.0 * u(rng);
    const double v_star = microsim::v_opt(gap, vopt);
    const auto model = stability::linearize(c, gap, v_star);
    const double margin = stability::string_stability_margin(model, stability::log_grid());
    const bool freq = margin < 1.0;
    const double ratio = chain_amplification(c, gap, v_star, 10);
    // 5% slack for a stable verdict; an unstable verdict needs the tail to
    // amplify at all
    const bool agree = freq ? ratio <= 1.05 : ratio > 1.0;
    freq_stable += freq;
    band += !freq && ratio <= 1.05;
    if (agree) {
      ++agree_string;
    } else {
      string_mismatch.push_back("#" + std::to_string(k) + " margin " + fmt(margin, 6) + " ratio " + fmt(ratio, 6));
    }
  }

  int agree_plant = 0, eig_stable = 0;
  std::vector<std::string> plant_mismatch;
  const int sizes[4] = {10, 13, 16, 19};
  for (int k = 0; k < n; ++k) {
    microsim::ControllerParams c(vopt, 1, 1);
    c.set_alpha(0, 0.05 + 0.95 * u(rng));
    c.set_beta(0, 0.6 * u(rng));
    c.set_alpha(-1, 0.05 * u(rng));
    c.set_beta(-1, 0.1 * u(rng));
    c.set_alpha(1, 0.05 * u(rng));
    c.set_beta(1, 0.1 * u(rng));
    microsim::RingConfig ring;
    ring.vehicles = sizes[k % 4];
    ring.horizon = 1500.0;
    ring.record_interval = 1.0;
    ring.seed = static_cast<std::uint64_t>(k);
    ring.perturbation.kind = microsim::Perturbation::Kind::random;
    ring.perturbation.amplitude = 0.01;
    const auto eq = microsim::equilibrium(ring, vopt);
    const double abscissa = stability::plant_stability_ring(stability::linearize(c, eq.gap, eq.speed), ring.vehicles);
    const bool eig = abscissa < -1e-9;

    const auto traj = microsim::simulate(ring, {c, c, 0.0});
    auto deviation = [&](Eigen::Index row) {
      const double dv = (traj.speeds.row(row).array() - eq.speed).matrix().squaredNorm();
      const double ds = (traj.gaps.row(row).array() - eq.gap).matrix().squaredNorm();
      return std::sqrt(dv + ds);
    };
    const Eigen::Index last = traj.samples() - 1;
    const double d0 = deviation(0), dmid = deviation(last / 2), dend = deviation(last);
    // fully decayed runs sit at roundoff, where dend == dmid
    const bool converging = !traj.collided && dend <= dmid && dend < d0;
    eig_stable += eig;
    if (eig == converging) {
      ++agree_plant;
    } else {
      plant_mismatch.push_back("#" + std::to_string(k) + " abscissa " + fmt(abscissa) + " D0 " + fmt(d0) + " Dmid " +
                               fmt(dmid) + " Dend " + fmt(dend));
    }
  }
  for (const auto& s : string_mismatch) note("string mismatch " + s);
  for (const auto& s : plant_mismatch) note("plant mismatch " + s);
  const bool pass = agree_string >= 0.95 * n && agree_plant >= 0.95 * n;
  emit(6, true, pass, "frequency/eigenvalue classification agrees with simulation on >= 95% of samples",
       "string " + std::to_string(agree_string) + "/" + std::to_string(n) + " (" + std::to_string(freq_stable) +
           " stable, " + std::to_string(band) + " unstable within 5% chain gain), plant " + std::to_string(agree_plant) + "/" + std::to_string(n) + " (" +
           std::to_string(eig_stable) + " stable)");
}

// ---------------------------------------------------------------------------
// 7: unperturbed ring stays at equilibrium

void criterion_equilibrium(const Options&) {
  double worst = 0.0;
  int runs = 0;
  for (const auto& m : kModels) {
    const auto params = exp::baseline_controller(m);
    for (int n : {10, 13, 16, 19}) {
      microsim::RingConfig ring;
      ring.vehicles = n;
      ring.record_interval = ring.dt;
      ring.perturbation.kind = microsim::Perturbation::Kind::none;
      const auto eq = microsim::equilibrium(ring, params.vopt);
      const auto traj = microsim::simulate(ring, {params, params, 0.0});
      worst = std::max(worst, (traj.speeds.array() - eq.speed).abs().maxCoeff());
      ++runs;
    }
  }
  emit(7, true, worst < 1e-9, "unperturbed ring holds sup |v - v*| < 1e-9 over the horizon",
       std::to_string(runs) + " runs, worst " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 8: trend suite

void criterion_trends(const Options& o) {
  // (a) look-ahead kernel mean against the first look-ahead gap gain, pure
  // CAV traffic on the CF desired speed. The calibrated HV gains have alpha0
  // near 0.02, and any of these alpha_-1 values makes that ring plant unstable.
  auto la = base_config(o, "car_following", "trend_alpha_m1");
  la.cav_model = "look_ahead";
  la.cav = microsim::ControllerParams(microsim::car_following_baseline().vopt, 1, 0);
  la.cav.set_alpha(0, 0.8);
  la.cav.set_beta(0, 0.8);
  la.cav.set_beta(-1, 0.1);
  la.penetration = 1.0;
  la.local_baseline = false;
  la.train.cpu_seconds = o.trend_cpu;
  const std::vector<double> gains{0.2, 0.5, 0.7};
  const auto reps = exp::sweep(la, "alpha_m1", gains, "cav");
  std::vector<double> means;
  for (const auto& r : reps) {
    if (!r.ok) note(r.run_dir + ": " + r.failed_stage + " failed: " + r.error);
    means.push_back(r.ok ? r.kernel_mean : std::nan(""));
  }
  int increases = 0;
  for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 2}, std::pair{0, 2}}) increases += means[j] > means[i];
  const bool a = increases >= 2;

  // (b) scatter of (rho_eta, v) narrower than (rho, v) on CF
  const auto& cf = baseline_run(o, "car_following");
  const bool b = cf.ok && cf.scatter_rho_eta < cf.scatter_rho;

  // (c) c_d with the lowest error lies in [1e-2, 1]
  auto cd = base_config(o, "car_following", "trend_c_d");
  cd.local_baseline = false;
  cd.train.cpu_seconds = o.trend_cpu;
  const std::vector<double> cds{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  const auto creps = exp::sweep(cd, "c_d", cds);
  std::size_t best = 0;
  std::string errs;
  for (std::size_t i = 0; i < creps.size(); ++i) {
    const double e = creps[i].ok ? creps[i].error_nonlocal : INFINITY;
    errs += fmt(e) + (i + 1 < creps.size() ? "," : "");
    if (e < (creps[best].ok ? creps[best].error_nonlocal : INFINITY)) best = i;
  }
  const bool c = cds[best] >= 1e-2 && cds[best] <= 1.0;

  emit(8, false, a && b && c, "qualitative trends",
       std::string("(a) ") + (a ? "ok" : "no") + " kernel means " + fmt(means[0]) + "," + fmt(means[1]) + "," +
           fmt(means[2]) + " m; (b) " + (b ? "ok" : "no") + " scatter rho_eta " + fmt(cf.scatter_rho_eta) +
           " vs rho " + fmt(cf.scatter_rho) + "; (c) " + (c ? "ok" : "no") + " errors " + errs +
           " % min at c_d=" + fmt(cds[best]));
}

// ---------------------------------------------------------------------------
// 9: error metric examples

void criterion_metric(const Options&) {
  Eigen::MatrixXd rho(3, 4);
  rho << 0.05, 0.06, 0.07, 0.08, 0.02, 0.03, 0.04, 0.05, 0.1, 0.11, 0.12, 0.13;
  const double e0 = metrics::estimation_error(rho, rho);
  const double e1 = metrics::estimation_error(rho, 1.1 * rho);
  Eigen::MatrixXd t(2, 1), g(2, 1);
  t << 0.05, 0.08;
  g << 0.05 * 1.1, 0.08 * 1.3;
  const double e2 = metrics::estimation_error(t, g);
  const bool pass = e0 == 0.0 && std::abs(e1 - 10.0) <= 1e-9 && std::abs(e2 - 22.36) <= 0.01;
  emit(9, true, pass, "estimation error examples give 0, 10 and 22.36",
       fmt(e0, 10) + ", " + fmt(e1, 10) + ", " + fmt(e2, 10));
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  std::string only;
  CLI::App app{"nlflow acceptance suite"};
  app.add_flag("--quick", o.quick, "Small budgets for a smoke run");
  app.add_option("--out", o.out, "Scratch directory for pipeline runs");
  app.add_option("--train-cpu", o.train_cpu, "CPU seconds per baseline training run");
  app.add_option("--trend-cpu", o.trend_cpu, "CPU seconds per trend-suite training run");
  app.add_option("--identify-cpu", o.identify_cpu, "CPU seconds for the identifiability training");
  app.add_option("--only", only, "Comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);
  if (o.quick) {
    o.train_cpu = 20.0;
    o.trend_cpu = 5.0;
    o.identify_cpu = 20.0;
    o.stability_samples = 20;
    o.gradient_draws = 10;
  }
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');) o.only.insert(std::stoi(tok));
  fs::create_directories(o.out);

  const std::vector<std::pair<int, void (*)(const Options&)>> order{
      {9, criterion_metric},       {7, criterion_equilibrium}, {2, criterion_mass},
      {3, criterion_derivatives},  {6, criterion_stability},   {4, criterion_identifiability},
      {1, criterion_ordering},     {5, criterion_constraints}, {8, criterion_trends}};
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [id, fn] : order) {
    if (!o.only.empty() && !o.only.count(id)) continue;
    try {
      fn(o);
    } catch (const std::exception& e) {
      emit(id, id != 8, false, "aborted", e.what());
    }
  }
  int failed = 0;
  for (const auto& l : g_lines) failed += l.gated && !l.pass;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d gated criteria failed (%.0f s)\n", failed, secs);
  return failed == 0 ? 0 : 1;
}
