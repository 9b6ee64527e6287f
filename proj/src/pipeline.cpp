#include "nlflow/pipeline.hpp"

#include "nlflow/error.hpp"
#include "nlflow/metrics.hpp"
#include "nlflow/pinn/model_io.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace nlflow::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class RunWriter {
 public:
  explicit RunWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  template <class Fn>
  void write(const std::string& rel, Fn&& fn) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    fn(os);
    os.close();
    if (!os) throw Error("failed writing " + p.string());
    artifacts_.push_back(rel);
  }

  void write_text(const std::string& rel, const std::string& text) {
    write(rel, [&](std::ostream& os) { os << text << '\n'; });
  }

  json manifest(const json& stages, const json& metrics) const {
    json arts = json::array();
    for (const auto& rel : artifacts_) {
      arts.push_back({{"path", rel},
                      {"sha256", metrics::sha256_file((root_ / rel).string())},
                      {"bytes", fs::file_size(root_ / rel)}});
    }
    return json{{"schema_version", kSchemaVersion}, {"stages", stages}, {"artifacts", arts}, {"metrics", metrics}};
  }

 private:
  fs::path root_;
  std::vector<std::string> artifacts_;
};

std::string case_dir(int n) { return "cases/N" + std::to_string(n) + "/"; }

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::reconstruct: return "reconstruct";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

double mass_error(const macro::MacroField& f) {
  double worst = 0.0;
  for (int j = 0; j < f.nt(); ++j) {
    worst = std::max(worst, std::abs(f.dx * f.rho.col(j).sum() - f.vehicles) / f.vehicles);
  }
  return worst;
}

json metrics_json(const EvalReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"N", c.vehicles},
                     {"collided", c.collided},
                     {"kde_mass_error", c.mass_error},
                     {"error_nonlocal_pct", c.error_nonlocal},
                     {"error_local_pct", c.error_local}});
  }
  return json{{"cases", cases},
              {"error_nonlocal_pct", r.error_nonlocal},
              {"error_local_pct", r.error_local},
              {"kernel", r.kernel},
              {"kernel_eta_a", r.layout.ahead * r.layout.dx},
              {"kernel_eta_b", r.layout.behind * r.layout.dx},
              {"kernel_dx", r.layout.dx},
              {"kernel_mass_within_5m", r.kernel_mass_5m},
              {"kernel_mean_m", r.kernel_mean},
              {"scatter_width_rho", r.scatter_rho},
              {"scatter_width_rho_eta", r.scatter_rho_eta},
              {"scatter_degenerate", r.scatter_degenerate},
              {"epochs_nonlocal", r.epochs_nonlocal},
              {"epochs_local", r.epochs_local},
              {"constraint_violation", r.constraint_violation}};
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j = metrics_json(r);
  j["run_dir"] = r.run_dir;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["failed_stage"] = r.failed_stage;
    j["error"] = r.error;
  }
  j["fd_curve"] = {{"rho", r.fd_rho}, {"v", r.fd_speed}};
  return j.dump(2);
}

EvalReport run_pipeline(const ExperimentConfig& cfg, Stage last) {
  validate(cfg);
  RunWriter out(cfg.output_dir);
  EvalReport rep;
  rep.run_dir = cfg.output_dir;
  json stages = json::array();
  out.write_text("config.json", config_to_json(cfg));

  std::vector<microsim::TrajectorySet> trajs;
  std::vector<macro::MacroField> fields;
  std::vector<macro::ObservationSet> obs;
  pinn::TrainResult nonlocal, local;
  bool have_local = false;

  auto run_stage = [&](Stage s, const std::function<void()>& body) {
    if (!rep.ok || static_cast<int>(s) > static_cast<int>(last)) {
      stages.push_back({{"name", stage_name(s)}, {"status", "skipped"}});
      return;
    }
    try {
      body();
      stages.push_back({{"name", stage_name(s)}, {"status", "ok"}});
    } catch (const Error& e) {
      rep.ok = false;
      rep.failed_stage = stage_name(s);
      rep.error = e.what();
      stages.push_back({{"name", stage_name(s)}, {"status", "failed"}, {"error", e.what()}});
    }
  };

  run_stage(Stage::simulate, [&] {
    for (std::size_t k = 0; k < cfg.cases.size(); ++k) {
      microsim::RingConfig ring = cfg.ring;
      ring.vehicles = cfg.cases[k];
      ring.seed = cfg.seed + k;
      trajs.push_back(microsim::simulate(ring, cfg.fleet()));
      CaseResult cr;
      cr.vehicles = ring.vehicles;
      cr.collided = trajs.back().collided;
      rep.cases.push_back(cr);
      out.write(case_dir(ring.vehicles) + "trajectories.csv",
                [&](std::ostream& os) { microsim::write_trajectory_csv(os, trajs.back()); });
      if (trajs.back().collided) {
        throw DataError("case N=" + std::to_string(ring.vehicles) + " collided at t=" +
                        std::to_string(trajs.back().collision_time));
      }
    }
  });

  run_stage(Stage::reconstruct, [&] {
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      fields.push_back(macro::reconstruct(trajs[k], cfg.kde));
      obs.push_back(macro::select_observations(fields.back(), cfg.loops));
      rep.cases[k].mass_error = mass_error(fields.back());
      const std::string dir = case_dir(cfg.cases[k]);
      out.write(dir + "field.csv", [&](std::ostream& os) { macro::write_field_csv(os, fields.back()); });
      out.write_text(dir + "field.json", macro::field_metadata_json(fields.back()));
      out.write(dir + "observations.csv", [&](std::ostream& os) {
        os << "x,t,rho\n" << std::setprecision(17);
        for (const auto& p : obs.back().points) {
          os << fields.back().x_at(p.x_index) << ',' << fields.back().t_at(p.t_index) << ',' << p.rho << '\n';
        }
      });
    }
  });

  run_stage(Stage::train, [&] {
    pinn::TrainConfig tc = cfg.train;
    tc.dx = cfg.kde.dx;
    tc.local = false;
    nonlocal = pinn::train(fields, obs, tc);
    rep.epochs_nonlocal = static_cast<int>(nonlocal.history.size());
    out.write("model_nonlocal.json", [&](std::ostream& os) { os << pinn::model_to_json(nonlocal.state) << '\n'; });
    out.write("history_nonlocal.csv", [&](std::ostream& os) { pinn::write_history_csv(os, nonlocal.history); });
    if (nonlocal.diverged) throw TrainingDiverged("nonlocal training: " + nonlocal.message);
    if (cfg.local_baseline) {
      tc.local = true;
      local = pinn::train(fields, obs, tc);
      rep.epochs_local = static_cast<int>(local.history.size());
      have_local = true;
      out.write("model_local.json", [&](std::ostream& os) { os << pinn::model_to_json(local.state) << '\n'; });
      out.write("history_local.csv", [&](std::ostream& os) { pinn::write_history_csv(os, local.history); });
      if (local.diverged) throw TrainingDiverged("local training: " + local.message);
    }
  });

  run_stage(Stage::evaluate, [&] {
    double sum_nl = 0.0, sum_l = 0.0;
    std::vector<double> rho_all, rho_eta_all, v_all;
    const Eigen::VectorXd w = nonlocal.state.kernel_weights();
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto& f = fields[k];
      const Eigen::MatrixXd pred = pinn::predict_density(nonlocal.state, k, f.nx(), f.nt(), f.dx, f.dt);
      rep.cases[k].error_nonlocal = metrics::estimation_error(f.rho, pred);
      sum_nl += rep.cases[k].error_nonlocal;
      if (have_local) {
        const Eigen::MatrixXd pl = pinn::predict_density(local.state, k, f.nx(), f.nt(), f.dx, f.dt);
        rep.cases[k].error_local = metrics::estimation_error(f.rho, pl);
        sum_l += rep.cases[k].error_local;
      }
      const Eigen::MatrixXd rho_eta = pinn::nonlocal_density(Eigen::MatrixXd(f.rho), w, nonlocal.state.layout);
      rho_all.insert(rho_all.end(), f.rho.data(), f.rho.data() + f.rho.size());
      rho_eta_all.insert(rho_eta_all.end(), rho_eta.data(), rho_eta.data() + rho_eta.size());
      v_all.insert(v_all.end(), f.v.data(), f.v.data() + f.v.size());
    }
    const double n = static_cast<double>(fields.size());
    rep.error_nonlocal = sum_nl / n;
    rep.error_local = have_local ? sum_l / n : -1.0;
    rep.kernel = nonlocal.kernel;
    rep.layout = nonlocal.state.layout;
    rep.kernel_mass_5m = metrics::kernel_mass_within(rep.kernel, rep.layout, 5.0);
    rep.kernel_mean = metrics::kernel_mean(rep.kernel, rep.layout);
    const auto s1 = metrics::fd_scatter_width(rho_all, v_all);
    const auto s2 = metrics::fd_scatter_width(rho_eta_all, v_all);
    rep.scatter_rho = s1.width;
    rep.scatter_rho_eta = s2.width;
    rep.scatter_degenerate = s1.degenerate || s2.degenerate;
    rep.constraint_violation = pinn::max_constraint_violation(nonlocal.state);
    rep.fd_rho = nonlocal.fd.rho;
    rep.fd_speed = nonlocal.fd.speed;

    out.write("kernel.csv", [&](std::ostream& os) {
      os << "index,offset_m,weight\n" << std::setprecision(17);
      for (int k = 0; k < rep.layout.size(); ++k) {
        os << k << ',' << rep.layout.offset(k) * rep.layout.dx << ',' << rep.kernel[static_cast<std::size_t>(k)] << '\n';
      }
    });
    out.write("fd_curve.csv", [&](std::ostream& os) {
      os << "rho,v_nonlocal,v_local\n" << std::setprecision(17);
      for (std::size_t i = 0; i < nonlocal.fd.rho.size(); ++i) {
        os << nonlocal.fd.rho[i] << ',' << nonlocal.fd.speed[i] << ',';
        if (have_local) os << local.fd.speed[i];
        os << '\n';
      }
    });
    out.write("fd_scatter.csv", [&](std::ostream& os) {
      os << "case,rho,rho_eta,v\n" << std::setprecision(10);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < fields.size(); ++k) {
        const auto cells = static_cast<std::size_t>(fields[k].rho.size());
        for (std::size_t c = 0; c < cells; ++c, ++pos) {
          os << cfg.cases[k] << ',' << rho_all[pos] << ',' << rho_eta_all[pos] << ',' << v_all[pos] << '\n';
        }
      }
    });
  });

  json m = metrics_json(rep);
  if (!nonlocal.history.empty()) {
    const auto& h = nonlocal.history.back();
    m["final_loss_nonlocal"] = {{"L_d", h.data}, {"L_p", h.physics}, {"L_c", h.constraint}};
  }
  if (!rep.ok) {
    m["failed_stage"] = rep.failed_stage;
    m["error"] = rep.error;
  }
  out.write_text("report.json", report_to_json(rep));
  const json manifest = out.manifest(stages, m);
  std::ofstream(out.root() / "manifest.json") << manifest.dump(2) << '\n';
  return rep;
}

std::vector<EvalReport> sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values,
                              const std::string& target) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) throw ConfigError("unknown sweep axis '" + axis + "'");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig c = apply_axis(cfg, axis, values[i], target);
    c.output_dir = (fs::path(cfg.output_dir) / (axis + "_" + std::to_string(i))).string();
    reports.push_back(run_pipeline(c));
  }
  const fs::path root(cfg.output_dir);
  {
    std::ofstream os(root / "sweep.csv");
    os << "axis,value,run_dir,ok,error_nonlocal_pct,error_local_pct,kernel_mean_m,kernel_mass_within_5m,"
          "scatter_width_rho,scatter_width_rho_eta\n"
       << std::setprecision(10);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& r = reports[i];
      os << axis << ',' << values[i] << ',' << fs::path(r.run_dir).filename().string() << ',' << (r.ok ? 1 : 0) << ','
         << r.error_nonlocal << ',' << r.error_local << ',' << r.kernel_mean << ',' << r.kernel_mass_5m << ','
         << r.scatter_rho << ',' << r.scatter_rho_eta << '\n';
    }
  }
  {
    std::ofstream os(root / "sweep_kernels.csv");
    os << "value,offset_m,weight\n" << std::setprecision(10);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& r = reports[i];
      for (std::size_t k = 0; k < r.kernel.size(); ++k) {
        os << values[i] << ',' << r.layout.offset(static_cast<int>(k)) * r.layout.dx << ',' << r.kernel[k] << '\n';
      }
    }
  }
  {
    std::ofstream os(root / "sweep_fd.csv");
    os << "value,rho,v\n" << std::setprecision(10);
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t k = 0; k < reports[i].fd_rho.size(); ++k) {
        os << values[i] << ',' << reports[i].fd_rho[k] << ',' << reports[i].fd_speed[k] << '\n';
      }
    }
  }
  return reports;
}

std::vector<stability::StabilityReport> stability_reports(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<stability::StabilityReport> out;
  for (int n : cfg.cases) {
    microsim::RingConfig ring = cfg.ring;
    ring.vehicles = n;
    const auto eq = microsim::equilibrium(ring, cfg.hv.vopt);
    out.push_back(stability::analyze(cfg.hv, eq.gap, eq.speed, n));
  }
  return out;
}

std::vector<std::string> verify_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + run_dir.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& a : m.at("artifacts")) {
    const auto rel = a.at("path").get<std::string>();
    const fs::path p = run_dir / rel;
    if (!fs::exists(p) || metrics::sha256_file(p.string()) != a.at("sha256").get<std::string>()) bad.push_back(rel);
  }
  return bad;
}

}  // namespace nlflow::exp
