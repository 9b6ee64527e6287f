// nlflow: simulate ring-road platoons, reconstruct macroscopic fields, learn
// nonlocal flow models and run parameter sweeps.
#include "nlflow/calib.hpp"
#include "nlflow/error.hpp"
#include "nlflow/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace nlflow;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--out", c.out, "output directory or file");
  cmd->add_option("--seed", c.seed, "random seed (overrides config)");
}

exp::ExperimentConfig resolve(const Common& c) {
  exp::ExperimentConfig cfg = c.config.empty() ? exp::parse_config(R"({"schema_version": 1})") : exp::load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_summary(const exp::EvalReport& r) {
  std::cout << "run: " << r.run_dir << (r.ok ? "" : "  FAILED at " + r.failed_stage + ": " + r.error) << '\n';
  for (const auto& c : r.cases) {
    std::cout << "  N=" << c.vehicles << "  kde_mass_error=" << c.mass_error;
    if (c.error_nonlocal >= 0) std::cout << "  err_nonlocal=" << c.error_nonlocal << "%";
    if (c.error_local >= 0) std::cout << "  err_local=" << c.error_local << "%";
    std::cout << '\n';
  }
  if (r.error_nonlocal >= 0) {
    std::cout << "  mean error: nonlocal " << r.error_nonlocal << "%, local " << r.error_local << "%\n"
              << "  kernel mean " << r.kernel_mean << " m, mass within 5 m " << r.kernel_mass_5m << '\n'
              << "  FD scatter width: rho " << r.scatter_rho << ", rho_eta " << r.scatter_rho_eta << '\n';
  }
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonlocal traffic flow learning toolkit"};
  app.require_subcommand(1);

  Common c_sim, c_rec, c_train, c_cal, c_stab, c_sweep;
  auto* sim = app.add_subcommand("simulate", "simulate every configured ring case");
  add_common(sim, c_sim);

  auto* rec = app.add_subcommand("reconstruct", "KDE density/flow/speed fields");
  add_common(rec, c_rec);
  std::string traj_csv;
  double ring_length = 0.0;
  macro::ReconstructOptions kde;
  rec->add_option("--trajectories", traj_csv, "trajectory CSV (t,vehicle_id,x,v,s); otherwise simulate from config");
  rec->add_option("--length", ring_length, "ring length for --trajectories (m)");
  rec->add_option("--bandwidth", kde.bandwidth, "KDE bandwidth h (m)");
  rec->add_option("--dx", kde.dx, "grid cell length (m)");
  rec->add_option("--dt", kde.dt, "grid time step (s)");

  auto* train = app.add_subcommand("train", "simulate, reconstruct, train and evaluate");
  add_common(train, c_train);
  std::optional<int> epochs;
  train->add_option("--epochs", epochs, "training epochs (overrides config)");

  auto* cal = app.add_subcommand("calibrate", "genetic-algorithm calibration on recorded drives");
  add_common(cal, c_cal);
  std::string records_path, variant = "car_following";
  calib::GaConfig ga;
  cal->add_option("--records", records_path, "drive record CSV")->required();
  cal->add_option("--variant", variant, "car_following | look_ahead | nudging");
  cal->add_option("--population", ga.population, "GA population size");
  cal->add_option("--generations", ga.generations, "GA generations");

  auto* stab = app.add_subcommand("stability", "plant/string stability of the HV controller per case");
  add_common(stab, c_stab);

  auto* sw = app.add_subcommand("sweep", "run the pipeline for each value of one parameter");
  add_common(sw, c_sweep);
  std::string axis, values_text, target = "auto";
  sw->add_option("--axis", axis, "sweep axis (overrides config)");
  sw->add_option("--values", values_text, "comma-separated values (overrides config)");
  sw->add_option("--target", target, "auto | hv | cav");

  auto* report = app.add_subcommand("report", "verify a run directory and print its metrics");
  std::string run_dir;
  report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*sim) {
      const auto r = exp::run_pipeline(resolve(c_sim), exp::Stage::simulate);
      print_summary(r);
      return r.ok ? 0 : 1;
    }
    if (*rec) {
      if (!traj_csv.empty()) {
        if (!(ring_length > 0)) throw ConfigError("--length is required with --trajectories");
        std::ifstream in(traj_csv);
        if (!in) throw DataError("cannot open " + traj_csv);
        const auto traj = microsim::read_trajectory_csv(in, ring_length);
        const auto field = macro::reconstruct(traj, kde);
        const fs::path dir = c_rec.out.empty() ? fs::path(".") : fs::path(c_rec.out);
        fs::create_directories(dir);
        std::ofstream fcsv(dir / "field.csv");
        macro::write_field_csv(fcsv, field);
        std::ofstream(dir / "field.json") << macro::field_metadata_json(field) << '\n';
        std::cout << "wrote " << (dir / "field.csv").string() << '\n';
        return 0;
      }
      const auto r = exp::run_pipeline(resolve(c_rec), exp::Stage::reconstruct);
      print_summary(r);
      return r.ok ? 0 : 1;
    }
    if (*train) {
      auto cfg = resolve(c_train);
      if (epochs) cfg.train.epochs = *epochs;
      const auto r = exp::run_pipeline(cfg, exp::Stage::evaluate);
      print_summary(r);
      return r.ok ? 0 : 1;
    }
    if (*cal) {
      std::vector<std::string> warnings;
      const auto records = calib::load_records(records_path, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      if (records.empty()) throw DataError("no records to calibrate on");
      if (c_cal.seed) ga.seed = *c_cal.seed;
      const auto res = calib::ga_calibrate(calib::default_spec(calib::variant_from_string(variant)), records, ga);
      const std::string text = calib::spec_to_json(res.spec, res.error, res.no_improvement);
      if (c_cal.out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream(c_cal.out) << text << '\n';
        std::cout << "calibration error " << res.error << " written to " << c_cal.out << '\n';
      }
      if (res.no_improvement) std::cerr << "warning: no improvement over the initial population\n";
      return 0;
    }
    if (*stab) {
      const auto cfg = resolve(c_stab);
      const auto reps = exp::stability_reports(cfg);
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t k = 0; k < reps.size(); ++k) {
        auto j = nlohmann::json::parse(stability::to_json(reps[k]));
        j["N"] = cfg.cases[k];
        arr.push_back(j);
      }
      if (c_stab.out.empty()) {
        std::cout << arr.dump(2) << '\n';
      } else {
        std::ofstream(c_stab.out) << arr.dump(2) << '\n';
      }
      return 0;
    }
    if (*sw) {
      const auto cfg = resolve(c_sweep);
      const std::string ax = axis.empty() ? cfg.sweep.axis : axis;
      const auto vals = values_text.empty() ? cfg.sweep.values : parse_values(values_text);
      const std::string tg = (target == "auto" && !cfg.sweep.target.empty()) ? cfg.sweep.target : target;
      if (ax.empty()) throw ConfigError("no sweep axis given (--axis or sweep.axis)");
      const auto reps = exp::sweep(cfg, ax, vals, tg);
      bool ok = true;
      for (const auto& r : reps) {
        print_summary(r);
        ok = ok && r.ok;
      }
      return ok ? 0 : 1;
    }
    if (*report) {
      const auto bad = exp::verify_manifest(run_dir);
      std::ifstream in(fs::path(run_dir) / "report.json");
      if (in) std::cout << in.rdbuf() << '\n';
      for (const auto& b : bad) std::cerr << "hash mismatch: " << b << '\n';
      return bad.empty() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
