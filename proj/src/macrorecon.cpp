#include "nlflow/macrorecon.hpp"

#include "nlflow/csv.hpp"
#include "nlflow/error.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>

namespace nlflow::macro {

double ring_distance(double x, double y, double L) {
  const double half = 0.5 * L;
  if (x < half) {
    if (y >= x && y < x + half) return y - x;
    if (y >= x + half) return L - y + x;
    return x - y;
  }
  if (y >= x) return y - x;
  if (y >= x - half) return x - y;
  return L - x + y;
}

double gaussian_kernel(double u, double h) {
  if (!(h > 0.0)) throw ParameterError("kernel bandwidth must be positive");
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi / h * std::exp(-u * u / (2.0 * h * h));
}

namespace {

int checked_cells(double extent, double step, const char* what) {
  const double ratio = extent / step;
  const long cells = std::lround(ratio);
  if (cells < 1 || std::abs(ratio - static_cast<double>(cells)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError(std::string(what) + " must divide the domain evenly");
  }
  return static_cast<int>(cells);
}

}  // namespace

MacroField reconstruct(const microsim::TrajectorySet& traj, const ReconstructOptions& opts) {
  if (traj.samples() < 2 || traj.vehicles() < 1) throw DataError("trajectory set is empty");
  if (!(opts.bandwidth > 0.0)) throw ParameterError("kernel bandwidth must be positive");
  if (!(opts.dx > 0.0) || !(opts.dt > 0.0)) throw ConfigError("grid steps must be positive");
  const double L = traj.ring_length;
  const double T = traj.times.back() - traj.times.front();
  const int nx = checked_cells(L, opts.dx, "dx");
  const int nt = checked_cells(T, opts.dt, "dt_grid");

  MacroField f;
  f.rho = Eigen::MatrixXd::Zero(nx, nt);
  f.q = Eigen::MatrixXd::Zero(nx, nt);
  f.dx = opts.dx;
  f.dt = opts.dt;
  f.length = L;
  f.horizon = T;
  f.bandwidth = opts.bandwidth;
  f.vehicles = traj.vehicles();

  const int reach = static_cast<int>(std::ceil(opts.truncation * opts.bandwidth / opts.dx));
  std::size_t sample = 0;
  for (int j = 0; j < nt; ++j) {
    const double t = traj.times.front() + j * opts.dt;
    while (sample < traj.times.size() && traj.times[sample] < t - 1e-9) ++sample;
    if (sample == traj.times.size() || std::abs(traj.times[sample] - t) > 1e-9) {
      throw ConfigError("grid time " + std::to_string(t) + " is not a recorded sample");
    }
    const auto row = static_cast<Eigen::Index>(sample);
    for (int veh = 0; veh < traj.vehicles(); ++veh) {
      const double xv = traj.positions(row, veh);
      const double vv = traj.speeds(row, veh);
      const int centre = static_cast<int>(std::floor(xv / opts.dx));
      const bool whole_ring = 2 * reach + 2 >= nx;
      const int first = whole_ring ? 0 : centre - reach;
      const int last = whole_ring ? nx - 1 : centre + reach + 1;
      for (int k = first; k <= last; ++k) {
        const int i = (k % nx + nx) % nx;
        const double w = gaussian_kernel(ring_distance(i * opts.dx, xv, L), opts.bandwidth);
        f.rho(i, j) += w;
        f.q(i, j) += vv * w;
      }
    }
  }
  f.v = f.q.cwiseQuotient(f.rho);
  return f;
}

ObservationSet select_observations(const MacroField& field, int loops) {
  if (loops < 1) throw ConfigError("need at least one loop detector");
  ObservationSet obs;
  std::set<int> columns;
  for (int k = 0; k < loops; ++k) {
    const double pos = k * field.length / loops;
    obs.loop_positions.push_back(pos);
    columns.insert(std::min(field.nx() - 1, static_cast<int>(std::floor(pos / field.dx + 1e-9))));
  }
  for (int i = 0; i < field.nx(); ++i) obs.points.push_back({i, 0, field.rho(i, 0)});
  for (int col : columns) {
    for (int j = 1; j < field.nt(); ++j) obs.points.push_back({col, j, field.rho(col, j)});
  }
  return obs;
}

void write_field_csv(std::ostream& os, const MacroField& field) {
  os << "x,t,rho,q,v\n" << std::setprecision(17);
  for (int j = 0; j < field.nt(); ++j) {
    for (int i = 0; i < field.nx(); ++i) {
      os << field.x_at(i) << ',' << field.t_at(j) << ',' << field.rho(i, j) << ',' << field.q(i, j)
         << ',' << field.v(i, j) << '\n';
    }
  }
}

MacroField read_field_csv(std::istream& is, const MacroField& metadata) {
  MacroField f = metadata;
  const int nx = checked_cells(f.length, f.dx, "dx");
  const int nt = checked_cells(f.horizon, f.dt, "dt_grid");
  f.rho = Eigen::MatrixXd::Constant(nx, nt, std::nan(""));
  f.q = f.rho;
  f.v = f.rho;
  if (csv::read_header(is) != std::vector<std::string>{"x", "t", "rho", "q", "v"}) {
    throw DataError("field CSV header must be x,t,rho,q,v");
  }
  std::vector<std::string> r;
  long line = 1;
  while (csv::next_row(is, r, line)) {
    const std::string where = "line " + std::to_string(line);
    if (r.size() != 5) throw DataError(where + ": expected 5 fields");
    const long i = std::lround(csv::to_double(r[0], where) / f.dx);
    const long j = std::lround(csv::to_double(r[1], where) / f.dt);
    if (i < 0 || i >= nx || j < 0 || j >= nt) throw DataError(where + ": cell outside grid");
    f.rho(i, j) = csv::to_double(r[2], where);
    f.q(i, j) = csv::to_double(r[3], where);
    f.v(i, j) = csv::to_double(r[4], where);
  }
  if (f.rho.hasNaN()) throw DataError("field CSV does not cover the whole grid");
  return f;
}

std::string field_metadata_json(const MacroField& field) {
  nlohmann::json j{{"L", field.length}, {"T", field.horizon}, {"dx", field.dx},
                   {"dt", field.dt},    {"h", field.bandwidth}, {"N", field.vehicles}};
  return j.dump(2);
}

MacroField field_from_metadata_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MacroField f;
  f.length = j.at("L").get<double>();
  f.horizon = j.at("T").get<double>();
  f.dx = j.at("dx").get<double>();
  f.dt = j.at("dt").get<double>();
  f.bandwidth = j.at("h").get<double>();
  f.vehicles = j.at("N").get<int>();
  return f;
}

}  // namespace nlflow::macro
