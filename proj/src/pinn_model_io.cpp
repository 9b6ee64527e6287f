#include "nlflow/pinn/model_io.hpp"

#include "nlflow/csv.hpp"

#include <json.hpp>

#include <iomanip>
#include <istream>
#include <ostream>

namespace nlflow::pinn {

using nlohmann::json;

namespace {

json net_json(const Mlp<double>& net) {
  return json{{"widths", net.widths()},
              {"params", std::vector<double>(net.params.data(), net.params.data() + net.params.size())}};
}

Mlp<double> net_from(const json& j) {
  Mlp<double> net(j.at("widths").get<std::vector<int>>());
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != net.parameter_count()) {
    throw DataError("network parameter count does not match its widths");
  }
  net.params = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  return net;
}

}  // namespace

std::string model_to_json(const PinnState<double>& s) {
  json j;
  j["format"] = "nlflow-pinn";
  j["version"] = 1;
  json dens = json::array();
  for (const auto& d : s.density) {
    json e = net_json(d.net);
    e["L"] = d.length;
    e["T"] = d.horizon;
    dens.push_back(std::move(e));
  }
  j["density"] = std::move(dens);
  j["fd"] = net_json(s.fd);
  j["fd"]["rho_max"] = s.rho_max;
  j["fd"]["v_scale"] = s.v_scale;
  j["fd"]["samples"] = s.fd_samples;
  const auto w = s.kernel_weights();
  j["kernel"] = {{"theta", std::vector<double>(s.kernel_theta.data(), s.kernel_theta.data() + s.kernel_theta.size())},
                 {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                 {"eta_a", s.layout.ahead * s.layout.dx},
                 {"eta_b", s.layout.behind * s.layout.dx},
                 {"dx", s.layout.dx},
                 {"frozen", s.kernel_frozen}};
  const auto curve = sample_fd(s);
  j["fd_samples"] = {{"rho", curve.rho}, {"v", curve.speed}};
  return j.dump(1);
}

PinnState<double> model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model artifact is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "nlflow-pinn" || j.at("version") != 1) throw DataError("unsupported model artifact");
    PinnState<double> s;
    for (const auto& e : j.at("density")) {
      s.density.push_back({net_from(e), e.at("L").get<double>(), e.at("T").get<double>()});
    }
    s.fd = net_from(j.at("fd"));
    s.rho_max = j["fd"].at("rho_max").get<double>();
    s.v_scale = j["fd"].at("v_scale").get<double>();
    s.fd_samples = j["fd"].at("samples").get<int>();
    const auto& k = j.at("kernel");
    const auto theta = k.at("theta").get<std::vector<double>>();
    s.kernel_theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    s.layout = make_layout(k.at("eta_a").get<double>(), k.at("eta_b").get<double>(), k.at("dx").get<double>());
    s.kernel_frozen = k.at("frozen").get<bool>();
    if (s.layout.size() != s.kernel_theta.size()) throw DataError("kernel length does not match eta_a, eta_b");
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model artifact: ") + e.what());
  }
}

void write_history_csv(std::ostream& os, const std::vector<EpochLoss>& history) {
  os << "epoch,L_d,L_p,L_c\n" << std::setprecision(10);
  for (std::size_t e = 0; e < history.size(); ++e) {
    os << e << ',' << history[e].data << ',' << history[e].physics << ',' << history[e].constraint << '\n';
  }
}

std::vector<EpochLoss> read_history_csv(std::istream& is) {
  if (csv::read_header(is) != std::vector<std::string>{"epoch", "L_d", "L_p", "L_c"}) {
    throw DataError("history CSV header must be epoch,L_d,L_p,L_c");
  }
  std::vector<EpochLoss> out;
  std::vector<std::string> r;
  long line = 1;
  while (csv::next_row(is, r, line)) {
    const std::string where = "line " + std::to_string(line);
    if (r.size() != 4) throw DataError(where + ": expected 4 fields");
    out.push_back({csv::to_double(r[1], where), csv::to_double(r[2], where), csv::to_double(r[3], where)});
  }
  return out;
}

}  // namespace nlflow::pinn
