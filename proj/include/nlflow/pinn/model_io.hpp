#pragma once

#include "nlflow/pinn/trainer.hpp"

#include <iosfwd>
#include <string>

namespace nlflow::pinn {

/// Model artifact: layer widths, flat weights per network, the normalized
/// kernel with (eta_a, eta_b, dx) and FD samples.
std::string model_to_json(const PinnState<double>& s);
PinnState<double> model_from_json(const std::string& text);

/// `epoch,L_d,L_p,L_c`
void write_history_csv(std::ostream& os, const std::vector<EpochLoss>& history);
std::vector<EpochLoss> read_history_csv(std::istream& is);

}  // namespace nlflow::pinn
