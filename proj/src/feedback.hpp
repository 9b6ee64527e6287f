#pragma once

#include "nlflow/microsim.hpp"

namespace nlflow::microsim::detail {

// Three-part controller sum (ACC + look-ahead + look-behind). `gap(k)` and
// `speed(k)` resolve absolute vehicle indices, so the same sum serves the
// ring (modular indices) and open chains (virtual vehicles past the ends).
template <class GapFn, class SpeedFn>
double feedback(int i, GapFn&& gap, SpeedFn&& speed, const ControllerParams& p) {
  const double vi = speed(i);
  double u = p.alpha(0) * (v_opt(gap(i), p.vopt) - vi) + p.beta(0) * (speed(i - 1) - vi);
  for (int j = -1; j >= -p.lookahead(); --j) {
    u += p.alpha(j) * (v_opt(gap(i + j), p.vopt) - vi) + p.beta(j) * (speed(i + j - 1) - vi);
  }
  for (int j = 1; j <= p.lookbehind(); ++j) {
    const double vf = speed(i + j);
    const double active = (!p.nudging || vf > vi) ? 1.0 : 0.0;
    u += p.alpha(j) * (v_opt(gap(i + j), p.vopt) - vi) + active * p.beta(j) * (vf - vi);
  }
  return u;
}

}  // namespace nlflow::microsim::detail
