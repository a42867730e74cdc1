#pragma once

// Water-filling over exponential(1) small-scale fading. With water level v and
// large-scale gain a, the per-slot power is p(g) = (v - s2/(a g))+ and the
// closed-form pieces reduce to one-parameter integrals of the threshold
// g0 = s2 / (a v), evaluated by deterministic quadrature.

#include <span>
#include <stdexcept>
#include <vector>

namespace equipow::wf {

struct Channel {
  double alpha;         // large-scale linear gain
  double noise_w;       // in-band noise power s2 [W]
  double bandwidth_hz;  // user bandwidth W [Hz]
};

class SaturationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I_log(g0)   = integral_0^inf ln(1 + s/g0) e^-s ds
// I_power(g0) = integral_0^inf s/(g0 + s) e^-s ds
// 16-point Gauss-Legendre per panel on panels geometrically doubled from
// min(g0, 1) out to s = 745 (where e^-s underflows); ~1e-10 relative.
double fading_log_integral(double g0);
double fading_power_integral(double g0);

// E_g[ W log2(1 + a g p(g) / s2) ], 0 when v == 0.
double expected_rate(const Channel& ch, double water_level);

// E_g[ p(g) ] in watts.
double expected_power(const Channel& ch, double water_level);

struct Solution {
  double water_level = 0.0;    // v [W]
  double expected_rate = 0.0;  // bits/s
  double expected_power = 0.0; // W
};

// Bisection on v until |rate(v) - target| <= max(1e-6 * target, 1 bit/s).
// Throws SaturationError when no bracket exists below the internal water
// level ceiling (target far beyond anything physical).
Solution water_level_for_rate(const Channel& ch, double target_bps);

// Water level at which the expected transmit power equals budget_w, and the
// rate achieved there. Used for the actor output bound.
Solution water_level_for_power(const Channel& ch, double budget_w);

struct SlotResult {
  std::vector<double> powers_w;
  double delivered_bits = 0.0;
  double transmit_energy_j = 0.0;  // (1/rho) sum tau p  (+ circuit term)
};

SlotResult slot_powers(const Channel& ch, double water_level,
                       std::span<const double> g_draws, double slot_s,
                       double amplifier_eff, double circuit_energy_j = 0.0);

}  // namespace equipow::wf
