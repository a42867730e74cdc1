#include "equipow/waterfill.hpp"

#include <algorithm>
#include <cmath>

namespace equipow::wf {

namespace {

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr int kGlOrder = 16;
constexpr double kGlNode[kGlOrder] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
    0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
    0.9894009349916499};
constexpr double kGlWeight[kGlOrder] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
    0.0271524594117541};

// e^-s underflows beyond this; the truncated tail is below 1e-300.
constexpr double kTailCut = 745.0;

template <typename F>
double panel_quadrature(double g0, F&& f) {
  double total = 0.0;
  double lo = 0.0;
  double hi = std::min(g0, 1.0);
  if (hi <= 0.0) return 0.0;
  while (lo < kTailCut) {
    const double a = lo, b = std::min(hi, kTailCut);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double panel = 0.0;
    for (int i = 0; i < kGlOrder; ++i) {
      const double s = mid + half * kGlNode[i];
      panel += kGlWeight[i] * f(s) * std::exp(-s);
    }
    total += half * panel;
    lo = hi;
    hi *= 2.0;
  }
  return total;
}

constexpr double kWaterLevelCeiling = 1e30;

}  // namespace

double fading_log_integral(double g0) {
  return panel_quadrature(g0, [g0](double s) { return std::log1p(s / g0); });
}

double fading_power_integral(double g0) {
  return panel_quadrature(g0, [g0](double s) { return s / (g0 + s); });
}

double expected_rate(const Channel& ch, double water_level) {
  if (water_level <= 0.0) return 0.0;
  const double g0 = ch.noise_w / (ch.alpha * water_level);
  if (g0 >= kTailCut) return 0.0;
  return ch.bandwidth_hz / M_LN2 * std::exp(-g0) * fading_log_integral(g0);
}

double expected_power(const Channel& ch, double water_level) {
  if (water_level <= 0.0) return 0.0;
  const double g0 = ch.noise_w / (ch.alpha * water_level);
  if (g0 >= kTailCut) return 0.0;
  return water_level * std::exp(-g0) * fading_power_integral(g0);
}

namespace {

template <typename F>
Solution invert_monotone(const Channel& ch, double target, F&& value_at,
                         double tol) {
  Solution sol;
  if (target <= 0.0) return sol;
  if (!std::isfinite(target))
    throw std::invalid_argument("waterfill: non-finite target");

  // Geometric bracket growth from the g0 = 1 scale.
  double lo = 0.0;
  double hi = ch.noise_w / ch.alpha;
  while (value_at(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > kWaterLevelCeiling)
      throw SaturationError("waterfill: target beyond water level ceiling");
  }

  double mid = hi, val = value_at(hi);
  for (int it = 0; it < 500 && std::fabs(val - target) > tol; ++it) {
    mid = 0.5 * (lo + hi);
    val = value_at(mid);
    if (val < target)
      lo = mid;
    else
      hi = mid;
  }
  if (std::fabs(val - target) > tol)
    throw std::runtime_error("waterfill: bisection failed to converge");
  sol.water_level = mid;
  sol.expected_rate = expected_rate(ch, mid);
  sol.expected_power = expected_power(ch, mid);
  return sol;
}

}  // namespace

Solution water_level_for_rate(const Channel& ch, double target_bps) {
  const double tol = std::max(1e-6 * target_bps, 1.0);
  return invert_monotone(
      ch, target_bps, [&](double v) { return expected_rate(ch, v); }, tol);
}

Solution water_level_for_power(const Channel& ch, double budget_w) {
  const double tol = 1e-9 * budget_w;
  return invert_monotone(
      ch, budget_w, [&](double v) { return expected_power(ch, v); }, tol);
}

SlotResult slot_powers(const Channel& ch, double water_level,
                       std::span<const double> g_draws, double slot_s,
                       double amplifier_eff, double circuit_energy_j) {
  SlotResult out;
  out.powers_w.resize(g_draws.size(), 0.0);
  double power_sum = 0.0;
  for (std::size_t j = 0; j < g_draws.size(); ++j) {
    const double g = g_draws[j];
    const double p = std::max(0.0, water_level - ch.noise_w / (ch.alpha * g));
    out.powers_w[j] = p;
    power_sum += p;
    out.delivered_bits +=
        slot_s * ch.bandwidth_hz * std::log2(1.0 + ch.alpha * g * p / ch.noise_w);
  }
  out.transmit_energy_j = slot_s * power_sum / amplifier_eff + circuit_energy_j;
  return out;
}

}  // namespace equipow::wf
