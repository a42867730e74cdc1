#include "equipow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "equipow/waterfill.hpp"

namespace equipow::oracle {

namespace {

double expected_energy(const sim::SimConfig& cfg, double alpha, double rate) {
  if (rate <= 0.0) return 0.0;
  const wf::Channel ch{alpha, cfg.noise_power_w, cfg.bandwidth_hz};
  return cfg.frame_s * wf::water_level_for_rate(ch, rate).expected_power /
         cfg.amplifier_eff;
}

void finish_plan(UserPlan& plan, std::span<const double> gains,
                 const sim::SimConfig& cfg, double rate_ceiling) {
  plan.expected_energy_j.assign(plan.rates_bps.size(), 0.0);
  plan.expected_total_j = 0.0;
  for (std::size_t t = 0; t < plan.rates_bps.size(); ++t) {
    const double r = plan.rates_bps[t];
    if (r <= 0.0) continue;
    const wf::Channel ch{gains[t], cfg.noise_power_w, cfg.bandwidth_hz};
    const auto sol = wf::water_level_for_rate(ch, r);
    plan.expected_energy_j[t] = cfg.frame_s * sol.expected_power / cfg.amplifier_eff;
    plan.expected_total_j += plan.expected_energy_j[t];
    if (rate_ceiling > 0.0 && r > rate_ceiling * (1.0 + 1e-9))
      plan.qos_feasible = false;
    if (sol.expected_power > cfg.max_bs_power_w * (1.0 + 1e-9))
      plan.power_ok = false;
  }
}

// Sum of planned bits over frames [begin, end) at one water level.
double group_bits(std::span<const double> gains, const sim::SimConfig& cfg,
                  std::size_t begin, std::size_t end, double nu) {
  double bits = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const wf::Channel ch{gains[t], cfg.noise_power_w, cfg.bandwidth_hz};
    bits += cfg.frame_s * wf::expected_rate(ch, nu);
  }
  return bits;
}

// The bracket stops here; a deadline needing more is infeasible outright.
constexpr double kLevelCap = 1e25;

struct GroupLevel {
  double level = 0.0;
  bool capped = false;
};

// Water level delivering `bits` over frames [begin, end).
GroupLevel group_level(std::span<const double> gains, const sim::SimConfig& cfg,
                       std::size_t begin, std::size_t end, double bits) {
  double alpha_max = 0.0;
  for (std::size_t t = begin; t < end; ++t)
    alpha_max = std::max(alpha_max, gains[t]);
  double lo = 0.0, hi = cfg.noise_power_w / alpha_max;
  while (group_bits(gains, cfg, begin, end, hi) < bits) {
    lo = hi;
    hi *= 2.0;
    if (hi > kLevelCap) return {kLevelCap, true};
  }
  const double tol = 1e-9 * bits;
  double mid = hi;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double b = group_bits(gains, cfg, begin, end, mid);
    if (std::fabs(b - bits) <= tol) break;
    (b < bits ? lo : hi) = mid;
  }
  return {mid, false};
}

}  // namespace

UserPlan per_user_plan(std::span<const double> gains, const sim::SimConfig& cfg,
                       int user, double rate_ceiling) {
  const auto T = gains.size();
  UserPlan plan;
  plan.rates_bps.assign(T, 0.0);

  const int L = cfg.segments_per_video - 1;
  std::size_t begin = 0;
  double delivered = 0.0;
  int l_done = 0;
  bool capped = false;
  std::vector<double> levels;

  while (l_done < L) {
    // The binding prefix deadline is the one needing the highest level.
    GroupLevel best{-1.0, false};
    int best_l = l_done + 1;
    for (int l = l_done + 1; l <= L; ++l) {
      const auto end = static_cast<std::size_t>(l * cfg.frames_per_segment);
      const double deficit = cfg.qos_required_bits(user, l) - delivered;
      const auto gl = group_level(gains, cfg, begin, end, deficit);
      if (gl.level > best.level) {
        best = gl;
        best_l = l;
      }
    }
    const auto end = static_cast<std::size_t>(best_l * cfg.frames_per_segment);
    double planned_bits = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      const wf::Channel ch{gains[t], cfg.noise_power_w, cfg.bandwidth_hz};
      plan.rates_bps[t] = wf::expected_rate(ch, best.level);
      planned_bits += plan.rates_bps[t] * cfg.frame_s;
    }
    levels.push_back(best.level);
    capped = capped || best.capped;
    delivered = best.capped ? delivered + planned_bits
                            : cfg.qos_required_bits(user, best_l);
    begin = end;
    l_done = best_l;
  }

  // KKT residual: interior deadline feasibility, boundary tightness, and
  // monotone (nonincreasing) group levels.
  double residual = 0.0;
  double cum = 0.0;
  std::size_t t = 0;
  for (int l = 1; l <= L; ++l) {
    const auto end = static_cast<std::size_t>(l * cfg.frames_per_segment);
    for (; t < end; ++t) cum += plan.rates_bps[t] * cfg.frame_s;
    const double req = cfg.qos_required_bits(user, l);
    residual = std::max(residual, (req - cum) / req);
  }
  for (std::size_t i = 1; i < levels.size(); ++i)
    residual = std::max(residual, (levels[i] - levels[i - 1]) /
                                      std::max(levels[i - 1], 1e-300));
  plan.kkt_residual = std::max(residual, 0.0);
  if (capped)
    plan.qos_feasible = false;  // best-effort plan, deadlines unreachable
  else if (plan.kkt_residual > 1e-6)
    throw std::runtime_error("oracle: KKT residual above tolerance");

  finish_plan(plan, gains, cfg, rate_ceiling);
  return plan;
}

UserPlan equal_rate_plan(std::span<const double> gains,
                         const sim::SimConfig& cfg, int user) {
  const auto T = gains.size();
  UserPlan plan;
  plan.rates_bps.assign(T, 0.0);
  const int L = cfg.segments_per_video - 1;
  double rate = 0.0;
  for (int l = 1; l <= L; ++l)
    rate = std::max(rate, cfg.qos_required_bits(user, l) /
                              (l * cfg.frames_per_segment * cfg.frame_s));
  const auto last = static_cast<std::size_t>(L * cfg.frames_per_segment);
  for (std::size_t t = 0; t < last; ++t) plan.rates_bps[t] = rate;
  finish_plan(plan, gains, cfg, 0.0);
  return plan;
}

UserPlan just_in_time_plan(std::span<const double> gains,
                           const sim::SimConfig& cfg, int user) {
  const auto T = gains.size();
  UserPlan plan;
  plan.rates_bps.assign(T, 0.0);
  const int L = cfg.segments_per_video - 1;
  for (int l = 1; l <= L; ++l) {
    const auto t = static_cast<std::size_t>(l * cfg.frames_per_segment) - 1;
    plan.rates_bps[t] = cfg.segment_bits_for(user) / cfg.frame_s;
  }
  finish_plan(plan, gains, cfg, 0.0);
  return plan;
}

EpisodePlan plan_episode(const sim::SimConfig& cfg, std::uint64_t seed) {
  const auto gains = sim::Env::serving_gain_trajectory(cfg, seed);
  sim::Env env(cfg);
  const double ceiling = env.rate_ceiling();
  EpisodePlan out;
  out.rates = kernels::Mat<double>(gains.rows, gains.cols);
  for (std::size_t k = 0; k < gains.rows; ++k) {
    std::span<const double> row(gains[k], gains.cols);
    auto plan = per_user_plan(row, cfg, static_cast<int>(k), ceiling);
    std::copy(plan.rates_bps.begin(), plan.rates_bps.end(), out.rates[k]);
    out.expected_total_j += plan.expected_total_j;
    out.users.push_back(std::move(plan));
  }
  return out;
}

PlanEval evaluate_plan(const EpisodePlan& plan, const sim::SimConfig& cfg,
                       std::uint64_t seed) {
  if (plan.rates.rows != static_cast<std::size_t>(cfg.num_users))
    throw std::invalid_argument("evaluate_plan: plan/user count mismatch");
  sim::Env env(cfg);
  env.reset(seed);
  PlanEval ev;
  std::vector<double> action(plan.rates.rows);
  for (std::size_t t = 0; t < plan.rates.cols && !env.done(); ++t) {
    for (std::size_t k = 0; k < plan.rates.rows; ++k) action[k] = plan.rates[k][t];
    const auto out = env.step(action);
    for (double e : out.per_user_energy_j) ev.realized_energy_j += e;
    ev.penalty += out.penalty_term;
    ev.reward_sum += out.reward;
    ++ev.frames;
  }
  ev.stalls = env.stall_count();
  return ev;
}

}  // namespace equipow::oracle
