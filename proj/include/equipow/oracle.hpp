#pragma once

// Perfect-prediction benchmark. Given the whole episode's serving gains, the
// per-user problem (minimize expected transmit energy subject to cumulative
// deadline constraints) is convex; with exponential fading the marginal power
// per rate equals nu * ln2 / W independent of the gain, so the optimum uses a
// common water level per deadline group. The groups and their levels are the
// dual solution, found by nested bisection over prefix deadlines.

#include <cstdint>
#include <span>
#include <vector>

#include "equipow/kernels.hpp"
#include "equipow/sim.hpp"

namespace equipow::oracle {

struct UserPlan {
  std::vector<double> rates_bps;          // per frame
  std::vector<double> expected_energy_j;  // per frame, (1/rho) dT E[p]
  double expected_total_j = 0.0;
  bool qos_feasible = true;  // false if a frame would need rate > ceiling
  bool power_ok = true;      // false if a frame's expected power > P_max
  double kkt_residual = 0.0;
};

// Gains are the serving large-scale gains for frames 1..T.
UserPlan per_user_plan(std::span<const double> gains, const sim::SimConfig& cfg,
                       int user, double rate_ceiling);

struct EpisodePlan {
  kernels::Mat<double> rates;  // K x T
  std::vector<UserPlan> users;
  double expected_total_j = 0.0;
};

EpisodePlan plan_episode(const sim::SimConfig& cfg, std::uint64_t seed);

struct PlanEval {
  double realized_energy_j = 0.0;
  double penalty = 0.0;  // accumulated penalty_term
  double reward_sum = 0.0;
  int frames = 0;
  int stalls = 0;
};

// Executes the plan through the environment with the same seed (hence the
// same gain trajectory) and reports realized energy and penalty.
PlanEval evaluate_plan(const EpisodePlan& plan, const sim::SimConfig& cfg,
                       std::uint64_t seed);

// Reference plans for dominance checks: one constant rate meeting every
// deadline, and delivery of each segment entirely in its deadline frame.
UserPlan equal_rate_plan(std::span<const double> gains,
                         const sim::SimConfig& cfg, int user);
UserPlan just_in_time_plan(std::span<const double> gains,
                           const sim::SimConfig& cfg, int user);

}  // namespace equipow::oracle
