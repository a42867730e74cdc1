#pragma once

// Experiment driver shared by the CLI and the test suites: seeded training,
// greedy and random-baseline evaluation, parameter-count reports, oracle
// planning, CSV emission, and agent checkpoints.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "equipow/config.hpp"
#include "equipow/ddpg.hpp"
#include "equipow/oracle.hpp"

namespace equipow::harness {

inline constexpr const char* kVersionTag = "equipow-1.0.0";
inline constexpr const char* kTraceHeader =
    "run_id,seed,episode,return,energy_J,penalty,stalls,noise_std";

using TrainScalar = float;
using TrainAgent = ddpg::Agent<TrainScalar>;

std::string format_double(double v);

// $EQUIPOW_OUT, or "." when unset.
std::string output_root();

TrainAgent make_agent(const cfg::RunConfig& cfg, double rate_ceiling,
                      std::uint64_t seed);

struct TrainOutput {
  std::vector<ddpg::EpisodeRecord> records;
  TrainAgent agent;
};

TrainOutput run_training_full(const cfg::RunConfig& cfg, std::uint64_t seed);

std::vector<ddpg::EpisodeRecord> run_training(const cfg::RunConfig& cfg,
                                              std::uint64_t seed);

// Greedy (noise-free) rollouts of an agent, safe layer active, no learning.
std::vector<ddpg::EpisodeRecord> run_greedy(sim::Env& env, TrainAgent& agent,
                                            int episodes, std::uint64_t seed);

// Uniform-random actions in [0, ceiling] through the safe layer.
std::vector<ddpg::EpisodeRecord> run_random_baseline(const cfg::RunConfig& cfg,
                                                     std::uint64_t seed,
                                                     int episodes);

void write_trace_csv(const std::string& path, const std::string& run_id,
                     std::uint64_t seed,
                     const std::vector<ddpg::EpisodeRecord>& records,
                     int smooth_window);

// One row per episode with per-seed columns averaged.
void write_aggregate_csv(const std::string& path, const std::string& run_id,
                         const std::vector<std::vector<ddpg::EpisodeRecord>>& runs,
                         int smooth_window);

void save_agent(const std::string& path, TrainAgent& agent,
                const cfg::RunConfig& cfg);
// Rebuilds an agent for `cfg` and loads the checkpoint into it; throws with
// both shape signatures when the two disagree.
TrainAgent load_agent(const std::string& path, const cfg::RunConfig& cfg,
                      double rate_ceiling);

int cmd_train(const cfg::RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
              const std::string& outdir);
int cmd_eval(const cfg::RunConfig& cfg, const std::string& checkpoint,
             const std::vector<std::uint64_t>& seeds, int episodes,
             const std::string& outdir);
int cmd_count_params(const cfg::RunConfig& cfg, std::ostream& os);
int cmd_oracle(const cfg::RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
               const std::string& outdir);

}  // namespace equipow::harness
