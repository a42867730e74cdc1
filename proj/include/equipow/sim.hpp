#pragma once

// Episodic video-streaming environment: K users move along a road past a line
// of base stations, each frame the agent picks one average rate per user, the
// serving BS realizes it with water-filling over the frame's fading slots, and
// the reward is the negative transmit energy minus a cap-violation penalty.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "equipow/kernels.hpp"
#include "equipow/rng.hpp"
#include "equipow/waterfill.hpp"

namespace equipow::sim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  int num_users = 10;   // K
  int num_bs = 8;       // M, placed at x = i * inter_bs_m
  double inter_bs_m = 500.0;
  double road_offset_m = 200.0;

  double bandwidth_hz = 2e6;                     // per-user W
  double noise_power_w = 3.16227766016838e-13;   // in-band s2 (-95 dBm)
  double max_bs_power_w = 39.810717055349734;    // 46 dBm
  double pathloss_intercept_db = 35.3;
  double pathloss_exponent_db = 37.6;  // dB per decade of distance

  std::vector<double> segment_bits = {8e6};  // per user (size 1 broadcasts)
  int segments_per_video = 15;  // N_v
  int frames_per_segment = 10;  // N_f
  int slots_per_frame = 1000;   // N_s
  double frame_s = 1.0;         // dT
  double slot_s = 1e-3;         // tau; must satisfy tau * N_s = dT

  int history_depth = 2;  // N_t past frames of gains kept in the state
  int neighbor_bs = 2;    // N_b strongest gains per user in the state

  double amplifier_eff = 1.0;   // rho
  double circuit_power_w = 0.0; // P_c
  double penalty_coeff = 0.1;   // lambda

  double initial_speed_mps = 16.0;
  double speed_min_mps = 12.0;
  double speed_max_mps = 20.0;
  double accel_std_mps2 = 0.5;
  double spawn_min_m = 0.0;
  double spawn_max_m = 200.0;

  std::uint64_t rng_seed = 1;

  int total_frames() const { return segments_per_video * frames_per_segment; }
  int state_cols() const { return 4 + (history_depth + 1) * neighbor_bs; }
  double segment_bits_for(int user) const {
    return segment_bits.size() == 1 ? segment_bits[0]
                                    : segment_bits[static_cast<std::size_t>(user)];
  }
  // Bits the QoS schedule requires by deadline l (segments 2..l+1).
  double qos_required_bits(int user, int deadline_l) const {
    return static_cast<double>(deadline_l) * segment_bits_for(user);
  }
  double video_bits_after_prebuffer(int user) const {
    return static_cast<double>(segments_per_video - 1) * segment_bits_for(user);
  }
  void validate() const;  // throws ConfigError
};

struct UserKinematics {
  double position_m = 0.0;
  double velocity_mps = 0.0;
};

// One frame of Gaussian acceleration, velocity clamped to the speed bounds,
// position advanced with the updated velocity.
UserKinematics advance_mobility(const UserKinematics& kin, const SimConfig& cfg,
                                rngu::Stream& rng);

// Linear gain 10^(-(icpt + slope*log10(d))/10) at Euclidean distance d from
// the user (on the road, offset from the BS line) to BS `bs_index`.
double large_scale_gain(const SimConfig& cfg, double user_x, int bs_index);

struct ChannelSnapshot {
  std::vector<double> gains;  // N_b strongest, descending; [0] is serving
  int serving_bs = 0;
};

struct UserProgress {
  double buffer_bits = 0.0;          // B: downloaded, not yet played
  int playback_frame = 1;            // l in 1..N_f
  double eta = 0.0;                  // downloaded fraction of segments 2..N_v
  double cumulative_delivered = 0.0; // realized bits (slot-by-slot sums)
  double planned_delivered = 0.0;    // sum of a_t * dT, the QoS ledger
  int current_segment = 1;           // segment being played
};

struct StepOutcome {
  double reward = 0.0;
  kernels::Mat<double> next_state;
  std::vector<double> per_user_energy_j;  // (1/rho) sum tau p (+ dT P_c)
  double penalty_term = 0.0;              // energy-domain, before lambda
  bool done = false;
  std::vector<double> per_user_delivered_bits;
};

// Per-user record of what the last step actually did, for inspection.
struct FrameDiag {
  double alpha = 0.0;
  double water_level = 0.0;
  std::vector<double> g_draws;
  std::vector<double> powers_w;
};

class Env {
 public:
  explicit Env(SimConfig cfg);

  kernels::Mat<double> reset(std::uint64_t seed);
  // `labels[row]` assigns a user identity to each row; every per-user RNG
  // substream is keyed by identity, so relabeling permutes the episode.
  kernels::Mat<double> reset(std::uint64_t seed, std::span<const int> labels);

  StepOutcome step(std::span<const double> action_bps);

  const SimConfig& config() const { return cfg_; }
  int frame_index() const { return frame_; }  // 1-based, next frame to run
  bool done() const { return done_; }
  bool is_deadline_frame(int t) const {
    return t >= 1 && t % cfg_.frames_per_segment == 0 &&
           t / cfg_.frames_per_segment <= cfg_.segments_per_video - 1;
  }

  const UserProgress& progress(int user) const {
    return progress_[static_cast<std::size_t>(user)];
  }
  const ChannelSnapshot& channel(int user) const {
    return channel_[static_cast<std::size_t>(user)];
  }
  const UserKinematics& kinematics(int user) const {
    return kin_[static_cast<std::size_t>(user)];
  }
  const FrameDiag& last_diag(int user) const {
    return diag_[static_cast<std::size_t>(user)];
  }
  int stall_count() const { return stalls_; }

  // Average rate of a user at the best on-road channel when the expected
  // transmit power equals P_max. Used as the actor output bound.
  double rate_ceiling() const { return rate_ceiling_; }

  kernels::Mat<double> state() const;

  // Serving gains for the upcoming frame (one per user).
  std::vector<double> serving_gains() const;

  // K x T serving-gain trajectory for a given seed; identical to what an
  // episode with that seed sees (the gain substreams do not depend on
  // actions).
  static kernels::Mat<double> serving_gain_trajectory(const SimConfig& cfg,
                                                      std::uint64_t seed);

 private:
  void refresh_channels();
  void push_history();

  SimConfig cfg_;
  double rate_ceiling_ = 0.0;
  int frame_ = 1;
  bool done_ = true;
  int stalls_ = 0;
  std::vector<UserKinematics> kin_;
  std::vector<UserProgress> progress_;
  std::vector<ChannelSnapshot> channel_;
  std::vector<std::vector<double>> history_;  // per user, (N_t+1)*N_b gains
  std::vector<rngu::Stream> mobility_rng_;
  std::vector<rngu::Stream> fading_rng_;
  std::vector<FrameDiag> diag_;
};

}  // namespace equipow::sim
