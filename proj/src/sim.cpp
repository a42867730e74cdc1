#include "equipow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace equipow::sim {

namespace {
// Purpose tags for per-identity RNG substreams.
constexpr std::uint64_t kTagSpawn = 0x51;
constexpr std::uint64_t kTagMobility = 0x52;
constexpr std::uint64_t kTagFading = 0x53;
}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("sim config: " + msg); };
  if (num_users < 1) fail("K >= 1 required");
  if (num_bs < 2) fail("M >= 2 required");
  if (neighbor_bs < 1 || neighbor_bs > num_bs) fail("1 <= N_b <= M required");
  if (history_depth < 0) fail("N_t >= 0 required");
  if (segments_per_video < 1 || frames_per_segment < 1 || slots_per_frame < 1)
    fail("N_v, N_f, N_s >= 1 required");
  if (frame_s <= 0 || slot_s <= 0) fail("positive frame and slot durations required");
  if (std::fabs(slot_s * slots_per_frame - frame_s) > 1e-9 * frame_s)
    fail("tau * N_s must equal dT");
  if (bandwidth_hz <= 0 || noise_power_w <= 0 || max_bs_power_w <= 0)
    fail("positive bandwidth, noise and power cap required");
  if (amplifier_eff <= 0) fail("rho > 0 required");
  if (circuit_power_w < 0 || penalty_coeff < 0) fail("P_c and lambda must be >= 0");
  if (segment_bits.empty() ||
      (segment_bits.size() != 1 &&
       segment_bits.size() != static_cast<std::size_t>(num_users)))
    fail("segment_bits must have 1 or K entries");
  for (double s : segment_bits)
    if (s <= 0) fail("segment sizes must be positive");
  if (road_offset_m <= 0) fail("road offset must be positive");
  if (!(speed_min_mps <= initial_speed_mps && initial_speed_mps <= speed_max_mps))
    fail("speed bounds must bracket the initial speed");
  if (spawn_min_m > spawn_max_m) fail("spawn interval reversed");
  // Users must stay within the BS line for the whole episode (one extra frame
  // of travel is needed for the terminal state).
  const double road_len = (num_bs - 1) * inter_bs_m;
  const double travel =
      spawn_max_m + speed_max_mps * frame_s * (total_frames() + 1);
  if (travel > road_len)
    fail("road length shorter than episode travel (" + std::to_string(travel) +
         " m needed, " + std::to_string(road_len) + " m of BS line)");
}

UserKinematics advance_mobility(const UserKinematics& kin, const SimConfig& cfg,
                                rngu::Stream& rng) {
  const double accel = rng.gaussian(0.0, cfg.accel_std_mps2);
  UserKinematics next;
  next.velocity_mps = std::clamp(kin.velocity_mps + accel * cfg.frame_s,
                                 cfg.speed_min_mps, cfg.speed_max_mps);
  next.position_m = kin.position_m + next.velocity_mps * cfg.frame_s;
  return next;
}

double large_scale_gain(const SimConfig& cfg, double user_x, int bs_index) {
  const double bs_x = bs_index * cfg.inter_bs_m;
  const double d = std::hypot(cfg.road_offset_m, user_x - bs_x);
  const double loss_db =
      cfg.pathloss_intercept_db + cfg.pathloss_exponent_db * std::log10(d);
  return std::pow(10.0, -loss_db / 10.0);
}

Env::Env(SimConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const double best_alpha = [&] {
    const double loss_db = cfg_.pathloss_intercept_db +
                           cfg_.pathloss_exponent_db * std::log10(cfg_.road_offset_m);
    return std::pow(10.0, -loss_db / 10.0);
  }();
  const wf::Channel best{best_alpha, cfg_.noise_power_w, cfg_.bandwidth_hz};
  rate_ceiling_ = wf::water_level_for_power(best, cfg_.max_bs_power_w).expected_rate;
}

kernels::Mat<double> Env::reset(std::uint64_t seed) {
  std::vector<int> labels(static_cast<std::size_t>(cfg_.num_users));
  std::iota(labels.begin(), labels.end(), 0);
  return reset(seed, labels);
}

kernels::Mat<double> Env::reset(std::uint64_t seed, std::span<const int> labels) {
  const auto K = static_cast<std::size_t>(cfg_.num_users);
  if (labels.size() != K)
    throw std::invalid_argument("reset: labels must have K entries");

  kin_.assign(K, {});
  progress_.assign(K, {});
  channel_.assign(K, {});
  history_.assign(K, {});
  mobility_rng_.clear();
  fading_rng_.clear();
  diag_.assign(K, {});
  stalls_ = 0;
  frame_ = 1;
  done_ = false;

  for (std::size_t k = 0; k < K; ++k) {
    const auto id = static_cast<std::uint64_t>(labels[k]);
    rngu::Stream spawn(rngu::mix(seed, id, kTagSpawn));
    mobility_rng_.emplace_back(rngu::mix(seed, id, kTagMobility));
    fading_rng_.emplace_back(rngu::mix(seed, id, kTagFading));
    kin_[k].position_m = spawn.uniform(cfg_.spawn_min_m, cfg_.spawn_max_m);
    kin_[k].velocity_mps = cfg_.initial_speed_mps;
    // Segment 1 is pre-buffered; the QoS schedule covers segments 2..N_v.
    progress_[k].buffer_bits = cfg_.segment_bits_for(static_cast<int>(k));
    progress_[k].playback_frame = 1;
    progress_[k].current_segment = 1;
  }

  refresh_channels();
  const std::size_t width =
      static_cast<std::size_t>(cfg_.history_depth + 1) *
      static_cast<std::size_t>(cfg_.neighbor_bs);
  for (std::size_t k = 0; k < K; ++k) {
    history_[k].resize(width);
    // Replicate frame-1 gains into the whole history window.
    for (int h = 0; h <= cfg_.history_depth; ++h)
      std::copy(channel_[k].gains.begin(), channel_[k].gains.end(),
                history_[k].begin() +
                    static_cast<std::size_t>(h * cfg_.neighbor_bs));
  }
  return state();
}

void Env::refresh_channels() {
  const int M = cfg_.num_bs;
  std::vector<std::pair<double, int>> ranked(static_cast<std::size_t>(M));
  for (std::size_t k = 0; k < kin_.size(); ++k) {
    for (int m = 0; m < M; ++m)
      ranked[static_cast<std::size_t>(m)] = {
          large_scale_gain(cfg_, kin_[k].position_m, m), m};
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    auto& ch = channel_[k];
    ch.gains.resize(static_cast<std::size_t>(cfg_.neighbor_bs));
    for (int i = 0; i < cfg_.neighbor_bs; ++i)
      ch.gains[static_cast<std::size_t>(i)] = ranked[static_cast<std::size_t>(i)].first;
    ch.serving_bs = ranked[0].second;
  }
}

void Env::push_history() {
  const auto nb = static_cast<std::size_t>(cfg_.neighbor_bs);
  for (std::size_t k = 0; k < history_.size(); ++k) {
    auto& h = history_[k];
    std::copy(h.begin() + nb, h.end(), h.begin());
    std::copy(channel_[k].gains.begin(), channel_[k].gains.end(),
              h.end() - static_cast<std::ptrdiff_t>(nb));
  }
}

kernels::Mat<double> Env::state() const {
  const auto K = static_cast<std::size_t>(cfg_.num_users);
  kernels::Mat<double> s(K, static_cast<std::size_t>(cfg_.state_cols()));
  // Gains enter the state in dB, affinely mapped so the scenario's plausible
  // range [farthest ranked neighbor, closest approach] covers roughly [0, 1].
  const double d_max = std::hypot(
      cfg_.road_offset_m, 0.5 * (cfg_.neighbor_bs + 1) * cfg_.inter_bs_m);
  const double db_hi = -(cfg_.pathloss_intercept_db +
                         cfg_.pathloss_exponent_db * std::log10(cfg_.road_offset_m));
  const double db_lo = -(cfg_.pathloss_intercept_db +
                         cfg_.pathloss_exponent_db * std::log10(d_max));
  const double db_span = db_hi - db_lo;

  for (std::size_t k = 0; k < K; ++k) {
    const auto& p = progress_[k];
    s[k][0] = p.buffer_bits / cfg_.segment_bits_for(static_cast<int>(k));
    s[k][1] = static_cast<double>(p.playback_frame) / cfg_.frames_per_segment;
    s[k][2] = p.eta;
    s[k][3] = static_cast<double>(channel_[k].serving_bs + 1) / cfg_.num_bs;
    for (std::size_t i = 0; i < history_[k].size(); ++i) {
      const double db = 10.0 * std::log10(history_[k][i]);
      s[k][4 + i] = (db - db_lo) / db_span;
    }
  }
  return s;
}

std::vector<double> Env::serving_gains() const {
  std::vector<double> g(channel_.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = channel_[k].gains[0];
  return g;
}

StepOutcome Env::step(std::span<const double> action_bps) {
  if (done_) throw std::logic_error("step: episode already done");
  const auto K = static_cast<std::size_t>(cfg_.num_users);
  if (action_bps.size() != K)
    throw std::invalid_argument("step: action must have K entries");
  for (double a : action_bps)
    if (!std::isfinite(a) || a < 0.0)
      throw std::invalid_argument("step: actions must be finite and >= 0");

  StepOutcome out;
  out.per_user_energy_j.resize(K);
  out.per_user_delivered_bits.resize(K);

  const double cap_energy_j = cfg_.max_bs_power_w * cfg_.frame_s;
  const double circuit_energy_j = cfg_.circuit_power_w > 0.0
                                      ? cfg_.frame_s * cfg_.circuit_power_w
                                      : 0.0;
  double energy_sum = 0.0;
  double penalty = 0.0;

  for (std::size_t k = 0; k < K; ++k) {
    const wf::Channel ch{channel_[k].gains[0], cfg_.noise_power_w,
                         cfg_.bandwidth_hz};
    double nu = 0.0;
    if (action_bps[k] > 0.0)
      nu = wf::water_level_for_rate(ch, action_bps[k]).water_level;

    auto& dg = diag_[k];
    dg.alpha = ch.alpha;
    dg.water_level = nu;
    dg.g_draws.resize(static_cast<std::size_t>(cfg_.slots_per_frame));
    for (double& g : dg.g_draws) g = fading_rng_[k].expo();

    const auto slots = wf::slot_powers(ch, nu, dg.g_draws, cfg_.slot_s,
                                       cfg_.amplifier_eff, circuit_energy_j);
    dg.powers_w = slots.powers_w;

    out.per_user_energy_j[k] = slots.transmit_energy_j;
    out.per_user_delivered_bits[k] = slots.delivered_bits;
    energy_sum += slots.transmit_energy_j;

    // Penalty exactly as the reward formula states it: per (BS, user) pair,
    // RF energy against the cap in energy units. Only the serving BS has
    // I(m,k) = 1.
    double raw_energy = 0.0;
    for (double p : slots.powers_w) raw_energy += p;
    raw_energy *= cfg_.slot_s;
    penalty += std::max(0.0, raw_energy - cap_energy_j);

    auto& pr = progress_[k];
    pr.cumulative_delivered += slots.delivered_bits;
    pr.planned_delivered += action_bps[k] * cfg_.frame_s;
    const double need = cfg_.video_bits_after_prebuffer(static_cast<int>(k));
    pr.eta = need > 0.0 ? std::min(1.0, pr.cumulative_delivered / need) : 1.0;

    // Uniform playback drain of the segment playing during this frame.
    pr.buffer_bits += slots.delivered_bits;
    const double drain =
        cfg_.segment_bits_for(static_cast<int>(k)) / cfg_.frames_per_segment;
    if (pr.buffer_bits < drain) {
      ++stalls_;
      pr.buffer_bits = 0.0;
    } else {
      pr.buffer_bits -= drain;
    }
  }

  out.penalty_term = penalty;
  out.reward = -(energy_sum + cfg_.penalty_coeff * penalty);

  ++frame_;
  for (std::size_t k = 0; k < K; ++k) {
    kin_[k] = advance_mobility(kin_[k], cfg_, mobility_rng_[k]);
    auto& pr = progress_[k];
    pr.playback_frame = (frame_ - 1) % cfg_.frames_per_segment + 1;
    pr.current_segment =
        std::min(cfg_.segments_per_video, 1 + (frame_ - 1) / cfg_.frames_per_segment);
  }
  refresh_channels();
  push_history();

  bool all_done = true;
  for (const auto& pr : progress_) all_done = all_done && pr.eta >= 1.0;
  done_ = all_done || frame_ > cfg_.total_frames();
  out.done = done_;
  out.next_state = state();
  return out;
}

kernels::Mat<double> Env::serving_gain_trajectory(const SimConfig& cfg,
                                                  std::uint64_t seed) {
  Env env(cfg);
  env.reset(seed);
  const auto K = static_cast<std::size_t>(cfg.num_users);
  const auto T = static_cast<std::size_t>(cfg.total_frames());
  kernels::Mat<double> gains(K, T);
  std::vector<double> zeros(K, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = env.serving_gains();
    for (std::size_t k = 0; k < K; ++k) gains[k][t] = g[k];
    if (!env.done()) env.step(zeros);
  }
  return gains;
}

}  // namespace equipow::sim
