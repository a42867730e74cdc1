#pragma once

// DDPG with a deterministic actor and a Q critic, replay buffer, Gaussian
// exploration noise, a QoS safe layer, and soft target updates. The critic
// sees actions normalized by the rate ceiling; rewards stay in joules.

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "equipow/nn.hpp"
#include "equipow/rng.hpp"
#include "equipow/sim.hpp"

namespace equipow::ddpg {

struct AgentConfig {
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double soft_update = 1e-3;  // omega
  double discount = 1.0;      // gamma
  int batch = 512;
  double penalty = 0.1;  // lambda, mirrored into SimConfig::penalty_coeff
  double noise_std0 = 0.3;
  int noise_decay_episodes = 0;  // 0: use the run's episode count
  double critic_l2 = 1e-4;
  std::size_t replay_capacity = 1000000;

  void validate() const {
    if (!(soft_update >= 0.0 && soft_update <= 1.0))
      throw std::invalid_argument("agent: omega in [0, 1] required");
    if (!(discount >= 0.0 && discount <= 1.0))
      throw std::invalid_argument("agent: gamma in [0, 1] required");
    if (batch < 1 || replay_capacity < static_cast<std::size_t>(batch))
      throw std::invalid_argument("agent: need replay capacity >= batch >= 1");
  }
};

// Noise std for episode e of a horizon, linear from std0 down to 0.
inline double noise_std_at(double std0, int episode, int horizon) {
  if (horizon <= 0) return 0.0;
  const double f = 1.0 - static_cast<double>(episode) / horizon;
  return std0 * (f > 0.0 ? f : 0.0);
}

// Componentwise QoS projection. At deadline frames t = l * N_f the action of
// any user whose planned cumulative delivery (ledger + this frame) would miss
// the requirement of segments 2..l+1 is raised to exactly the deficit, in
// rate units. Identity elsewhere; never decreases a component.
std::vector<double> safe_layer(std::span<const double> action_bps,
                               std::span<const double> planned_bits,
                               const sim::SimConfig& cfg, int frame_t);

template <typename S>
struct Experience {
  std::vector<S> state;   // K * D0, row-major by user
  std::vector<S> action;  // K, post-safe-layer, normalized by the ceiling
  S reward = S(0);
  std::vector<S> next_state;
  bool done = false;
};

template <typename S>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed)
      : capacity_(capacity), rng_(seed) {}

  void add(Experience<S> e) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(e));
    } else {
      data_[head_] = std::move(e);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  const Experience<S>& operator[](std::size_t i) const { return data_[i]; }

  // Uniform sample without replacement (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::size_t batch) {
    if (batch > data_.size())
      throw std::logic_error("replay: fewer experiences than batch size");
    std::vector<std::size_t> picks;
    picks.reserve(batch);
    std::unordered_set<std::size_t> seen;
    for (std::size_t j = data_.size() - batch; j < data_.size(); ++j) {
      const std::size_t t = rng_.below(j + 1);
      if (seen.insert(t).second)
        picks.push_back(t);
      else {
        seen.insert(j);
        picks.push_back(j);
      }
    }
    return picks;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience<S>> data_;
  rngu::Stream rng_;
};

template <typename S>
struct Batch {
  nn::Mat<S> states;       // B x K*D0
  nn::Mat<S> actions;      // B x K (normalized)
  std::vector<S> rewards;  // B
  nn::Mat<S> next_states;  // B x K*D0
  std::vector<std::uint8_t> done;
};

template <typename S>
class Agent {
 public:
  Agent(const sim::SimConfig& sim_cfg, AgentConfig cfg, bool shared_arch,
        int nn_width, int nn_hidden, double rate_ceiling, std::uint64_t seed)
      : cfg_(cfg),
        num_users_(sim_cfg.num_users),
        state_cols_(sim_cfg.state_cols()),
        ceiling_(rate_ceiling),
        buffer_(cfg.replay_capacity, rngu::mix(seed, 0, 0xB1)),
        explore_rng_(rngu::mix(seed, 0, 0xB2)),
        actor_(nn::actor_specs(shared_arch, num_users_, state_cols_, nn_width,
                               nn_hidden),
               rngu::mix(seed, 0, 0xA1)),
        critic_(nn::critic_specs(shared_arch, num_users_, state_cols_, nn_width,
                                 nn_hidden),
                rngu::mix(seed, 0, 0xA2)),
        actor_target_(actor_),
        critic_target_(critic_) {
    cfg_.validate();
  }

  const AgentConfig& config() const { return cfg_; }
  double rate_ceiling() const { return ceiling_; }
  int num_users() const { return num_users_; }
  int state_cols() const { return state_cols_; }

  nn::Network<S>& actor() { return actor_; }
  nn::Network<S>& critic() { return critic_; }
  nn::Network<S>& actor_target() { return actor_target_; }
  nn::Network<S>& critic_target() { return critic_target_; }
  ReplayBuffer<S>& buffer() { return buffer_; }

  // Deterministic policy plus optional exploration noise (std given in
  // normalized action units), clamped to [0, ceiling].
  std::vector<double> act(const nn::Mat<double>& state, bool explore,
                          double noise_std) {
    const auto x = flatten(state);
    nn::Mat<S> in(1, x.size());
    in.data = x;
    const auto& y = actor_.forward(in);
    std::vector<double> action(static_cast<std::size_t>(num_users_));
    for (std::size_t k = 0; k < action.size(); ++k) {
      double a = static_cast<double>(y[0][k]) * ceiling_;
      if (explore && noise_std > 0.0)
        a += explore_rng_.gaussian(0.0, noise_std * ceiling_);
      action[k] = std::clamp(a, 0.0, ceiling_);
    }
    return action;
  }

  void observe(const nn::Mat<double>& state, std::span<const double> action_bps,
               double reward, const nn::Mat<double>& next_state, bool done) {
    Experience<S> e;
    e.state = flatten(state);
    e.action.resize(action_bps.size());
    for (std::size_t k = 0; k < action_bps.size(); ++k)
      e.action[k] = static_cast<S>(action_bps[k] / ceiling_);
    e.reward = static_cast<S>(reward);
    e.next_state = flatten(next_state);
    e.done = done;
    buffer_.add(std::move(e));
  }

  bool ready() const {
    return buffer_.size() >= static_cast<std::size_t>(cfg_.batch);
  }

  Batch<S> sample_batch() { return assemble(buffer_.sample_indices(
      static_cast<std::size_t>(cfg_.batch))); }

  Batch<S> assemble(std::span<const std::size_t> idx) const {
    const auto B = idx.size();
    const auto sd = static_cast<std::size_t>(num_users_ * state_cols_);
    const auto K = static_cast<std::size_t>(num_users_);
    Batch<S> b;
    b.states = nn::Mat<S>(B, sd);
    b.actions = nn::Mat<S>(B, K);
    b.next_states = nn::Mat<S>(B, sd);
    b.rewards.resize(B);
    b.done.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& e = buffer_[idx[i]];
      std::copy(e.state.begin(), e.state.end(), b.states[i]);
      std::copy(e.action.begin(), e.action.end(), b.actions[i]);
      std::copy(e.next_state.begin(), e.next_state.end(), b.next_states[i]);
      b.rewards[i] = e.reward;
      b.done[i] = e.done ? 1 : 0;
    }
    return b;
  }

  // One gradient-descent step on the mean squared TD error; returns the
  // pre-step loss. Targets bootstrap with the target networks, terminal
  // transitions use the bare reward.
  double critic_update(const Batch<S>& batch) {
    if (buffer_.size() == 0) throw std::logic_error("critic update: empty buffer");
    const std::size_t B = batch.states.rows;
    const auto& next_a = actor_target_.forward(batch.next_states);
    const auto& next_q =
        critic_target_.forward(stack_state_action(batch.next_states, next_a));
    std::vector<double> y(B);
    for (std::size_t i = 0; i < B; ++i) {
      y[i] = static_cast<double>(batch.rewards[i]);
      if (!batch.done[i]) y[i] += cfg_.discount * static_cast<double>(next_q[i][0]);
    }
    const auto& q = critic_.forward(stack_state_action(batch.states, batch.actions));
    double loss = 0.0;
    nn::Mat<S> g(B, 1);
    for (std::size_t i = 0; i < B; ++i) {
      const double err = static_cast<double>(q[i][0]) - y[i];
      loss += err * err;
      g[i][0] = static_cast<S>(2.0 * err / static_cast<double>(B));
    }
    loss /= static_cast<double>(B);
    critic_.backward(g);
    critic_.adam_step(static_cast<S>(cfg_.critic_lr), static_cast<S>(cfg_.critic_l2));
    ++critic_updates_;
    return loss;
  }

  // One ascent step along the sampled deterministic policy gradient; the
  // critic's action-input gradient is chained through the actor's backward
  // pass. Returns the L2 norm of the actor gradient.
  double actor_update(const Batch<S>& batch) {
    const std::size_t B = batch.states.rows;
    const auto& a = actor_.forward(batch.states);
    critic_.forward(stack_state_action(batch.states, a));
    nn::Mat<S> gq(B, 1);
    gq.fill(static_cast<S>(1.0 / static_cast<double>(B)));
    const auto gin = critic_.backward(gq);
    // Slice out the action column of every user block.
    nn::Mat<S> ga(B, static_cast<std::size_t>(num_users_));
    const auto d = static_cast<std::size_t>(state_cols_);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t k = 0; k < static_cast<std::size_t>(num_users_); ++k)
        ga[i][k] = gin[i][k * (d + 1) + d];
    actor_.backward(ga);
    double norm2 = 0.0;
    actor_.visit([&](S&, S grad) {
      norm2 += static_cast<double>(grad) * static_cast<double>(grad);
    });
    actor_.adam_step(static_cast<S>(cfg_.actor_lr), S(0), /*ascend=*/true);
    return std::sqrt(norm2);
  }

  void soft_update() {
    actor_target_.soft_update_from(actor_, static_cast<S>(cfg_.soft_update));
    critic_target_.soft_update_from(critic_, static_cast<S>(cfg_.soft_update));
  }

  std::uint64_t critic_updates() const { return critic_updates_; }

  // Critic input: per-user block [state row, action], users in row order.
  nn::Mat<S> stack_state_action(const nn::Mat<S>& states,
                                const nn::Mat<S>& actions) const {
    const std::size_t B = states.rows;
    const auto d = static_cast<std::size_t>(state_cols_);
    const auto K = static_cast<std::size_t>(num_users_);
    nn::Mat<S> x(B, K * (d + 1));
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const S* srow = states[i] + k * d;
        S* dst = x[i] + k * (d + 1);
        std::copy(srow, srow + d, dst);
        dst[d] = actions[i][k];
      }
    return x;
  }

  std::vector<S> flatten(const nn::Mat<double>& m) const {
    std::vector<S> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
      out[i] = static_cast<S>(m.data[i]);
    return out;
  }

  rngu::Stream& explore_rng() { return explore_rng_; }

 private:
  AgentConfig cfg_;
  int num_users_;
  int state_cols_;
  double ceiling_;
  ReplayBuffer<S> buffer_;
  rngu::Stream explore_rng_;
  nn::Network<S> actor_, critic_, actor_target_, critic_target_;
  std::uint64_t critic_updates_ = 0;
};

struct EpisodeRecord {
  int episode = 0;
  double episode_return = 0.0;
  double energy_j = 0.0;
  double penalty = 0.0;  // accumulated penalty_term, before lambda
  int stalls = 0;
  double noise_std = 0.0;
  int frames = 0;
};

// Runs `episodes` training episodes: act -> safe layer -> step -> store ->
// one critic + actor + soft update per frame once the buffer holds a batch.
template <typename S>
std::vector<EpisodeRecord> train(sim::Env& env, Agent<S>& agent, int episodes,
                                 std::uint64_t seed) {
  const auto& cfg = env.config();
  const int horizon = agent.config().noise_decay_episodes > 0
                          ? agent.config().noise_decay_episodes
                          : episodes;
  std::vector<EpisodeRecord> records;
  records.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    const double noise = noise_std_at(agent.config().noise_std0, e, horizon);
    auto state = env.reset(rngu::mix(seed, static_cast<std::uint64_t>(e), 0xE0));
    EpisodeRecord rec;
    rec.episode = e;
    rec.noise_std = noise;
    const int stalls_before = env.stall_count();
    while (!env.done()) {
      auto action = agent.act(state, /*explore=*/true, noise);
      std::vector<double> planned(static_cast<std::size_t>(cfg.num_users));
      for (int k = 0; k < cfg.num_users; ++k)
        planned[static_cast<std::size_t>(k)] = env.progress(k).planned_delivered;
      action = safe_layer(action, planned, cfg, env.frame_index());
      auto out = env.step(action);
      agent.observe(state, action, out.reward, out.next_state, out.done);
      if (agent.ready()) {
        const auto batch = agent.sample_batch();
        agent.critic_update(batch);
        agent.actor_update(batch);
        agent.soft_update();
      }
      rec.episode_return += out.reward;
      for (double ej : out.per_user_energy_j) rec.energy_j += ej;
      rec.penalty += out.penalty_term;
      ++rec.frames;
      state = std::move(out.next_state);
    }
    rec.stalls = env.stall_count() - stalls_before;
    records.push_back(rec);
  }
  return records;
}

}  // namespace equipow::ddpg
