#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "equipow/ddpg.hpp"

using namespace equipow;
using nn::Mat;

namespace {

sim::SimConfig tiny_sim(int users) {
  sim::SimConfig c;
  c.num_users = users;
  c.num_bs = 3;
  c.segments_per_video = 2;
  c.frames_per_segment = 3;
  c.slots_per_frame = 5;
  c.slot_s = 0.2;
  c.spawn_max_m = 100.0;
  c.history_depth = 0;
  return c;
}

ddpg::AgentConfig tiny_agent_cfg() {
  ddpg::AgentConfig a;
  a.batch = 8;
  a.replay_capacity = 256;
  a.critic_l2 = 0.0;
  return a;
}

template <typename S>
Mat<double> random_state(int users, int cols, rngu::Stream& rng) {
  Mat<double> s(static_cast<std::size_t>(users), static_cast<std::size_t>(cols));
  for (auto& v : s.data) v = rng.uniform(0.0, 1.0);
  return s;
}

}  // namespace

TEST_SUITE("ddpg") {

TEST_CASE("safe layer: identity off deadlines, exact fill at deadlines") {
  auto cfg = tiny_sim(3);
  cfg.frames_per_segment = 10;
  cfg.segments_per_video = 3;
  const std::vector<double> action = {1e5, 2e5, 3e5};
  const std::vector<double> planned = {0.0, 5e6, 9e6};

  for (int t : {1, 5, 9, 11, 25, 30}) {  // off-deadline frames (30 = l=3 > N_v-1)
    const auto out = ddpg::safe_layer(action, planned, cfg, t);
    CHECK(out == action);
  }

  // Deadline l = 1 at t = 10: requirement 8e6 bits per user.
  const auto out = ddpg::safe_layer(action, planned, cfg, 10);
  CHECK(out[0] == doctest::Approx(8e6 / cfg.frame_s));          // full deficit
  CHECK(out[1] == doctest::Approx((8e6 - 5e6) / cfg.frame_s));  // partial
  CHECK(out[2] == 3e5);  // already ahead: 9e6 > 8e6

  // Never decreases any component.
  rngu::Stream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(3), p(3);
    for (auto& v : a) v = rng.uniform(0.0, 2e6);
    for (auto& v : p) v = rng.uniform(0.0, 2e7);
    const int t = 1 + static_cast<int>(rng.below(30));
    const auto s = ddpg::safe_layer(a, p, cfg, t);
    for (int k = 0; k < 3; ++k)
      CHECK(s[static_cast<std::size_t>(k)] >= a[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("act: deterministic policy, zero noise equals greedy") {
  const auto scfg = tiny_sim(2);
  ddpg::Agent<double> agent(scfg, tiny_agent_cfg(), true, 8, 1, 1e7, 42);
  rngu::Stream rng(7);
  const auto s = random_state<double>(2, scfg.state_cols(), rng);
  const auto a1 = agent.act(s, false, 0.0);
  const auto a2 = agent.act(s, false, 0.0);
  CHECK(a1 == a2);
  const auto a3 = agent.act(s, true, 0.0);
  CHECK(a1 == a3);
  for (double v : a1) {
    CHECK(v >= 0.0);
    CHECK(v <= 1e7);
  }
  // Noise perturbs but stays clamped.
  const auto a4 = agent.act(s, true, 0.2);
  CHECK(a4 != a1);
  for (double v : a4) {
    CHECK(v >= 0.0);
    CHECK(v <= 1e7);
  }
}

TEST_CASE("act: PE actor maps permuted states to permuted actions") {
  const auto scfg = tiny_sim(3);
  ddpg::Agent<double> agent(scfg, tiny_agent_cfg(), true, 9, 2, 1e7, 11);
  rngu::Stream rng(3);
  const auto s = random_state<double>(3, scfg.state_cols(), rng);
  const std::vector<int> perm = {2, 0, 1};
  Mat<double> sp(s.rows, s.cols);
  for (std::size_t r = 0; r < 3; ++r)
    std::copy(s[static_cast<std::size_t>(perm[r])],
              s[static_cast<std::size_t>(perm[r])] + s.cols, sp[r]);
  const auto a = agent.act(s, false, 0.0);
  const auto ap = agent.act(sp, false, 0.0);
  for (std::size_t r = 0; r < 3; ++r)
    CHECK(ap[r] ==
          doctest::Approx(a[static_cast<std::size_t>(perm[r])]).epsilon(1e-12));
}

TEST_CASE("replay sampling is uniform within 4 sigma") {
  ddpg::ReplayBuffer<double> buf(1000, 99);
  for (int i = 0; i < 1000; ++i) buf.add({});
  std::vector<int> freq(1000, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    for (auto idx : buf.sample_indices(1)) ++freq[idx];
  const double p = 1.0 / 1000.0;
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int f : freq) CHECK(std::fabs(f - mean) <= 4.0 * sigma);
}

TEST_CASE("replay sampling has no duplicates within a batch") {
  ddpg::ReplayBuffer<double> buf(64, 1);
  for (int i = 0; i < 40; ++i) buf.add({});
  for (int trial = 0; trial < 50; ++trial) {
    auto idx = buf.sample_indices(16);
    std::sort(idx.begin(), idx.end());
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    CHECK(idx.back() < 40);
  }
  CHECK_THROWS_AS(buf.sample_indices(41), std::logic_error);
}

TEST_CASE("critic fixed point: repeated updates drive Q to r on one transition") {
  const auto scfg = tiny_sim(1);
  auto acfg = tiny_agent_cfg();
  acfg.batch = 1;
  acfg.discount = 0.0;
  ddpg::Agent<double> agent(scfg, acfg, false, 8, 1, 1e7, 5);
  rngu::Stream rng(2);
  const auto s = random_state<double>(1, scfg.state_cols(), rng);
  const auto s2 = random_state<double>(1, scfg.state_cols(), rng);
  const std::vector<double> a = {4e6};
  const double r = -2.0;
  agent.observe(s, a, r, s2, false);

  const std::vector<std::size_t> idx = {0};
  const auto batch = agent.assemble(idx);
  double q = 0.0;
  int steps = 0;
  for (; steps < 5000; ++steps) {
    agent.critic_update(batch);
    const auto& out = agent.critic().forward(
        agent.stack_state_action(batch.states, batch.actions));
    q = out[0][0];
    if (std::fabs(q - r) < 1e-3) break;
  }
  CHECK(std::fabs(q - r) < 1e-3);
  CHECK(steps < 5000);

  // Terminal transitions bootstrap to the bare reward even with gamma = 1.
  auto acfg2 = tiny_agent_cfg();
  acfg2.batch = 1;
  acfg2.discount = 1.0;
  ddpg::Agent<double> agent2(scfg, acfg2, false, 8, 1, 1e7, 6);
  agent2.observe(s, a, r, s2, true);
  const auto b2 = agent2.assemble(idx);
  for (int i = 0; i < 4000 && std::fabs(q - r) >= 1e-3; ++i) {
    agent2.critic_update(b2);
    q = agent2.critic()
            .forward(agent2.stack_state_action(b2.states, b2.actions))[0][0];
  }
  CHECK(std::fabs(q - r) < 1e-3);
}

TEST_CASE("critic already equal to target: zero gradient, parameters unchanged") {
  const auto scfg = tiny_sim(1);
  auto acfg = tiny_agent_cfg();
  acfg.batch = 1;
  acfg.discount = 0.0;
  ddpg::Agent<double> agent(scfg, acfg, false, 6, 1, 1e7, 9);
  rngu::Stream rng(4);
  const auto s = random_state<double>(1, scfg.state_cols(), rng);
  const auto s2 = random_state<double>(1, scfg.state_cols(), rng);
  const std::vector<double> a = {1e6};
  // Make the stored reward exactly the critic's current prediction.
  agent.observe(s, a, 0.0, s2, false);
  auto batch = agent.assemble(std::vector<std::size_t>{0});
  const double q0 = agent.critic().forward(
      agent.stack_state_action(batch.states, batch.actions))[0][0];
  batch.rewards[0] = q0;
  std::vector<double> before;
  agent.critic().visit([&](double& v, double) { before.push_back(v); });
  const double loss = agent.critic_update(batch);
  CHECK(loss == doctest::Approx(0.0));
  std::vector<double> after;
  agent.critic().visit([&](double& v, double) { after.push_back(v); });
  CHECK(before == after);
}

TEST_CASE("actor gradient vanishes when the critic ignores the action") {
  const auto scfg = tiny_sim(2);
  auto acfg = tiny_agent_cfg();
  acfg.batch = 4;
  ddpg::Agent<double> agent(scfg, acfg, false, 8, 1, 1e7, 21);
  // Zero the critic's first-layer weights on every action column.
  const int d = scfg.state_cols();
  auto& l0 = agent.critic().layers()[0];
  for (std::size_t r = 0; r < l0.w0.rows; ++r)
    for (int k = 0; k < 2; ++k)
      l0.w0[r][static_cast<std::size_t>(k * (d + 1) + d)] = 0.0;

  rngu::Stream rng(14);
  for (int i = 0; i < 4; ++i) {
    const auto s = random_state<double>(2, d, rng);
    const auto s2 = random_state<double>(2, d, rng);
    const std::vector<double> a = {rng.uniform(0, 1e7), rng.uniform(0, 1e7)};
    agent.observe(s, a, -1.0, s2, false);
  }
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto batch = agent.assemble(idx);
  CHECK(agent.actor_update(batch) == 0.0);
}

TEST_CASE("actor ascends a quadratic critic to its peak") {
  // Frozen analytic critic Q(a) = -|a - a*|^2; the chain rule feeds
  // dQ/da = -2 (a - a*) through the actor's backward pass.
  nn::Network<double> actor(nn::actor_specs(true, 2, 3, 8, 1), 77);
  rngu::Stream rng(6);
  Mat<double> s(1, 6);
  for (auto& v : s.data) v = rng.uniform(0, 1);
  const std::vector<double> target = {0.3, 0.7};
  for (int it = 0; it < 4000; ++it) {
    const auto& a = actor.forward(s);
    Mat<double> ga(1, 2);
    for (std::size_t k = 0; k < 2; ++k)
      ga[0][k] = -2.0 * (a[0][k] - target[k]);
    actor.backward(ga);
    actor.adam_step(1e-2, 0.0, /*ascend=*/true);
  }
  const auto& a = actor.forward(s);
  CHECK(std::fabs(a[0][0] - 0.3) < 1e-2);
  CHECK(std::fabs(a[0][1] - 0.7) < 1e-2);
}

TEST_CASE("actor gradient norm is finite and nonzero at initialization") {
  const auto scfg = tiny_sim(2);
  auto acfg = tiny_agent_cfg();
  acfg.batch = 4;
  ddpg::Agent<double> agent(scfg, acfg, true, 8, 1, 1e7, 77);
  rngu::Stream rng(31);
  for (int i = 0; i < 4; ++i) {
    const auto s = random_state<double>(2, scfg.state_cols(), rng);
    const auto s2 = random_state<double>(2, scfg.state_cols(), rng);
    const std::vector<double> a = {rng.uniform(0, 1e7), rng.uniform(0, 1e7)};
    agent.observe(s, a, rng.uniform(-5, 0), s2, false);
  }
  const auto batch = agent.assemble(std::vector<std::size_t>{0, 1, 2, 3});
  const double norm = agent.actor_update(batch);
  CHECK(std::isfinite(norm));
  CHECK(norm > 0.0);
}

TEST_CASE("soft update: omega extremes, geometric contraction, target lag") {
  const auto scfg = tiny_sim(2);
  auto acfg = tiny_agent_cfg();

  {
    acfg.soft_update = 0.0;
    ddpg::Agent<double> agent(scfg, acfg, true, 8, 1, 1e7, 3);
    agent.actor().layers()[0].w0.data[0] += 0.5;
    std::vector<double> before;
    agent.actor_target().visit([&](double& v, double) { before.push_back(v); });
    agent.soft_update();
    std::vector<double> after;
    agent.actor_target().visit([&](double& v, double) { after.push_back(v); });
    CHECK(before == after);
  }
  {
    acfg.soft_update = 1.0;
    ddpg::Agent<double> agent(scfg, acfg, true, 8, 1, 1e7, 3);
    // Perturb the main actor, then a full update must copy it.
    agent.actor().layers()[0].w0.data[0] += 0.5;
    agent.soft_update();
    std::vector<double> m, t;
    agent.actor().visit([&](double& v, double) { m.push_back(v); });
    agent.actor_target().visit([&](double& v, double) { t.push_back(v); });
    CHECK(m == t);
  }
  {
    acfg.soft_update = 1e-3;
    ddpg::Agent<double> agent(scfg, acfg, true, 8, 1, 1e7, 3);
    agent.actor().layers()[0].w0.data[0] += 0.5;
    std::vector<double> gap0;
    {
      std::vector<double> m, t;
      agent.actor().visit([&](double& v, double) { m.push_back(v); });
      agent.actor_target().visit([&](double& v, double) { t.push_back(v); });
      for (std::size_t i = 0; i < m.size(); ++i) gap0.push_back(t[i] - m[i]);
    }
    const int n = 50;
    std::vector<double> prev = gap0;
    for (int it = 0; it < n; ++it) {
      agent.soft_update();
      std::vector<double> m, t;
      agent.actor().visit([&](double& v, double) { m.push_back(v); });
      agent.actor_target().visit([&](double& v, double) { t.push_back(v); });
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double gap = t[i] - m[i];
        CHECK(std::fabs(gap) <= std::fabs(prev[i]) * (1 - 1e-3) + 1e-15);
        prev[i] = gap;
      }
    }
    const double scale = std::pow(1.0 - 1e-3, n);
    for (std::size_t i = 0; i < gap0.size(); ++i)
      CHECK(prev[i] == doctest::Approx(gap0[i] * scale).epsilon(1e-9));
  }
}

TEST_CASE("permuting a stored batch preserves the critic loss and the update") {
  const int K = 3;
  const auto scfg = tiny_sim(K);
  auto acfg = tiny_agent_cfg();
  acfg.batch = 6;
  ddpg::Agent<double> base(scfg, acfg, true, 9, 1, 1e7, 31);
  ddpg::Agent<double> perm(scfg, acfg, true, 9, 1, 1e7, 31);

  const std::vector<int> pi = {1, 2, 0};
  rngu::Stream rng(17);
  const int d = scfg.state_cols();
  for (int i = 0; i < 6; ++i) {
    const auto s = random_state<double>(K, d, rng);
    const auto s2 = random_state<double>(K, d, rng);
    std::vector<double> a(K);
    for (auto& v : a) v = rng.uniform(0.0, 1e7);
    const double r = rng.uniform(-5.0, 0.0);
    base.observe(s, a, r, s2, i == 5);

    Mat<double> sp(s.rows, s.cols), s2p(s.rows, s.cols);
    std::vector<double> ap(static_cast<std::size_t>(K));
    for (std::size_t row = 0; row < static_cast<std::size_t>(K); ++row) {
      const auto src = static_cast<std::size_t>(pi[row]);
      std::copy(s[src], s[src] + s.cols, sp[row]);
      std::copy(s2[src], s2[src] + s.cols, s2p[row]);
      ap[row] = a[src];
    }
    perm.observe(sp, ap, r, s2p, i == 5);
  }

  std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  const auto b0 = base.assemble(idx);
  const auto b1 = perm.assemble(idx);
  const double loss0 = base.critic_update(b0);
  const double loss1 = perm.critic_update(b1);
  CHECK(loss0 == doctest::Approx(loss1).epsilon(1e-12));

  base.actor_update(b0);
  perm.actor_update(b1);

  // The two updated actors stay one permutation apart.
  const auto probe = random_state<double>(K, d, rng);
  Mat<double> probe_p(probe.rows, probe.cols);
  for (std::size_t row = 0; row < static_cast<std::size_t>(K); ++row) {
    const auto src = static_cast<std::size_t>(pi[row]);
    std::copy(probe[src], probe[src] + probe.cols, probe_p[row]);
  }
  const auto a0 = base.act(probe, false, 0.0);
  const auto a1 = perm.act(probe_p, false, 0.0);
  for (std::size_t row = 0; row < static_cast<std::size_t>(K); ++row)
    CHECK(a1[row] ==
          doctest::Approx(a0[static_cast<std::size_t>(pi[row])]).epsilon(1e-10));
}

TEST_CASE("train: zero episodes empty, fixed seed reproducible") {
  const auto scfg = tiny_sim(2);
  auto acfg = tiny_agent_cfg();
  acfg.noise_decay_episodes = 4;

  sim::Env env(scfg);
  ddpg::Agent<float> agent(scfg, acfg, true, 8, 1, env.rate_ceiling(), 77);
  CHECK(ddpg::train(env, agent, 0, 1).empty());

  auto run = [&] {
    sim::Env e(scfg);
    ddpg::Agent<float> ag(scfg, acfg, true, 8, 1, e.rate_ceiling(), 77);
    return ddpg::train(e, ag, 4, 123);
  };
  const auto r1 = run(), r2 = run();
  REQUIRE(r1.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r1[i].episode_return == r2[i].episode_return);
    CHECK(r1[i].energy_j == r2[i].energy_j);
    CHECK(r1[i].penalty == r2[i].penalty);
    CHECK(r1[i].frames == r2[i].frames);
    CHECK(r1[i].noise_std == r2[i].noise_std);
  }
  // Noise schedule decays linearly from std0 to 0.
  CHECK(r1[0].noise_std == doctest::Approx(0.3));
  CHECK(r1[3].noise_std == doctest::Approx(0.3 * 0.25));
}

}  // TEST_SUITE
