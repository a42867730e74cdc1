// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Criterion 6 trains twelve-hundred-odd episodes per run and
// dominates the runtime; everything else finishes in seconds to minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "equipow/harness.hpp"

using namespace equipow;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int index, std::string name)
      : index_(index), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}

  void expect(bool ok, const std::string& detail) {
    if (!ok) {
      ok_ = false;
      details_.push_back(detail);
    }
  }

  ~Criterion() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    std::printf("%s criterion %d: %s (%.1fs)\n", ok_ ? "PASS" : "FAIL", index_,
                name_.c_str(), secs);
    for (const auto& d : details_) std::printf("     - %s\n", d.c_str());
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

 private:
  int index_;
  std::string name_;
  bool ok_ = true;
  std::vector<std::string> details_;
  std::chrono::steady_clock::time_point start_;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

cfg::RunConfig desk_config() {
  auto c = cfg::parse_file(std::string(EQUIPOW_SOURCE_DIR) + "/configs/desk.cfg");
  // Pinned criterion-6 scenario: K=2, 3 segments, N_f=10, N_s=100, 2000
  // episodes; exploration keeps a small floor by decaying past the run.
  cfg::apply_override(c, "train.episodes=2000");
  cfg::apply_override(c, "agent.noise_decay_episodes=3000");
  c.finalize();
  return c;
}

// ---------------------------------------------------------------------------

void criterion_1_parameter_counts() {
  Criterion c(1, "parameter counts match the reference table and closed forms");
  const int d = 600, hidden = 4, D0 = 10;
  const std::vector<std::pair<int, long long>> fc_expected = {
      {2, 5814000}, {5, 5893200}, {10, 6025200}};
  for (const auto& [K, expected] : fc_expected) {
    const auto a = nn::actor_specs(false, K, D0, d, hidden);
    const auto cr = nn::critic_specs(false, K, D0, d, hidden);
    const auto total =
        2 * (nn::count_free_params(a, false) + nn::count_free_params(cr, false));
    c.expect(total == expected, "fc K=" + std::to_string(K) + ": counted " +
                                   std::to_string(total) + ", expected " +
                                   std::to_string(expected));
  }
  for (int K : {2, 5, 10}) {
    const auto a = nn::actor_specs(true, K, D0, d, hidden);
    const auto cr = nn::critic_specs(true, K, D0, d, hidden);
    const auto dd = static_cast<long long>(d);
    const auto kk = static_cast<long long>(K);
    const long long actor_closed =
        (2 * hidden * dd * dd + 2 * dd * kk * D0 + 2 * dd * kk) / (kk * kk);
    const long long critic_closed =
        (2 * hidden * dd * dd + 2 * dd * kk * (D0 + 1) + dd * kk) / (kk * kk);
    const auto na = nn::count_free_params(a, false);
    const auto nc = nn::count_free_params(cr, false);
    c.expect(na == actor_closed, "shared actor K=" + std::to_string(K) +
                                     ": counted " + std::to_string(na) +
                                     ", closed form " +
                                     std::to_string(actor_closed));
    c.expect(nc == critic_closed, "shared critic K=" + std::to_string(K) +
                                      ": counted " + std::to_string(nc) +
                                      ", closed form " +
                                      std::to_string(critic_closed));
    const auto af = nn::actor_specs(false, K, D0, d, hidden);
    const auto cf = nn::critic_specs(false, K, D0, d, hidden);
    const double ratio =
        static_cast<double>(na + nc) /
        static_cast<double>(nn::count_free_params(af, false) +
                            nn::count_free_params(cf, false));
    const double ideal = 2.0 / (static_cast<double>(K) * K);
    c.expect(std::fabs(ratio - ideal) / ideal < 0.05,
             "ratio K=" + std::to_string(K) + ": " + num(ratio) + " vs 2/K^2 " +
                 num(ideal));
  }
}

template <typename S>
nn::Mat<S> permute_blocks(const nn::Mat<S>& x, const std::vector<int>& perm,
                          std::size_t bw) {
  nn::Mat<S> out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t b = 0; b < perm.size(); ++b)
      std::copy(x[r] + static_cast<std::size_t>(perm[b]) * bw,
                x[r] + static_cast<std::size_t>(perm[b]) * bw + bw,
                out[r] + b * bw);
  return out;
}

template <typename S>
double symmetry_error(int K, std::uint64_t seed, bool exhaustive) {
  const int D0 = 10, d = 600, hidden = 4;
  nn::Network<S> actor(nn::actor_specs(true, K, D0, d, hidden), seed);
  nn::Network<S> critic(nn::critic_specs(true, K, D0, d, hidden), seed + 1);
  rngu::Stream rng(seed + 2);
  nn::Mat<S> s(1, static_cast<std::size_t>(K * D0));
  for (auto& v : s.data) v = static_cast<S>(rng.uniform(0.0, 1.0));
  nn::Mat<S> sa(1, static_cast<std::size_t>(K * (D0 + 1)));
  for (auto& v : sa.data) v = static_cast<S>(rng.uniform(0.0, 1.0));

  const nn::Mat<S> a0 = actor.forward(s);
  const nn::Mat<S> q0 = critic.forward(sa);

  double worst = 0.0;
  auto probe = [&](const std::vector<int>& perm) {
    const auto sp = permute_blocks(s, perm, D0);
    const auto& ap = actor.forward(sp);
    const auto a_expect = permute_blocks(a0, perm, 1);
    for (std::size_t i = 0; i < ap.size(); ++i) {
      const double x = ap.data[i], y = a_expect.data[i];
      worst = std::max(worst, std::fabs(x - y) /
                                  std::max({std::fabs(x), std::fabs(y), 1e-30}));
    }
    const auto sap = permute_blocks(sa, perm, D0 + 1);
    const auto& qp = critic.forward(sap);
    const double x = qp[0][0], y = q0[0][0];
    worst = std::max(worst, std::fabs(x - y) /
                                std::max({std::fabs(x), std::fabs(y), 1e-30}));
  };

  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  if (exhaustive) {
    do probe(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    for (int t = 0; t < 100; ++t) {
      for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
      probe(perm);
    }
  }
  return worst;
}

void criterion_2_symmetry() {
  Criterion c(2, "PE actor equivariance and PI critic invariance");
  for (int K : {2, 3, 4}) {
    const double e32 = symmetry_error<float>(K, 10 + K, true);
    c.expect(e32 <= 1e-6, "32-bit exhaustive K=" + std::to_string(K) +
                              ": max rel err " + num(e32));
    const double e64 = symmetry_error<double>(K, 20 + K, true);
    c.expect(e64 <= 1e-12, "64-bit exhaustive K=" + std::to_string(K) +
                               ": max rel err " + num(e64));
  }
  for (int K : {5, 10}) {
    const double e32 = symmetry_error<float>(K, 30 + K, false);
    c.expect(e32 <= 1e-6, "32-bit random K=" + std::to_string(K) +
                              ": max rel err " + num(e32));
    const double e64 = symmetry_error<double>(K, 40 + K, false);
    c.expect(e64 <= 1e-12, "64-bit random K=" + std::to_string(K) +
                               ": max rel err " + num(e64));
  }
}

double gradcheck_worst(std::vector<nn::LayerSpec> specs, std::uint64_t seed) {
  nn::Network<double> net(specs, seed);
  rngu::Stream rng(seed ^ 0xfeed);
  const std::size_t B = 3;
  nn::Mat<double> x, tgt;
  for (int attempt = 0; attempt < 50; ++attempt) {
    x = nn::Mat<double>(B, static_cast<std::size_t>(net.in_dim()));
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    tgt = nn::Mat<double>(B, static_cast<std::size_t>(net.out_dim()));
    for (auto& v : tgt.data) v = rng.uniform(-1.0, 1.0);
    net.forward(x);
    double margin = 1.0;
    for (const auto& layer : net.layers())
      if (layer.spec.act == nn::Act::Relu)
        for (double z : layer.preact.data)
          margin = std::min(margin, std::fabs(z));
    if (margin > 1e-3) break;
  }

  const auto& y = net.forward(x);
  nn::Mat<double> g(y.rows, y.cols);
  for (std::size_t i = 0; i < y.size(); ++i) g.data[i] = y.data[i] - tgt.data[i];
  net.backward(g);

  auto loss = [&] {
    const auto& yy = net.forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < yy.size(); ++i) {
      const double d = yy.data[i] - tgt.data[i];
      acc += 0.5 * d * d;
    }
    return acc;
  };

  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double analytic, double& param) {
    const double keep = param;
    param = keep + h;
    const double lp = loss();
    param = keep - h;
    const double lm = loss();
    param = keep;
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst, std::fabs(analytic - fd) /
                                std::max({std::fabs(analytic), std::fabs(fd),
                                          1e-6}));
  };
  for (auto& layer : net.layers()) {
    for (std::size_t i = 0; i < layer.w0.size(); ++i)
      check(layer.g0.data[i], layer.w0.data[i]);
    for (std::size_t i = 0; i < layer.w1.size(); ++i)
      check(layer.g1.data[i], layer.w1.data[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      check(layer.gbias[i], layer.bias[i]);
  }
  return worst;
}

void criterion_3_gradients() {
  Criterion c(3, "analytic gradients vs central differences, 64-bit");
  using nn::Act;
  using nn::LayerKind;
  const double fc = gradcheck_worst({{LayerKind::Dense, 1, 6, 8, Act::Relu},
                                     {LayerKind::Dense, 1, 8, 7, Act::ScaledTanh},
                                     {LayerKind::Dense, 1, 7, 3, Act::Identity}},
                                    101);
  c.expect(fc < 1e-4, "dense stack: max rel err " + num(fc));
  const double pe =
      gradcheck_worst({{LayerKind::PeShared, 3, 5, 4, Act::Relu},
                       {LayerKind::PeShared, 3, 4, 4, Act::ScaledTanh},
                       {LayerKind::PeShared, 3, 4, 1, Act::ScaledTanh}},
                      102);
  c.expect(pe < 1e-4, "shared stack: max rel err " + num(pe));
  const double pi =
      gradcheck_worst({{LayerKind::PeShared, 4, 6, 5, Act::Relu},
                       {LayerKind::PeShared, 4, 5, 5, Act::Relu},
                       {LayerKind::PiOutput, 4, 5, 1, Act::Identity}},
                      103);
  c.expect(pi < 1e-4, "invariant-output stack: max rel err " + num(pi));
}

void criterion_4_waterfill() {
  Criterion c(4, "water-filling inversion round-trip and realized rate");
  rngu::Stream rng(7);
  double worst_abs = 0.0, worst_allowed = 0.0;
  bool all_ok = true;
  for (int i = 0; i < 100; ++i) {
    wf::Channel ch{std::pow(10.0, rng.uniform(-14.0, -11.0)),
                   3.16227766016838e-13, 2e6};
    const double target = rng.uniform(1e3, 3e7);
    const auto sol = wf::water_level_for_rate(ch, target);
    const double back = wf::expected_rate(ch, sol.water_level);
    const double err = std::fabs(back - target);
    const double allowed = std::max(1e-6 * target, 1.0);
    if (err > worst_abs) {
      worst_abs = err;
      worst_allowed = allowed;
    }
    all_ok = all_ok && err <= allowed;
  }
  c.expect(all_ok, "round-trip error " + num(worst_abs) + " exceeds " +
                       num(worst_allowed));

  const wf::Channel ch{1e-12, 3.16227766016838e-13, 2e6};
  const double nu = 0.9;
  const int slots = 100000;
  rngu::Stream grng(8);
  std::vector<double> g(slots);
  for (auto& v : g) v = grng.expo();
  const auto res = wf::slot_powers(ch, nu, g, 1e-3, 1.0);
  const double realized = res.delivered_bits / (slots * 1e-3);
  const double expected = wf::expected_rate(ch, nu);
  const double rel = std::fabs(realized - expected) / expected;
  c.expect(rel <= 0.01, "realized slot-average rate off by " + num(rel));
}

void criterion_5_safe_layer() {
  Criterion c(5, "safe layer: identity, exact fill, monotone, QoS ledger");
  auto rc = desk_config();
  const auto& scfg = rc.sim;
  rngu::Stream rng(99);

  // Pointwise properties on random inputs.
  bool identity_ok = true, fill_ok = true, monotone_ok = true;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> a(2), planned(2);
    for (auto& v : a) v = rng.uniform(0.0, 2e6);
    for (auto& v : planned) v = rng.uniform(0.0, 1.7e7);
    const int t = 1 + static_cast<int>(rng.below(30));
    const auto out = ddpg::safe_layer(a, planned, scfg, t);
    const bool deadline = t % scfg.frames_per_segment == 0 &&
                          t / scfg.frames_per_segment <=
                              scfg.segments_per_video - 1;
    for (int k = 0; k < 2; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      monotone_ok = monotone_ok && out[ku] >= a[ku];
      if (!deadline) {
        identity_ok = identity_ok && out[ku] == a[ku];
      } else {
        const double req =
            scfg.qos_required_bits(k, t / scfg.frames_per_segment);
        if (planned[ku] + a[ku] * scfg.frame_s < req)
          fill_ok = fill_ok &&
                    out[ku] == (req - planned[ku]) / scfg.frame_s;
        else
          fill_ok = fill_ok && out[ku] == a[ku];
      }
    }
  }
  c.expect(identity_ok, "not the identity off deadline frames");
  c.expect(fill_ok, "deficit not filled exactly at a deadline");
  c.expect(monotone_ok, "a component was decreased");

  // 1000 randomized episodes: after every deadline frame the planned ledger
  // meets the requirement for every user.
  sim::Env env(scfg);
  const double ceiling = env.rate_ceiling();
  bool ledger_ok = true;
  for (int e = 0; e < 1000 && ledger_ok; ++e) {
    env.reset(rngu::mix(4242, static_cast<std::uint64_t>(e), 0xE0));
    while (!env.done()) {
      const int t = env.frame_index();
      std::vector<double> a(2), planned(2);
      // Skewed low so deadline deficits actually bind.
      for (auto& v : a) v = rng.uniform(0.0, 0.25 * ceiling);
      for (int k = 0; k < 2; ++k)
        planned[static_cast<std::size_t>(k)] =
            env.progress(k).planned_delivered;
      const auto safe = ddpg::safe_layer(a, planned, scfg, t);
      env.step(safe);
      if (t % scfg.frames_per_segment == 0 &&
          t / scfg.frames_per_segment <= scfg.segments_per_video - 1) {
        const double req =
            scfg.qos_required_bits(0, t / scfg.frames_per_segment);
        for (int k = 0; k < 2; ++k)
          ledger_ok = ledger_ok &&
                      env.progress(k).planned_delivered >= req * (1.0 - 1e-12);
      }
    }
  }
  c.expect(ledger_ok, "planned ledger missed a QoS requirement");
}

struct ArchResult {
  std::vector<double> final100;  // per seed
  std::vector<double> mid100;
  double penalty_sum = 0.0;
  double energy_sum = 0.0;
};

ArchResult train_arch(const cfg::RunConfig& base, const std::string& arch,
                      const std::vector<std::uint64_t>& seeds) {
  auto rc = base;
  cfg::apply_override(rc, "nn.arch=" + arch);
  rc.finalize();
  ArchResult out;
  for (const auto seed : seeds) {
    const auto records = harness::run_training(rc, seed);
    auto mean_window = [&](std::size_t lo, std::size_t hi) {
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += records[i].episode_return;
      return acc / static_cast<double>(hi - lo);
    };
    const auto n = records.size();
    out.final100.push_back(mean_window(n - 100, n));
    out.mid100.push_back(mean_window(n / 2 - 100, n / 2));
    for (std::size_t i = n - 100; i < n; ++i) {
      out.penalty_sum += records[i].penalty;
      out.energy_sum += records[i].energy_j;
    }
    std::printf("     [train %s seed %llu] mid100 %.2f final100 %.2f\n",
                arch.c_str(), static_cast<unsigned long long>(seed),
                out.mid100.back(), out.final100.back());
    std::fflush(stdout);
  }
  return out;
}

void criterion_6_learning() {
  Criterion c(6, "scaled-down learning beats random; shared nets lead at mid-run");
  const auto rc = desk_config();
  const std::vector<std::uint64_t> seeds = {1, 2, 3};

  double baseline = 0.0;
  for (const auto seed : seeds) {
    const auto recs = harness::run_random_baseline(rc, seed, 100);
    for (const auto& r : recs) baseline += r.episode_return;
  }
  baseline /= 300.0;
  double oracle_energy = 0.0;
  for (std::uint64_t e = 0; e < 10; ++e)
    oracle_energy +=
        oracle::plan_episode(rc.sim, rngu::mix(1, e, 0xE0)).expected_total_j;
  oracle_energy /= 10.0;
  std::printf("     [random baseline] mean return %.2f\n", baseline);
  std::printf("     [oracle reference] mean expected energy %.2f J "
              "(gap to the learned policies reported below)\n",
              oracle_energy);
  std::fflush(stdout);

  const auto shared = train_arch(rc, "pepi", seeds);
  const auto dense = train_arch(rc, "fc", seeds);

  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  const double shared_final = mean(shared.final100);
  const double dense_final = mean(dense.final100);
  c.expect(shared_final > baseline, "pepi final100 " + num(shared_final) +
                                        " does not beat random " + num(baseline));
  c.expect(dense_final > baseline, "fc final100 " + num(dense_final) +
                                       " does not beat random " + num(baseline));

  const double shared_pen = shared.penalty_sum / shared.energy_sum;
  const double dense_pen = dense.penalty_sum / dense.energy_sum;
  c.expect(shared_pen < 0.01,
           "pepi final100 penalty/energy " + num(shared_pen) + " >= 1%");
  c.expect(dense_pen < 0.01,
           "fc final100 penalty/energy " + num(dense_pen) + " >= 1%");

  int wins = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    wins += shared.mid100[i] >= dense.mid100[i];
  c.expect(wins >= 2, "pepi led fc at mid-run on only " + std::to_string(wins) +
                          "/3 seeds");
}

void criterion_7_oracle() {
  Criterion c(7, "oracle dominance and grid-search agreement");
  auto rc = desk_config();
  auto scfg = rc.sim;
  scfg.num_users = 1;
  bool dominated = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto gains = sim::Env::serving_gain_trajectory(scfg, seed);
    std::span<const double> row(gains[0], gains.cols);
    const auto best = oracle::per_user_plan(row, scfg, 0, 0.0);
    const auto equal = oracle::equal_rate_plan(row, scfg, 0);
    const auto jit = oracle::just_in_time_plan(row, scfg, 0);
    if (best.expected_total_j > equal.expected_total_j * (1 + 1e-6) ||
        best.expected_total_j > jit.expected_total_j * (1 + 1e-6)) {
      dominated = false;
      detail = "seed " + std::to_string(seed) + ": oracle " +
               num(best.expected_total_j) + " J, equal-rate " +
               num(equal.expected_total_j) + " J, just-in-time " +
               num(jit.expected_total_j) + " J";
    }
  }
  c.expect(dominated, detail);

  // Two frames, one deadline, strong-then-weak channel vs a 200x200 grid.
  auto tiny = scfg;
  tiny.segments_per_video = 2;
  tiny.frames_per_segment = 2;
  const std::vector<double> gains = {3e-12, 1e-13};
  const auto plan = oracle::per_user_plan(gains, tiny, 0, 0.0);
  const double need = tiny.segment_bits_for(0) / tiny.frame_s;
  auto energy_at = [&](double r, double alpha) {
    if (r <= 0.0) return 0.0;
    const wf::Channel ch{alpha, tiny.noise_power_w, tiny.bandwidth_hz};
    return tiny.frame_s * wf::water_level_for_rate(ch, r).expected_power;
  };
  double grid_best = 1e300;
  for (int i = 0; i <= 200; ++i) {
    const double r1 = need * i / 200.0;
    grid_best = std::min(grid_best,
                         energy_at(r1, gains[0]) + energy_at(need - r1, gains[1]));
  }
  const double rel =
      std::fabs(plan.expected_total_j - grid_best) / grid_best;
  c.expect(plan.rates_bps[0] > plan.rates_bps[1],
           "plan does not front-load the strong frame");
  c.expect(rel <= 0.01, "plan energy " + num(plan.expected_total_j) +
                            " vs grid " + num(grid_best) + " (rel " +
                            num(rel) + ")");
}

void criterion_8_determinism() {
  Criterion c(8, "identical manifests give byte-identical CSVs");
  const fs::path dir = "acceptance_tmp";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "sim.users = 2\nsim.bs = 3\nsim.segments = 2\n"
           "sim.frames_per_segment = 4\nsim.slots_per_frame = 8\n"
           "sim.spawn_max_m = 100\nagent.batch = 16\n"
           "agent.replay_capacity = 128\nnn.width = 8\nnn.hidden_layers = 1\n"
           "train.episodes = 8\ntrain.smooth_window = 4\n";
  }
  auto run = [&](const std::string& sub, const std::string& out) {
    const std::string cmd = std::string(EQUIPOW_CLI_PATH) + " " + sub +
                            " --config " + (dir / "run.cfg").string() +
                            " --seeds 1,2 --out " + (dir / out).string() +
                            " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  for (const std::string sub : {"train", "oracle"}) {
    const bool ok1 = run(sub, sub + "_a");
    const bool ok2 = run(sub, sub + "_b");
    c.expect(ok1 && ok2, sub + " invocation failed");
    if (!(ok1 && ok2)) continue;
    int files = 0;
    bool same = true;
    for (const auto& e : fs::directory_iterator(dir / (sub + "_a"))) {
      ++files;
      if (slurp(e.path()) != slurp(dir / (sub + "_b") / e.path().filename()))
        same = false;
    }
    c.expect(same && files > 0,
             sub + ": outputs differ between identical reruns");
  }
}

}  // namespace

int main() {
  criterion_1_parameter_counts();
  criterion_2_symmetry();
  criterion_3_gradients();
  criterion_4_waterfill();
  criterion_5_safe_layer();
  criterion_6_learning();
  criterion_7_oracle();
  criterion_8_determinism();
  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures;
}
