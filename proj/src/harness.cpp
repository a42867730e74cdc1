#include "equipow/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace equipow::harness {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string output_root() {
  const char* env = std::getenv("EQUIPOW_OUT");
  return env && *env ? env : ".";
}

TrainAgent make_agent(const cfg::RunConfig& cfg, double rate_ceiling,
                      std::uint64_t seed) {
  return TrainAgent(cfg.sim, cfg.agent, cfg.nn.arch == "pepi", cfg.nn.width,
                    cfg.nn.hidden_layers, rate_ceiling, seed);
}

TrainOutput run_training_full(const cfg::RunConfig& cfg, std::uint64_t seed) {
  sim::Env env(cfg.sim);
  auto agent_cfg = cfg;
  if (agent_cfg.agent.noise_decay_episodes == 0)
    agent_cfg.agent.noise_decay_episodes = cfg.train.episodes;
  auto agent = make_agent(agent_cfg, env.rate_ceiling(), rngu::mix(seed, 0, 0xA0));
  auto records = ddpg::train(env, agent, cfg.train.episodes, seed);
  return {std::move(records), std::move(agent)};
}

std::vector<ddpg::EpisodeRecord> run_training(const cfg::RunConfig& cfg,
                                              std::uint64_t seed) {
  return run_training_full(cfg, seed).records;
}

namespace {

template <typename ActFn>
ddpg::EpisodeRecord run_policy_episode(sim::Env& env, const sim::SimConfig& scfg,
                                       std::uint64_t episode_seed, ActFn&& act) {
  auto state = env.reset(episode_seed);
  ddpg::EpisodeRecord rec;
  while (!env.done()) {
    auto action = act(state);
    std::vector<double> planned(static_cast<std::size_t>(scfg.num_users));
    for (int k = 0; k < scfg.num_users; ++k)
      planned[static_cast<std::size_t>(k)] = env.progress(k).planned_delivered;
    action = ddpg::safe_layer(action, planned, scfg, env.frame_index());
    const auto out = env.step(action);
    rec.episode_return += out.reward;
    for (double e : out.per_user_energy_j) rec.energy_j += e;
    rec.penalty += out.penalty_term;
    ++rec.frames;
    state = out.next_state;
  }
  rec.stalls = env.stall_count();
  return rec;
}

}  // namespace

std::vector<ddpg::EpisodeRecord> run_greedy(sim::Env& env, TrainAgent& agent,
                                            int episodes, std::uint64_t seed) {
  std::vector<ddpg::EpisodeRecord> out;
  for (int e = 0; e < episodes; ++e) {
    auto rec = run_policy_episode(
        env, env.config(), rngu::mix(seed, static_cast<std::uint64_t>(e), 0xE0),
        [&](const nn::Mat<double>& s) { return agent.act(s, false, 0.0); });
    rec.episode = e;
    out.push_back(rec);
  }
  return out;
}

std::vector<ddpg::EpisodeRecord> run_random_baseline(const cfg::RunConfig& cfg,
                                                     std::uint64_t seed,
                                                     int episodes) {
  sim::Env env(cfg.sim);
  const double ceiling = env.rate_ceiling();
  rngu::Stream rng(rngu::mix(seed, 0, 0xC0));
  std::vector<ddpg::EpisodeRecord> out;
  for (int e = 0; e < episodes; ++e) {
    auto rec = run_policy_episode(
        env, cfg.sim, rngu::mix(seed, static_cast<std::uint64_t>(e), 0xE0),
        [&](const nn::Mat<double>&) {
          std::vector<double> a(static_cast<std::size_t>(cfg.sim.num_users));
          for (auto& v : a) v = rng.uniform(0.0, ceiling);
          return a;
        });
    rec.episode = e;
    out.push_back(rec);
  }
  return out;
}

namespace {

std::vector<double> smoothed_returns(const std::vector<ddpg::EpisodeRecord>& r,
                                     int window) {
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const std::size_t lo =
        i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += r[j].episode_return;
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

}  // namespace

void write_trace_csv(const std::string& path, const std::string& run_id,
                     std::uint64_t seed,
                     const std::vector<ddpg::EpisodeRecord>& records,
                     int smooth_window) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << kTraceHeader << ",return_smooth\n";
  const auto smooth = smoothed_returns(records, smooth_window);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << run_id << ',' << seed << ',' << r.episode << ','
       << format_double(r.episode_return) << ',' << format_double(r.energy_j)
       << ',' << format_double(r.penalty) << ',' << r.stalls << ','
       << format_double(r.noise_std) << ',' << format_double(smooth[i]) << '\n';
  }
}

void write_aggregate_csv(const std::string& path, const std::string& run_id,
                         const std::vector<std::vector<ddpg::EpisodeRecord>>& runs,
                         int smooth_window) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "run_id,episode,mean_return,mean_return_smooth,mean_energy_J,"
        "mean_penalty\n";
  if (runs.empty()) return;
  std::size_t episodes = 0;
  for (const auto& r : runs) episodes = std::max(episodes, r.size());
  std::vector<std::vector<double>> smooth;
  for (const auto& r : runs) smooth.push_back(smoothed_returns(r, smooth_window));
  for (std::size_t e = 0; e < episodes; ++e) {
    double ret = 0, sm = 0, energy = 0, pen = 0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < runs.size(); ++s) {
      if (e >= runs[s].size()) continue;
      ret += runs[s][e].episode_return;
      sm += smooth[s][e];
      energy += runs[s][e].energy_j;
      pen += runs[s][e].penalty;
      ++n;
    }
    const double dn = static_cast<double>(n);
    os << run_id << ',' << e << ',' << format_double(ret / dn) << ','
       << format_double(sm / dn) << ',' << format_double(energy / dn) << ','
       << format_double(pen / dn) << '\n';
  }
}

namespace {

constexpr std::uint32_t kAgentMagic = 0x45515057u;  // "EQPW"

void write_string(std::ostream& os, const std::string& s) {
  nn::detail::write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = nn::detail::read_pod<std::uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return s;
}

}  // namespace

void save_agent(const std::string& path, TrainAgent& agent,
                const cfg::RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  nn::detail::write_pod(os, kAgentMagic);
  nn::detail::write_pod<std::uint32_t>(os, 1u);
  write_string(os, cfg.nn.arch);
  nn::detail::write_pod<std::int32_t>(os, agent.num_users());
  nn::detail::write_pod<std::int32_t>(os, agent.state_cols());
  nn::detail::write_pod<std::int32_t>(os, cfg.nn.width);
  nn::detail::write_pod<std::int32_t>(os, cfg.nn.hidden_layers);
  nn::detail::write_pod<double>(os, agent.rate_ceiling());
  agent.actor().save(os);
  agent.critic().save(os);
  agent.actor_target().save(os);
  agent.critic_target().save(os);
  std::ostringstream rng;
  rng << agent.explore_rng().engine();
  write_string(os, rng.str());
  write_string(os, cfg::config_hash(cfg));
}

TrainAgent load_agent(const std::string& path, const cfg::RunConfig& cfg,
                      double rate_ceiling) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  if (nn::detail::read_pod<std::uint32_t>(is) != kAgentMagic)
    throw std::runtime_error("checkpoint: bad magic");
  if (nn::detail::read_pod<std::uint32_t>(is) != 1u)
    throw std::runtime_error("checkpoint: unsupported version");
  auto file_cfg = cfg;
  file_cfg.nn.arch = read_string(is);
  nn::detail::read_pod<std::int32_t>(is);  // users (validated via signature)
  nn::detail::read_pod<std::int32_t>(is);  // state cols
  file_cfg.nn.width = nn::detail::read_pod<std::int32_t>(is);
  file_cfg.nn.hidden_layers = nn::detail::read_pod<std::int32_t>(is);
  const double saved_ceiling = nn::detail::read_pod<double>(is);

  auto agent = make_agent(cfg, rate_ceiling > 0 ? rate_ceiling : saved_ceiling,
                          /*seed=*/0);
  auto actor = nn::Network<TrainScalar>::load(is);
  auto critic = nn::Network<TrainScalar>::load(is);
  auto actor_t = nn::Network<TrainScalar>::load(is);
  auto critic_t = nn::Network<TrainScalar>::load(is);
  if (actor.signature() != agent.actor().signature() ||
      critic.signature() != agent.critic().signature())
    throw std::runtime_error(
        "checkpoint incompatible with config:\n  checkpoint actor: " +
        actor.signature() + "\n  config actor:     " +
        agent.actor().signature() + "\n  checkpoint critic: " +
        critic.signature() + "\n  config critic:     " +
        agent.critic().signature());
  agent.actor() = std::move(actor);
  agent.critic() = std::move(critic);
  agent.actor_target() = std::move(actor_t);
  agent.critic_target() = std::move(critic_t);
  std::istringstream rng(read_string(is));
  rng >> agent.explore_rng().engine();
  return agent;
}

namespace {

void write_manifest(const std::string& outdir, const cfg::RunConfig& cfg,
                    const std::vector<std::uint64_t>& seeds,
                    const std::vector<std::string>& files) {
  nlohmann::ordered_json m;
  m["version"] = kVersionTag;
  m["config_hash"] = cfg::config_hash(cfg);
  m["seeds"] = seeds;
  // Basenames only, so a rerun into another directory is byte-identical.
  std::vector<std::string> names;
  for (const auto& f : files)
    names.push_back(fs::path(f).filename().string());
  m["files"] = names;
  std::ofstream os(outdir + "/manifest.json", std::ios::binary);
  os << m.dump(2) << '\n';
  std::ofstream rc(outdir + "/resolved.cfg", std::ios::binary);
  rc << cfg::resolved_text(cfg);
}

struct Summary {
  double ret = 0, energy = 0, penalty = 0;
  double stalls = 0;
};

Summary summarize(const std::vector<ddpg::EpisodeRecord>& recs) {
  Summary s;
  if (recs.empty()) return s;
  for (const auto& r : recs) {
    s.ret += r.episode_return;
    s.energy += r.energy_j;
    s.penalty += r.penalty;
    s.stalls += r.stalls;
  }
  const double n = static_cast<double>(recs.size());
  s.ret /= n;
  s.energy /= n;
  s.penalty /= n;
  s.stalls /= n;
  return s;
}

}  // namespace

int cmd_train(const cfg::RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
              const std::string& outdir) {
  fs::create_directories(outdir);
  const std::string run_id = cfg::config_hash(cfg);
  std::vector<std::vector<ddpg::EpisodeRecord>> runs;
  std::vector<std::string> files;
  for (const auto seed : seeds) {
    auto result = run_training_full(cfg, seed);
    const std::string trace =
        outdir + "/train_" + cfg.nn.arch + "_seed" + std::to_string(seed) + ".csv";
    write_trace_csv(trace, run_id, seed, result.records, cfg.train.smooth_window);
    files.push_back(trace);
    const std::string ckpt =
        outdir + "/ckpt_" + cfg.nn.arch + "_seed" + std::to_string(seed) + ".bin";
    save_agent(ckpt, result.agent, cfg);
    files.push_back(ckpt);
    runs.push_back(std::move(result.records));
  }
  const std::string agg = outdir + "/train_" + cfg.nn.arch + "_aggregate.csv";
  write_aggregate_csv(agg, run_id, runs, cfg.train.smooth_window);
  files.push_back(agg);
  write_manifest(outdir, cfg, seeds, files);
  return 0;
}

int cmd_eval(const cfg::RunConfig& cfg, const std::string& checkpoint,
             const std::vector<std::uint64_t>& seeds, int episodes,
             const std::string& outdir) {
  fs::create_directories(outdir);
  const std::string run_id = cfg::config_hash(cfg);
  sim::Env env(cfg.sim);
  auto agent = load_agent(checkpoint, cfg, env.rate_ceiling());
  std::vector<std::string> files;
  for (const auto seed : seeds) {
    auto policy = run_greedy(env, agent, episodes, seed);
    auto random = run_random_baseline(cfg, seed, episodes);
    const std::string ppath =
        outdir + "/eval_seed" + std::to_string(seed) + ".csv";
    const std::string rpath =
        outdir + "/eval_random_seed" + std::to_string(seed) + ".csv";
    write_trace_csv(ppath, run_id, seed, policy, 1);
    write_trace_csv(rpath, run_id + "-random", seed, random, 1);
    files.push_back(ppath);
    files.push_back(rpath);
    const auto ps = summarize(policy);
    const auto rs = summarize(random);
    std::cout << "seed " << seed << ": policy return " << ps.ret << " energy "
              << ps.energy << " J penalty " << ps.penalty << " stalls "
              << ps.stalls << " | random return " << rs.ret << " energy "
              << rs.energy << " J\n";
  }
  write_manifest(outdir, cfg, seeds, files);
  return 0;
}

int cmd_count_params(const cfg::RunConfig& cfg, std::ostream& os) {
  std::vector<int> ks = {cfg.sim.num_users, 2, 5, 10};
  std::vector<int> unique;
  for (int k : ks)
    if (std::find(unique.begin(), unique.end(), k) == unique.end())
      unique.push_back(k);

  os << "free parameters (actor + critic), d=" << cfg.nn.width << ", hidden="
     << cfg.nn.hidden_layers << ", state_cols=" << cfg.sim.state_cols() << "\n";
  os << std::setw(4) << "K" << std::setw(14) << "fc_w" << std::setw(14)
     << "fc_w2x" << std::setw(14) << "fc_wb2x" << std::setw(14) << "pepi_w"
     << std::setw(14) << "pepi_w2x" << std::setw(14) << "pepi_wb2x"
     << std::setw(12) << "ratio2x" << std::setw(12) << "2/K^2" << "\n";
  for (int K : unique) {
    const auto a_fc = nn::actor_specs(false, K, cfg.sim.state_cols(),
                                      cfg.nn.width, cfg.nn.hidden_layers);
    const auto c_fc = nn::critic_specs(false, K, cfg.sim.state_cols(),
                                       cfg.nn.width, cfg.nn.hidden_layers);
    const auto a_sh = nn::actor_specs(true, K, cfg.sim.state_cols(),
                                      cfg.nn.width, cfg.nn.hidden_layers);
    const auto c_sh = nn::critic_specs(true, K, cfg.sim.state_cols(),
                                       cfg.nn.width, cfg.nn.hidden_layers);
    const auto w = [](const auto& a, const auto& c) {
      return nn::count_free_params(a, false) + nn::count_free_params(c, false);
    };
    const auto wb = [](const auto& a, const auto& c) {
      return nn::count_free_params(a, true) + nn::count_free_params(c, true);
    };
    const auto fc_w = w(a_fc, c_fc), sh_w = w(a_sh, c_sh);
    const auto fc_wb = wb(a_fc, c_fc), sh_wb = wb(a_sh, c_sh);
    char ratio[32], ideal[32];
    std::snprintf(ratio, sizeof ratio, "%.6f",
                  static_cast<double>(sh_w) / static_cast<double>(fc_w));
    std::snprintf(ideal, sizeof ideal, "%.6f", 2.0 / (static_cast<double>(K) * K));
    os << std::setw(4) << K << std::setw(14) << fc_w << std::setw(14) << 2 * fc_w
       << std::setw(14) << 2 * fc_wb << std::setw(14) << sh_w << std::setw(14)
       << 2 * sh_w << std::setw(14) << 2 * sh_wb << std::setw(12) << ratio
       << std::setw(12) << ideal << "\n";
  }
  return 0;
}

int cmd_oracle(const cfg::RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
               const std::string& outdir) {
  fs::create_directories(outdir);
  const std::string run_id = cfg::config_hash(cfg);
  std::vector<std::string> files;
  const std::string spath = outdir + "/oracle_summary.csv";
  std::ofstream summary(spath, std::ios::binary);
  summary << "run_id,seed,expected_total_J,realized_total_J,penalty,"
             "qos_feasible,power_ok,kkt_residual\n";
  for (const auto seed : seeds) {
    const auto plan = oracle::plan_episode(cfg.sim, seed);
    const auto ev = oracle::evaluate_plan(plan, cfg.sim, seed);
    const std::string ppath =
        outdir + "/oracle_plan_seed" + std::to_string(seed) + ".csv";
    std::ofstream os(ppath, std::ios::binary);
    os << "user,frame,rate_bps,expected_energy_J\n";
    for (std::size_t k = 0; k < plan.rates.rows; ++k)
      for (std::size_t t = 0; t < plan.rates.cols; ++t)
        os << k << ',' << t + 1 << ',' << format_double(plan.rates[k][t]) << ','
           << format_double(plan.users[k].expected_energy_j[t]) << '\n';
    files.push_back(ppath);

    bool qos = true, power = true;
    double kkt = 0.0;
    for (const auto& u : plan.users) {
      qos = qos && u.qos_feasible;
      power = power && u.power_ok;
      kkt = std::max(kkt, u.kkt_residual);
    }
    summary << run_id << ',' << seed << ','
            << format_double(plan.expected_total_j) << ','
            << format_double(ev.realized_energy_j) << ','
            << format_double(ev.penalty) << ',' << (qos ? 1 : 0) << ','
            << (power ? 1 : 0) << ',' << format_double(kkt) << '\n';
  }
  summary.close();
  files.push_back(spath);
  write_manifest(outdir, cfg, seeds, files);
  return 0;
}

}  // namespace equipow::harness
