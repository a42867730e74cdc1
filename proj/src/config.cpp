#include "equipow/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace equipow::cfg {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("bad number '" + v + "'");
  return d;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long d = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
  return d;
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

// One table drives parsing, overrides, and the resolved echo.
const std::map<std::string, Key>& key_table() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> t;
    auto add = [&t](const std::string& name, Setter s, Getter g) {
      t[name] = {std::move(s), std::move(g)};
    };

#define NUM_KEY(name, field)                                                   \
  add(name,                                                                    \
      [](RunConfig& c, const std::string& v) { c.field = to_double(v); },      \
      [](const RunConfig& c) { return fmt(c.field); })
#define INT_KEY(name, field, type)                                             \
  add(name,                                                                    \
      [](RunConfig& c, const std::string& v) {                                 \
        c.field = static_cast<type>(to_int(v));                                \
      },                                                                       \
      [](const RunConfig& c) { return std::to_string(c.field); })

    INT_KEY("sim.users", sim.num_users, int);
    INT_KEY("sim.bs", sim.num_bs, int);
    NUM_KEY("sim.inter_bs_m", sim.inter_bs_m);
    NUM_KEY("sim.road_offset_m", sim.road_offset_m);
    NUM_KEY("sim.bandwidth_hz", sim.bandwidth_hz);
    NUM_KEY("sim.noise_power_w", sim.noise_power_w);
    NUM_KEY("sim.max_bs_power_w", sim.max_bs_power_w);
    NUM_KEY("sim.pathloss_intercept_db", sim.pathloss_intercept_db);
    NUM_KEY("sim.pathloss_exponent_db", sim.pathloss_exponent_db);
    add("sim.segment_bits",
        [](RunConfig& c, const std::string& v) { c.sim.segment_bits = to_list(v); },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.sim.segment_bits.size(); ++i)
            s += (i ? "," : "") + fmt(c.sim.segment_bits[i]);
          return s;
        });
    INT_KEY("sim.segments", sim.segments_per_video, int);
    INT_KEY("sim.frames_per_segment", sim.frames_per_segment, int);
    INT_KEY("sim.slots_per_frame", sim.slots_per_frame, int);
    NUM_KEY("sim.frame_s", sim.frame_s);
    INT_KEY("sim.history", sim.history_depth, int);
    INT_KEY("sim.neighbors", sim.neighbor_bs, int);
    NUM_KEY("sim.amplifier_eff", sim.amplifier_eff);
    NUM_KEY("sim.circuit_power_w", sim.circuit_power_w);
    NUM_KEY("sim.initial_speed_mps", sim.initial_speed_mps);
    NUM_KEY("sim.speed_min_mps", sim.speed_min_mps);
    NUM_KEY("sim.speed_max_mps", sim.speed_max_mps);
    NUM_KEY("sim.accel_std_mps2", sim.accel_std_mps2);
    NUM_KEY("sim.spawn_min_m", sim.spawn_min_m);
    NUM_KEY("sim.spawn_max_m", sim.spawn_max_m);
    INT_KEY("sim.seed", sim.rng_seed, std::uint64_t);

    NUM_KEY("agent.actor_lr", agent.actor_lr);
    NUM_KEY("agent.critic_lr", agent.critic_lr);
    NUM_KEY("agent.soft_update", agent.soft_update);
    NUM_KEY("agent.discount", agent.discount);
    INT_KEY("agent.batch", agent.batch, int);
    NUM_KEY("agent.penalty", agent.penalty);
    NUM_KEY("agent.noise_std0", agent.noise_std0);
    INT_KEY("agent.noise_decay_episodes", agent.noise_decay_episodes, int);
    NUM_KEY("agent.critic_l2", agent.critic_l2);
    INT_KEY("agent.replay_capacity", agent.replay_capacity, std::size_t);

    INT_KEY("nn.width", nn.width, int);
    INT_KEY("nn.hidden_layers", nn.hidden_layers, int);
    add("nn.arch",
        [](RunConfig& c, const std::string& v) {
          if (v != "fc" && v != "pepi")
            throw std::invalid_argument("nn.arch must be 'fc' or 'pepi'");
          c.nn.arch = v;
        },
        [](const RunConfig& c) { return c.nn.arch; });

    INT_KEY("train.episodes", train.episodes, int);
    INT_KEY("train.smooth_window", train.smooth_window, int);

#undef NUM_KEY
#undef INT_KEY
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::finalize() {
  sim.slot_s = sim.frame_s / sim.slots_per_frame;
  sim.penalty_coeff = agent.penalty;
  sim.validate();
  agent.validate();
  if (nn.width < 1 || nn.hidden_layers < 0)
    throw sim::ConfigError("nn: width >= 1 and hidden_layers >= 0 required");
  if (train.episodes < 0 || train.smooth_window < 1)
    throw sim::ConfigError("train: episodes >= 0 and smooth_window >= 1 required");
}

RunConfig parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sim::ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::vector<std::string> bad;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.push_back("line " + std::to_string(lineno) + ": missing '='");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      bad.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second.set(cfg, value);
    } catch (const std::exception& ex) {
      bad.push_back("key '" + key + "': " + ex.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid config keys:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw sim::ConfigError(msg);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos)
    throw sim::ConfigError("override must be key=value: " + key_value);
  const auto key = trim(key_value.substr(0, eq));
  const auto value = trim(key_value.substr(eq + 1));
  const auto it = key_table().find(key);
  if (it == key_table().end())
    throw sim::ConfigError("unknown key '" + key + "'");
  it->second.set(cfg, value);
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, key] : key_table())
    out += name + " = " + key.get(cfg) + "\n";
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = resolved_text(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace equipow::cfg
