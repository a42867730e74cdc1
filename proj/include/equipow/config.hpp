#pragma once

// Flat key=value run configuration with dotted namespaces (sim.*, agent.*,
// nn.*, train.*); '#' starts a comment. CLI overrides arrive as "key=value".

#include <string>
#include <vector>

#include "equipow/ddpg.hpp"
#include "equipow/sim.hpp"

namespace equipow::cfg {

struct NnConfig {
  int width = 600;
  int hidden_layers = 4;      // number of square d x d weight matrices
  std::string arch = "pepi";  // "pepi" or "fc"
};

struct TrainConfig {
  int episodes = 1000;
  int smooth_window = 400;
};

struct RunConfig {
  sim::SimConfig sim;
  ddpg::AgentConfig agent;
  NnConfig nn;
  TrainConfig train;

  // Derives slot duration, mirrors the penalty coefficient into the sim, and
  // validates everything.
  void finalize();
};

RunConfig parse_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key_value);

// Full echo of every key in a fixed order; reruns with the same inputs
// produce identical bytes.
std::string resolved_text(const RunConfig& cfg);

// FNV-1a 64-bit hash of the resolved text, hex encoded; the run id.
std::string config_hash(const RunConfig& cfg);

}  // namespace equipow::cfg
