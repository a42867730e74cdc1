#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "equipow/harness.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    auto comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    seeds.push_back(std::stoull(csv.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

equipow::cfg::RunConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides) {
  auto cfg = path.empty() ? equipow::cfg::RunConfig{}
                          : equipow::cfg::parse_file(path);
  for (const auto& kv : overrides) equipow::cfg::apply_override(cfg, kv);
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive power allocation for mobile video streaming"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seeds_csv = "1";
  std::string outdir = equipow::harness::output_root() + "/runs";

  auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    cmd->add_option("--set", overrides, "override, key=value (repeatable)");
    cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
    if (with_out) cmd->add_option("--out", outdir, "output directory");
  };

  auto* train = app.add_subcommand("train", "train DDPG and emit trace CSVs");
  add_common(train, true);

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  add_common(eval, true);
  std::string checkpoint;
  int eval_episodes = 10;
  eval->add_option("--checkpoint", checkpoint, "agent checkpoint")->required();
  eval->add_option("--episodes", eval_episodes, "episodes per seed");

  auto* count = app.add_subcommand("count-params", "free-parameter report");
  add_common(count, false);

  auto* oracle = app.add_subcommand("oracle", "perfect-prediction baseline");
  add_common(oracle, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_config(config_path, overrides);
    const auto seeds = parse_seeds(seeds_csv);
    if (train->parsed())
      return equipow::harness::cmd_train(cfg, seeds, outdir);
    if (eval->parsed())
      return equipow::harness::cmd_eval(cfg, checkpoint, seeds, eval_episodes,
                                        outdir);
    if (count->parsed())
      return equipow::harness::cmd_count_params(cfg, std::cout);
    if (oracle->parsed())
      return equipow::harness::cmd_oracle(cfg, seeds, outdir);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
