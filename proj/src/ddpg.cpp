#include "equipow/ddpg.hpp"

namespace equipow::ddpg {

std::vector<double> safe_layer(std::span<const double> action_bps,
                               std::span<const double> planned_bits,
                               const sim::SimConfig& cfg, int frame_t) {
  std::vector<double> out(action_bps.begin(), action_bps.end());
  if (frame_t < 1 || frame_t % cfg.frames_per_segment != 0) return out;
  const int l = frame_t / cfg.frames_per_segment;
  if (l > cfg.segments_per_video - 1) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double required = cfg.qos_required_bits(static_cast<int>(k), l);
    const double planned_after = planned_bits[k] + out[k] * cfg.frame_s;
    if (planned_after < required)
      out[k] = (required - planned_bits[k]) / cfg.frame_s;
  }
  return out;
}

}  // namespace equipow::ddpg
