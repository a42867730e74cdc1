#include "equipow/nn.hpp"

namespace equipow::nn {

namespace {
const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::PeShared: return "pe";
    case LayerKind::PiOutput: return "pi";
  }
  return "?";
}
const char* act_name(Act a) {
  switch (a) {
    case Act::Relu: return "relu";
    case Act::ScaledTanh: return "stanh";
    case Act::Identity: return "id";
  }
  return "?";
}
}  // namespace

std::string LayerSpec::describe() const {
  std::ostringstream os;
  os << kind_name(kind) << "(n=" << blocks << "," << in_block << "x"
     << out_block << "," << act_name(act) << ")";
  return os.str();
}

std::int64_t count_free_params(std::span<const LayerSpec> specs,
                               bool include_biases) {
  std::int64_t n = 0;
  for (const auto& sp : specs) {
    n += sp.weight_params();
    if (include_biases) n += sp.bias_params();
  }
  return n;
}

namespace {
void require_divisible(int width, int num_users) {
  if (width % num_users != 0)
    throw std::invalid_argument(
        "shared layers need the hidden width to be divisible by the number of "
        "users (width " + std::to_string(width) + ", users " +
        std::to_string(num_users) + "): each of the n x n block positions "
        "must hold a sub-matrix of identical shape");
}

std::vector<LayerSpec> stack(bool shared, int num_users, int in_cols,
                             int width, int hidden_layers, int out_per_user,
                             Act out_act, bool invariant_output) {
  std::vector<LayerSpec> specs;
  if (shared) {
    require_divisible(width, num_users);
    const int block = width / num_users;
    specs.push_back({LayerKind::PeShared, num_users, in_cols, block, Act::Relu});
    for (int i = 0; i < hidden_layers; ++i)
      specs.push_back({LayerKind::PeShared, num_users, block, block, Act::Relu});
    if (invariant_output)
      specs.push_back({LayerKind::PiOutput, num_users, block, out_per_user, out_act});
    else
      specs.push_back({LayerKind::PeShared, num_users, block, out_per_user, out_act});
  } else {
    specs.push_back({LayerKind::Dense, 1, num_users * in_cols, width, Act::Relu});
    for (int i = 0; i < hidden_layers; ++i)
      specs.push_back({LayerKind::Dense, 1, width, width, Act::Relu});
    const int out = invariant_output ? out_per_user : num_users * out_per_user;
    specs.push_back({LayerKind::Dense, 1, width, out, out_act});
  }
  return specs;
}
}  // namespace

std::vector<LayerSpec> actor_specs(bool shared, int num_users, int state_cols,
                                   int width, int hidden_layers) {
  return stack(shared, num_users, state_cols, width, hidden_layers,
               /*out_per_user=*/1, Act::ScaledTanh, /*invariant_output=*/false);
}

std::vector<LayerSpec> critic_specs(bool shared, int num_users, int state_cols,
                                    int width, int hidden_layers) {
  // The critic stacks the per-user action onto the state row.
  return stack(shared, num_users, state_cols + 1, width, hidden_layers,
               /*out_per_user=*/1, Act::Identity, /*invariant_output=*/true);
}

}  // namespace equipow::nn
