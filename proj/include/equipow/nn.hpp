#pragma once

// Minimal dense network engine with three layer kinds:
//   Dense     - ordinary fully-connected layer.
//   PeShared  - block-shared weight matrix with one sub-matrix U on the n
//               diagonal block positions and one sub-matrix V everywhere else,
//               bias subvector P repeated n times. Permutation-equivariant
//               across blocks by construction.
//   PiOutput  - output weight [A A ... A] with a plain bias; collapses n
//               blocks to a permutation-invariant output.
// Shared weights are never materialized; kernels index the virtual matrix, so
// densifying a layer reproduces forward/backward arithmetic exactly.

#include <cstdint>
#include <iostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "equipow/kernels.hpp"
#include "equipow/rng.hpp"

namespace equipow::nn {

using kernels::Act;
using kernels::Exec;
using kernels::Mat;

enum class LayerKind : std::uint8_t { Dense = 0, PeShared = 1, PiOutput = 2 };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int blocks = 1;     // n (1 for Dense)
  int in_block = 0;   // per-block input width (Dense: full width)
  int out_block = 0;  // per-block output width (Dense/PiOutput: full width)
  Act act = Act::Identity;

  int in_dim() const {
    return kind == LayerKind::Dense ? in_block : blocks * in_block;
  }
  int out_dim() const {
    return kind == LayerKind::PeShared ? blocks * out_block : out_block;
  }
  std::int64_t weight_params() const {
    const auto sub = static_cast<std::int64_t>(out_block) * in_block;
    switch (kind) {
      case LayerKind::Dense: return sub;
      case LayerKind::PeShared: return 2 * sub;  // U and V
      case LayerKind::PiOutput: return sub;      // A
    }
    return 0;
  }
  std::int64_t bias_params() const { return out_block; }
  bool operator==(const LayerSpec&) const = default;
  std::string describe() const;
};

// Distinct trainable scalars over a network's layer specs.
std::int64_t count_free_params(std::span<const LayerSpec> specs,
                               bool include_biases);

// Architecture builders. `hidden_layers` counts the square d x d weight
// matrices; the input and output maps are separate, so the stack is
// input -> d -> (d x hidden_layers) -> output. Shared variants need K | d.
std::vector<LayerSpec> actor_specs(bool shared, int num_users, int state_cols,
                                   int width, int hidden_layers);
std::vector<LayerSpec> critic_specs(bool shared, int num_users, int state_cols,
                                    int width, int hidden_layers);

template <typename S>
struct Layer {
  LayerSpec spec;
  // Free blocks in declaration order: Dense [W, b]; PeShared [U, V, P];
  // PiOutput [A, b].
  Mat<S> w0;           // W / U / A
  Mat<S> w1;           // V (PeShared only, empty otherwise)
  std::vector<S> bias; // b / P

  Mat<S> g0, g1;
  std::vector<S> gbias;

  // Forward caches.
  Mat<S> in, preact, out;

  std::int64_t free_count() const {
    return spec.weight_params() + spec.bias_params();
  }
};

template <typename S>
class Network {
 public:
  Network() = default;

  Network(std::vector<LayerSpec> specs, std::uint64_t seed) {
    if (specs.empty()) throw std::invalid_argument("network: no layers");
    rngu::Stream rng(seed);
    layers_.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& sp = specs[i];
      if (i > 0 && sp.in_dim() != specs[i - 1].out_dim())
        throw std::invalid_argument("network: layer width mismatch");
      Layer<S> layer;
      layer.spec = sp;
      const auto ob = static_cast<std::size_t>(sp.out_block);
      const auto ib = static_cast<std::size_t>(sp.in_block);
      layer.w0 = Mat<S>(ob, ib);
      if (sp.kind == LayerKind::PeShared) layer.w1 = Mat<S>(ob, ib);
      layer.bias.assign(ob, S(0));
      const double bound = 1.0 / std::sqrt(static_cast<double>(sp.in_dim()));
      for (auto& w : layer.w0.data) w = static_cast<S>(rng.uniform(-bound, bound));
      for (auto& w : layer.w1.data) w = static_cast<S>(rng.uniform(-bound, bound));
      for (auto& b : layer.bias) b = static_cast<S>(rng.uniform(-bound, bound));
      layers_.push_back(std::move(layer));
    }
    reset_adam();
  }

  int in_dim() const { return layers_.front().spec.in_dim(); }
  int out_dim() const { return layers_.back().spec.out_dim(); }

  const Mat<S>& forward(const Mat<S>& x) {
    if (x.cols != static_cast<std::size_t>(in_dim()))
      throw std::invalid_argument("forward: input width " + std::to_string(x.cols) +
                                  " != " + std::to_string(in_dim()));
    const Mat<S>* cur = &x;
    for (auto& layer : layers_) {
      layer.in = *cur;
      dispatch_forward(layer);
      kernels::act_forward(layer.out, layer.preact, layer.spec.act, exec_);
      cur = &layer.out;
    }
    has_forward_ = true;
    return layers_.back().out;
  }

  // Upstream gradient w.r.t. the network output; fills per-layer free-block
  // gradients (tied positions summed) and returns the input gradient.
  Mat<S> backward(const Mat<S>& grad_out) {
    if (!has_forward_) throw std::logic_error("backward: no cached forward");
    Mat<S> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      auto& layer = *it;
      Mat<S> dz;
      kernels::act_backward(dz, g, layer.preact, layer.out, layer.spec.act, exec_);
      dispatch_grads(layer, dz);
      dispatch_backward_input(layer, dz, g);
    }
    return g;
  }

  // One Adam step over every free scalar; L2 decay is added to the weight
  // gradients only (never biases). `ascend` flips the step direction.
  void adam_step(S lr, S l2_weight_decay, bool ascend = false) {
    ++adam_t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    const double sign = ascend ? -1.0 : 1.0;
    std::size_t idx = 0;
    for (auto& layer : layers_) {
      auto update = [&](S& param, S grad, bool is_weight) {
        double g = static_cast<double>(grad);
        if (is_weight) g += static_cast<double>(l2_weight_decay) * param;
        g *= sign;
        double& m = adam_m_[idx];
        double& v = adam_v_[idx];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        param -= static_cast<S>(lr * (m / c1) / (std::sqrt(v / c2) + eps));
        ++idx;
      };
      for (std::size_t i = 0; i < layer.w0.size(); ++i)
        update(layer.w0.data[i], layer.g0.data[i], true);
      for (std::size_t i = 0; i < layer.w1.size(); ++i)
        update(layer.w1.data[i], layer.g1.data[i], true);
      for (std::size_t i = 0; i < layer.bias.size(); ++i)
        update(layer.bias[i], layer.gbias[i], false);
    }
  }

  void copy_params_from(const Network& other) {
    check_same_shape(other);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].w0.data = other.layers_[l].w0.data;
      layers_[l].w1.data = other.layers_[l].w1.data;
      layers_[l].bias = other.layers_[l].bias;
    }
  }

  // theta' <- omega * theta + (1 - omega) * theta'
  void soft_update_from(const Network& main, S omega) {
    check_same_shape(main);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto blend = [omega](std::vector<S>& t, const std::vector<S>& m) {
        for (std::size_t i = 0; i < t.size(); ++i)
          t[i] = omega * m[i] + (S(1) - omega) * t[i];
      };
      blend(layers_[l].w0.data, main.layers_[l].w0.data);
      blend(layers_[l].w1.data, main.layers_[l].w1.data);
      blend(layers_[l].bias, main.layers_[l].bias);
    }
  }

  std::int64_t weight_param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_) n += l.spec.weight_params();
    return n;
  }
  std::int64_t bias_param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_) n += l.spec.bias_params();
    return n;
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }
  std::string signature() const;

  std::vector<Layer<S>>& layers() { return layers_; }
  const std::vector<Layer<S>>& layers() const { return layers_; }

  // Visits every free parameter in declaration order: f(value&, grad).
  template <typename F>
  void visit(F&& f) {
    for (auto& layer : layers_) {
      for (std::size_t i = 0; i < layer.w0.size(); ++i)
        f(layer.w0.data[i], layer.g0.data.empty() ? S(0) : layer.g0.data[i]);
      for (std::size_t i = 0; i < layer.w1.size(); ++i)
        f(layer.w1.data[i], layer.g1.data.empty() ? S(0) : layer.g1.data[i]);
      for (std::size_t i = 0; i < layer.bias.size(); ++i)
        f(layer.bias[i], layer.gbias.empty() ? S(0) : layer.gbias[i]);
    }
  }

  std::uint64_t adam_t() const { return adam_t_; }
  void set_exec(Exec e) { exec_ = e; }

  void save(std::ostream& os) const;
  static Network load(std::istream& is);

 private:
  void reset_adam() {
    std::int64_t n = 0;
    for (const auto& l : layers_) n += l.free_count();
    adam_m_.assign(static_cast<std::size_t>(n), 0.0);
    adam_v_.assign(static_cast<std::size_t>(n), 0.0);
    adam_t_ = 0;
  }

  void check_same_shape(const Network& other) const {
    if (layers_.size() != other.layers_.size())
      throw std::invalid_argument("network: shape mismatch");
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (!(layers_[l].spec == other.layers_[l].spec))
        throw std::invalid_argument("network: shape mismatch");
  }

  void dispatch_forward(Layer<S>& layer) {
    const auto& sp = layer.spec;
    const auto out_dim = static_cast<std::size_t>(sp.out_dim());
    const auto ib = static_cast<std::size_t>(sp.in_block);
    const auto ob = static_cast<std::size_t>(sp.out_block);
    const S* w0 = layer.w0.data.data();
    const S* w1 = layer.w1.data.data();
    const S* b = layer.bias.data();
    switch (sp.kind) {
      case LayerKind::Dense:
        kernels::affine_forward(
            layer.preact, layer.in, out_dim,
            [w0, ib](std::size_t r, std::size_t c) { return w0[r * ib + c]; },
            [b](std::size_t r) { return b[r]; }, exec_);
        break;
      case LayerKind::PeShared:
        kernels::pe_affine_forward(layer.preact, layer.in, layer.w0, layer.w1,
                                   layer.bias,
                                   static_cast<std::size_t>(sp.blocks), exec_);
        break;
      case LayerKind::PiOutput:
        kernels::pi_affine_forward(layer.preact, layer.in, layer.w0, layer.bias,
                                   static_cast<std::size_t>(sp.blocks), exec_);
        break;
    }
  }

  void dispatch_grads(Layer<S>& layer, const Mat<S>& dz) {
    const auto& sp = layer.spec;
    const auto n = static_cast<std::size_t>(sp.blocks);
    const auto ib = static_cast<std::size_t>(sp.in_block);
    const auto ob = static_cast<std::size_t>(sp.out_block);
    switch (sp.kind) {
      case LayerKind::Dense:
        kernels::grad_weights_dense(layer.g0, dz, layer.in, exec_);
        kernels::grad_bias_dense(layer.gbias, dz);
        break;
      case LayerKind::PeShared:
        kernels::grad_weights_pe(layer.g0, layer.g1, dz, layer.in, n, ob, ib,
                                 exec_);
        kernels::grad_bias_tied(layer.gbias, dz, n, ob);
        break;
      case LayerKind::PiOutput:
        kernels::grad_weights_pi(layer.g0, dz, layer.in, n, ib, exec_);
        kernels::grad_bias_dense(layer.gbias, dz);
        break;
    }
  }

  void dispatch_backward_input(Layer<S>& layer, const Mat<S>& dz, Mat<S>& dx) {
    const auto& sp = layer.spec;
    const auto in_dim = static_cast<std::size_t>(sp.in_dim());
    const auto ib = static_cast<std::size_t>(sp.in_block);
    const auto ob = static_cast<std::size_t>(sp.out_block);
    const S* w0 = layer.w0.data.data();
    const S* w1 = layer.w1.data.data();
    switch (sp.kind) {
      case LayerKind::Dense:
        kernels::affine_backward_input(
            dx, dz, in_dim,
            [w0, ib](std::size_t r, std::size_t c) { return w0[r * ib + c]; },
            exec_);
        break;
      case LayerKind::PeShared:
        kernels::pe_affine_backward_input(
            dx, dz, layer.w0, layer.w1, static_cast<std::size_t>(sp.blocks),
            exec_);
        break;
      case LayerKind::PiOutput:
        kernels::pi_affine_backward_input(
            dx, dz, layer.w0, static_cast<std::size_t>(sp.blocks), exec_);
        break;
    }
  }

  std::vector<Layer<S>> layers_;
  std::vector<double> adam_m_, adam_v_;
  std::uint64_t adam_t_ = 0;
  bool has_forward_ = false;
  Exec exec_ = kernels::default_exec();
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return v;
}
template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
void read_vec(std::istream& is, std::vector<T>& v) {
  const auto n = read_pod<std::uint64_t>(is);
  v.resize(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
}

}  // namespace detail

template <typename S>
std::string Network<S>::signature() const {
  std::ostringstream os;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l) os << '|';
    os << layers_[l].spec.describe();
  }
  return os.str();
}

template <typename S>
void Network<S>::save(std::ostream& os) const {
  detail::write_pod<std::uint32_t>(os, 0x45514e4eu);  // "EQNN"
  detail::write_pod<std::uint32_t>(os, 1u);           // format version
  detail::write_pod<std::uint32_t>(os, sizeof(S));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(l.spec.kind));
    detail::write_pod<std::int32_t>(os, l.spec.blocks);
    detail::write_pod<std::int32_t>(os, l.spec.in_block);
    detail::write_pod<std::int32_t>(os, l.spec.out_block);
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(l.spec.act));
  }
  detail::write_pod<std::uint64_t>(os, adam_t_);
  for (const auto& l : layers_) {
    detail::write_vec(os, l.w0.data);
    detail::write_vec(os, l.w1.data);
    detail::write_vec(os, l.bias);
  }
  detail::write_vec(os, adam_m_);
  detail::write_vec(os, adam_v_);
}

template <typename S>
Network<S> Network<S>::load(std::istream& is) {
  if (detail::read_pod<std::uint32_t>(is) != 0x45514e4eu)
    throw std::runtime_error("checkpoint: bad magic");
  if (detail::read_pod<std::uint32_t>(is) != 1u)
    throw std::runtime_error("checkpoint: unsupported version");
  if (detail::read_pod<std::uint32_t>(is) != sizeof(S))
    throw std::runtime_error("checkpoint: scalar width mismatch");
  const auto n_layers = detail::read_pod<std::uint32_t>(is);
  std::vector<LayerSpec> specs(n_layers);
  for (auto& sp : specs) {
    sp.kind = static_cast<LayerKind>(detail::read_pod<std::uint8_t>(is));
    sp.blocks = detail::read_pod<std::int32_t>(is);
    sp.in_block = detail::read_pod<std::int32_t>(is);
    sp.out_block = detail::read_pod<std::int32_t>(is);
    sp.act = static_cast<Act>(detail::read_pod<std::uint8_t>(is));
  }
  Network net(specs, /*seed=*/0);
  net.adam_t_ = detail::read_pod<std::uint64_t>(is);
  for (auto& l : net.layers_) {
    detail::read_vec(is, l.w0.data);
    detail::read_vec(is, l.w1.data);
    detail::read_vec(is, l.bias);
    if (l.w0.size() != static_cast<std::size_t>(l.w0.rows * l.w0.cols))
      throw std::runtime_error("checkpoint: layer payload size mismatch");
  }
  detail::read_vec(is, net.adam_m_);
  detail::read_vec(is, net.adam_v_);
  return net;
}

}  // namespace equipow::nn
