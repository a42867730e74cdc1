// Times the serial reference path against the OpenMP path on the shapes the
// training loop actually hits (batch x 600-wide layers), and verifies the two
// paths stay bit-identical while it is at it.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "equipow/kernels.hpp"
#include "equipow/nn.hpp"
#include "equipow/rng.hpp"

using namespace equipow;
using kernels::Act;
using kernels::Exec;
using kernels::Mat;

namespace {

double time_ms(const std::function<void()>& fn, int reps = 5) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

Mat<float> random_mat(std::size_t r, std::size_t c, rngu::Stream& rng) {
  Mat<float> m(r, c);
  for (auto& v : m.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

void row(const char* name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-28s %10.3f ms %10.3f ms   x%-6.2f %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, equal ? "bit-equal" : "DIFFER");
}

}  // namespace

int main() {
  rngu::Stream rng(1);
  const std::size_t B = 512, d = 600;

  std::printf("%-28s %13s %13s   %-7s %s\n", "kernel", "serial", "openmp",
              "speedup", "check");

  {
    const auto x = random_mat(B, d, rng);
    const auto w = random_mat(d, d, rng);
    std::vector<float> b(d, 0.1f);
    auto wacc = [&](std::size_t r, std::size_t c) { return w[r][c]; };
    auto bacc = [&](std::size_t r) { return b[r]; };
    Mat<float> ys, yp;
    const double ts = time_ms([&] {
      kernels::affine_forward(ys, x, d, wacc, bacc, Exec::Serial);
    });
    const double tp = time_ms([&] {
      kernels::affine_forward(yp, x, d, wacc, bacc, Exec::Parallel);
    });
    row("affine_forward 512x600x600", ts, tp, ys.data == yp.data);
  }
  {
    const auto g = random_mat(B, d, rng);
    const auto x = random_mat(B, d, rng);
    Mat<float> ds, dp;
    const double ts =
        time_ms([&] { kernels::grad_weights_dense(ds, g, x, Exec::Serial); });
    const double tp =
        time_ms([&] { kernels::grad_weights_dense(dp, g, x, Exec::Parallel); });
    row("grad_weights_dense 600x600", ts, tp, ds.data == dp.data);
  }
  {
    // Shared layer at K = 10: 60-wide blocks.
    const std::size_t n = 10, bw = d / n;
    const auto g = random_mat(B, d, rng);
    const auto x = random_mat(B, d, rng);
    Mat<float> us, vs, up, vp;
    const double ts = time_ms(
        [&] { kernels::grad_weights_pe(us, vs, g, x, n, bw, bw, Exec::Serial); });
    const double tp = time_ms([&] {
      kernels::grad_weights_pe(up, vp, g, x, n, bw, bw, Exec::Parallel);
    });
    row("grad_weights_pe K=10", ts, tp,
        us.data == up.data && vs.data == vp.data);
  }
  {
    const auto z = random_mat(B, d, rng);
    Mat<float> ys, yp;
    const double ts =
        time_ms([&] { kernels::act_forward(ys, z, Act::Relu, Exec::Serial); });
    const double tp =
        time_ms([&] { kernels::act_forward(yp, z, Act::Relu, Exec::Parallel); });
    row("relu 512x600", ts, tp, ys.data == yp.data);
  }

  // Whole-network forward+backward at the full-scale critic shape, both
  // architectures.
  for (const bool shared : {false, true}) {
    nn::Network<float> net(nn::critic_specs(shared, 10, 10, 600, 4), 7);
    const auto x = random_mat(B, static_cast<std::size_t>(net.in_dim()), rng);
    Mat<float> g(B, 1);
    g.fill(1.0f / B);
    auto pass = [&](Exec e) {
      net.set_exec(e);
      net.forward(x);
      return net.backward(g);
    };
    const double ts = time_ms([&] { pass(Exec::Serial); }, 3);
    Mat<float> dx_s = pass(Exec::Serial);
    const double tp = time_ms([&] { pass(Exec::Parallel); }, 3);
    Mat<float> dx_p = pass(Exec::Parallel);
    row(shared ? "critic fwd+bwd (shared)" : "critic fwd+bwd (dense)", ts, tp,
        dx_s.data == dx_p.data);
  }

#ifdef _OPENMP
  std::printf("\nOpenMP enabled; thread count follows OMP_NUM_THREADS.\n");
#else
  std::printf("\nBuilt without OpenMP; both columns run the serial path.\n");
#endif
  return 0;
}
