#include "equipow/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace equipow::kernels {

namespace {
Exec g_default =
#ifdef _OPENMP
    Exec::Parallel;
#else
    Exec::Serial;
#endif

// Below this flop count the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;
}  // namespace

Exec default_exec() { return g_default; }

void set_default_exec(Exec e) { g_default = e; }

bool parallel_enabled(Exec e, std::size_t work) {
#ifdef _OPENMP
  if (e == Exec::Serial) return false;
  return work >= kParallelThreshold && omp_get_max_threads() > 1;
#else
  (void)e;
  (void)work;
  return false;
#endif
}

}  // namespace equipow::kernels
