#include "seil/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seil::par {

namespace {
int g_max_threads = 0; // 0 = hardware default
}

void set_max_threads(int n) { g_max_threads = n < 0 ? 0 : n; }

int max_threads() {
#ifdef _OPENMP
    if (g_max_threads > 0) return g_max_threads;
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace detail {

void run_parallel(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t)) {
#ifdef _OPENMP
    const int threads = max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) body(ctx, i);
#else
    for (std::int64_t i = 0; i < n; ++i) body(ctx, i);
#endif
}

} // namespace detail

} // namespace seil::par
