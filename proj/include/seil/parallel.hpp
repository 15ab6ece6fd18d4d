#pragma once

#include <cstdint>
#include <type_traits>

// Thread-capped OpenMP loops. Every parallel kernel in the project writes
// disjoint output slots and merges them in a fixed order afterwards, so
// results are byte-identical for any thread count. The serial variants are
// kept as the reference implementation for the equivalence tests and the
// benchmark target.

namespace seil::par {

// Caps the number of OpenMP threads used by parallel loops. 0 = hardware.
void set_max_threads(int n);
int max_threads();

namespace detail {
void run_parallel(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t));
}

// Reference path: fn(0), fn(1), ..., fn(n-1) in order.
template <class F>
void for_each_serial(std::int64_t n, F&& fn) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
}

// OpenMP path. fn must only write state owned by index i.
template <class F>
void for_each_parallel(std::int64_t n, F&& fn) {
    using Fn = std::remove_reference_t<F>;
    auto body = [](void* ctx, std::int64_t i) { (*static_cast<Fn*>(ctx))(i); };
    detail::run_parallel(n, &fn, body);
}

// Dispatches on the configured thread cap.
template <class F>
void for_each(std::int64_t n, F&& fn) {
    if (max_threads() > 1 && n > 1)
        for_each_parallel(n, fn);
    else
        for_each_serial(n, fn);
}

} // namespace seil::par
