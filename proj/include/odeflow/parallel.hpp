#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace odeflow {

// Batch kernels come in two flavors: a serial reference path and an OpenMP
// path. Both run the identical per-element routine; reductions over
// elements always happen afterwards, serially, in index order, so results
// are bitwise identical regardless of Exec and thread count.
enum class Exec { serial, openmp };

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <class F>
void for_index(std::size_t n, Exec exec, F&& fn) {
    if (exec == Exec::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            fn(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

}  // namespace odeflow
