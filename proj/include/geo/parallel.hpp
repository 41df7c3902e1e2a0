#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace geo {

// Runs fn(i) for i in [0,n). jobs <= 1 keeps the plain serial loop; jobs > 1
// uses an OpenMP static schedule. Callers must write only to per-index slots
// so the two paths produce identical bytes; tests assert that equality.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
#ifdef _OPENMP
    if (jobs > 1) {
        const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(jobs)
        for (long long i = 0; i < nn; ++i)
            fn(static_cast<std::size_t>(i));
        return;
    }
#else
    (void)jobs;
#endif
    for (std::size_t i = 0; i < n; ++i)
        fn(i);
}

inline int hardware_jobs() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace geo
