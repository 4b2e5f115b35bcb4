#include "core/parallel.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wm {

namespace {
int g_workers = -1; // -1 = unresolved
}

int worker_count() {
    if (g_workers > 0) return g_workers;
    if (const char* env = std::getenv("WHOLEMOMA_WORKERS")) {
        int n = std::atoi(env);
        if (n > 0) {
            g_workers = n;
            return g_workers;
        }
    }
#ifdef _OPENMP
    g_workers = omp_get_max_threads();
#else
    g_workers = 1;
#endif
    return g_workers;
}

void set_worker_count(int n) { g_workers = n > 0 ? n : -1; }

} // namespace wm
