#include "cbf/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace cbf::par {

int thread_cap() {
    static const int cap = [] {
        int n = 1;
#ifdef _OPENMP
        n = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("CBF_FORGE_THREADS")) {
            try {
                const int requested = std::stoi(env);
                if (requested >= 1) n = std::min(n, requested);
            } catch (...) {
                // ignore malformed values, keep the OMP default
            }
        }
        return std::max(1, n);
    }();
    return cap;
}

}  // namespace cbf::par
