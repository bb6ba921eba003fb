#pragma once

#include <cstdint>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cbf::par {

enum class Exec { serial, openmp };

// Worker pool size: min(OMP default, CBF_FORGE_THREADS when set).
int thread_cap();

// Parallel index loop. Bodies must not throw in the openmp path.
template <typename F>
void for_index(Exec ex, std::int64_t n, F&& body) {
#ifdef _OPENMP
    if (ex == Exec::openmp) {
        const int threads = thread_cap();
#pragma omp parallel for num_threads(threads) schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
#else
    (void)ex;
#endif
    for (std::int64_t i = 0; i < n; ++i) {
        body(i);
    }
}

// Chunk layout used by deterministic reductions: fixed-size chunks combined
// in index order, so results are independent of the thread count.
struct ChunkLayout {
    std::int64_t chunk_size;
    std::int64_t chunk_count;
};

inline ChunkLayout chunks_for(std::int64_t n, std::int64_t chunk_size = 64) {
    ChunkLayout c;
    c.chunk_size = chunk_size;
    c.chunk_count = (n + chunk_size - 1) / chunk_size;
    return c;
}

}  // namespace cbf::par
