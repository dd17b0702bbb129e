#include "nexus/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace nexus {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_threads(unsigned n) {
    g_threads.store(n);
}

unsigned threads() {
    unsigned n = g_threads.load();
    if (n == 0) n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = threads();
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t used = std::min<std::size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(used - 1);
    auto run_block = [&](std::size_t w) {
        // Contiguous static partition, independent of scheduling order.
        const std::size_t lo = n * w / used;
        const std::size_t hi = n * (w + 1) / used;
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    };
    for (std::size_t w = 1; w < used; ++w) pool.emplace_back(run_block, w);
    run_block(0);
    for (auto& t : pool) t.join();
}

} // namespace nexus
