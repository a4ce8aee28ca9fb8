#include "lsm/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace lsm {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count() {
    unsigned n = g_threads.load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

void for_each_block(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    const std::size_t blocks = block_count(n);
    if (blocks == 0) return;
    const std::size_t workers = std::min<std::size_t>(thread_count(), blocks);

    auto run_block = [&](std::size_t blk) {
        const std::size_t b = blk * kBlockSize;
        body(blk, b, std::min(n, b + kBlockSize));
    };

    if (workers <= 1) {
        for (std::size_t blk = 0; blk < blocks; ++blk) run_block(blk);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t blk = next.fetch_add(1);
            if (blk >= blocks) return;
            try {
                run_block(blk);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(blocks);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace lsm
