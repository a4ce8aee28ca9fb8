// Block-parallel loops with a fixed, thread-count independent partition.
//
// Every loop is split into blocks of kBlockSize items. Blocks are handed to
// workers, and reductions are combined in block order, so results are
// bit-identical whatever the number of threads.
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

namespace lsm {

inline constexpr std::size_t kBlockSize = 4096;

// 0 means "use std::thread::hardware_concurrency()".
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(block_index, begin, end) for every block of [0, n).
void for_each_block(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline std::size_t block_count(std::size_t n) { return (n + kBlockSize - 1) / kBlockSize; }

// Element-wise loop; body(i) must only write state owned by index i.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    for_each_block(n, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) body(i);
    });
}

// Deterministic sum: per-block partials via block_sum(begin, end), combined in block order.
template <class T, class F>
T parallel_block_reduce(std::size_t n, T zero, F&& block_sum) {
    std::vector<T> partial(block_count(n), zero);
    for_each_block(n, [&](std::size_t blk, std::size_t b, std::size_t e) { partial[blk] = block_sum(b, e); });
    T total = zero;
    for (const auto& p : partial) total = total + p;
    return total;
}

} // namespace lsm
