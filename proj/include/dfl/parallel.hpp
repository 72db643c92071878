#ifndef DFL_PARALLEL_HPP
#define DFL_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dfl {

/// Runs fn(k) for k in [0, count) on up to `threads` threads. Work items are
/// split into contiguous blocks; fn must only write state owned by item k.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = count * w / workers;
        const std::size_t end = count * (w + 1) / workers;
        pool.emplace_back([&fn, begin, end] {
            for (std::size_t k = begin; k < end; ++k) fn(k);
        });
    }
}

}  // namespace dfl

#endif  // DFL_PARALLEL_HPP
