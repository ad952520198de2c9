#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace fimeq::detail {

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads, in
// contiguous blocks. fn must only write to slots it owns. The first exception
// thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    const std::int64_t workers =
        std::clamp<std::int64_t>(static_cast<std::int64_t>(std::thread::hardware_concurrency()), 1, 64);
    if (workers == 1 || n < 2 * workers) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        const std::int64_t block = (n + workers - 1) / workers;
        for (std::int64_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    const std::int64_t end = std::min(n, (w + 1) * block);
                    for (std::int64_t i = w * block; i < end; ++i) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace fimeq::detail
