#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hwm {

/// Runs fn(i) for i in [0, n) on up to `threads` workers using fixed
/// contiguous chunks. fn must only write state owned by index i; results are
/// then independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Pairwise (cascade) summation; the grouping depends only on the length.
template <class It>
double pairwise_sum(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    if (n <= 8) {
        double s = 0.0;
        for (; first != last; ++first) s += *first;
        return s;
    }
    const It mid = first + static_cast<std::ptrdiff_t>(n / 2);
    return pairwise_sum(first, mid) + pairwise_sum(mid, last);
}

}  // namespace hwm
