#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pcst {

/// Worker count used when a caller passes 0: the PCST_THREADS environment
/// variable if set to a positive integer, otherwise the hardware concurrency.
inline unsigned default_workers() {
    if (const char* env = std::getenv("PCST_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline unsigned resolve_workers(unsigned requested) {
    return requested == 0 ? default_workers() : requested;
}

/// Runs body(i) for i in [0, count) over contiguous blocks, one block per
/// worker. Each index is visited exactly once, so any body that writes only
/// to slot i produces results independent of the worker count.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, unsigned workers = 0) {
    const std::size_t threads =
        std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(count, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run_block = [&](std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) body(i);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    const std::size_t block = count / threads;
    const std::size_t extra = count % threads;
    std::size_t begin = 0;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t end = begin + block + (t < extra ? 1 : 0);
        if (t + 1 == threads) {
            run_block(begin, end);
        } else {
            pool.emplace_back(run_block, begin, end);
        }
        begin = end;
    }
    pool.clear(); // joins
    if (failure) std::rethrow_exception(failure);
}

} // namespace pcst
