// Fixed-partition parallel loops.
//
// Work is split into chunks whose boundaries depend only on the problem
// size, never on the worker count. Callers reduce per-chunk results in
// chunk order, so floating-point sums are bitwise identical for any number
// of workers.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tlsim {

inline unsigned default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

struct ChunkRange {
    std::size_t begin;
    std::size_t end;
};

inline std::vector<ChunkRange> make_chunks(std::size_t n, std::size_t chunk) {
    std::vector<ChunkRange> out;
    for (std::size_t b = 0; b < n; b += chunk) out.push_back({b, std::min(n, b + chunk)});
    return out;
}

/// Calls body(chunk_index, range) for every chunk, distributing chunks over
/// `workers` threads. The first exception thrown by any body is rethrown.
template <class Body>
void for_each_chunk(const std::vector<ChunkRange>& chunks, unsigned workers, Body&& body) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(chunks.size())));
    if (workers == 1) {
        for (std::size_t c = 0; c < chunks.size(); ++c) body(c, chunks[c]);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks.size()) return;
            try {
                body(c, chunks[c]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = chunks.size();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

} // namespace tlsim
