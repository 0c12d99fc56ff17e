#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace endodyn {

// Worker cap: ENDODYN_THREADS when set, hardware concurrency otherwise.
inline int worker_count() {
    if (const char* env = std::getenv("ENDODYN_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs `work` over [0,n) split into fixed-size chunks and merges the per-chunk
// results in ascending chunk order. Chunking depends only on (n, chunk_size),
// never on the worker count, so results are identical no matter how many
// threads execute. Acc must be default-constructible.
template <class Acc>
Acc run_chunked(long n, long chunk_size,
                const std::function<void(long, long, Acc&)>& work,
                const std::function<void(Acc&, const Acc&)>& merge) {
    if (n <= 0) return Acc{};
    if (chunk_size < 1) chunk_size = 1;
    const long n_chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<Acc> partial(static_cast<std::size_t>(n_chunks));

    const int workers = std::min<long>(worker_count(), n_chunks);
    if (workers <= 1) {
        for (long c = 0; c < n_chunks; ++c) {
            work(c * chunk_size, std::min(n, (c + 1) * chunk_size),
                 partial[static_cast<std::size_t>(c)]);
        }
    } else {
        std::atomic<long> next{0};
        std::atomic<bool> failed{false};
        std::exception_ptr error;
        std::mutex error_mu;
        auto runner = [&] {
            for (;;) {
                const long c = next.fetch_add(1);
                if (c >= n_chunks || failed.load()) return;
                try {
                    work(c * chunk_size, std::min(n, (c + 1) * chunk_size),
                         partial[static_cast<std::size_t>(c)]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(runner);
        for (auto& th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }

    Acc total{};
    for (long c = 0; c < n_chunks; ++c) merge(total, partial[static_cast<std::size_t>(c)]);
    return total;
}

}  // namespace endodyn
