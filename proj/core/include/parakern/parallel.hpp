#ifndef PARAKERN_PARALLEL_HPP
#define PARAKERN_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace parakern {

// Runs fn(chunk_index, begin, end) over [0, n_items) split into fixed-size
// chunks, pulled by a pool of workers.  Chunk boundaries depend only on
// (n_items, chunk_size), so writers that touch disjoint per-item slots, or
// reducers that combine per-chunk partials in chunk order, get results
// independent of thread scheduling.
template <typename Fn>
void parallel_chunks(std::size_t n_items, std::size_t chunk_size, int workers, Fn&& fn) {
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t n_chunks = (n_items + chunk_size - 1) / chunk_size;
    if (workers <= 1 || n_chunks <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const std::size_t b = c * chunk_size;
            fn(c, b, std::min(b + chunk_size, n_items));
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            const std::size_t b = c * chunk_size;
            try {
                fn(c, b, std::min(b + chunk_size, n_items));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const int n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n_chunks);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline int default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline constexpr std::size_t kDefaultChunkSize = 4096;

} // namespace parakern

#endif
