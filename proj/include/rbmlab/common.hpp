#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rbmlab {

// Raised when an exact-enumeration routine is asked to iterate over a state
// space larger than its configured cap.
class capacity_error : public std::runtime_error {
public:
    capacity_error(const std::string& what, const std::string& dimension)
        : std::runtime_error(what + " (limiting dimension: " + dimension + ")"),
          dimension_(dimension) {}
    const std::string& dimension() const { return dimension_; }

private:
    std::string dimension_;
};

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Compensated accumulator for long reductions.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

inline unsigned thread_count() {
    if (const char* env = std::getenv("RBMLAB_THREADS")) {
        long n = std::atol(env);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Runs fn(chunk_index, begin, end) over [0, n) split into a fixed number of
// chunks. The chunk layout depends only on n, never on the worker count, so
// per-chunk results can be merged in chunk order for reproducible reductions.
// Nested calls degrade to serial execution.
template <typename Fn>
void parallel_chunks(std::uint64_t n, std::size_t n_chunks, Fn&& fn) {
    if (n == 0) return;
    if (n_chunks == 0) n_chunks = 1;
    if (n_chunks > n) n_chunks = static_cast<std::size_t>(n);
    std::uint64_t chunk = (n + n_chunks - 1) / n_chunks;

    unsigned workers = thread_count();
    if (workers <= 1 || n_chunks == 1 || detail::in_parallel_region) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            std::uint64_t b = c * chunk;
            if (b >= n) break;
            std::uint64_t e = std::min(n, b + chunk);
            fn(c, b, e);
        }
        return;
    }

    std::vector<std::thread> pool;
    std::size_t per = (n_chunks + workers - 1) / workers;
    for (unsigned t = 0; t < workers; ++t) {
        std::size_t c0 = t * per;
        if (c0 >= n_chunks) break;
        std::size_t c1 = std::min(n_chunks, c0 + per);
        pool.emplace_back([&, c0, c1]() {
            detail::in_parallel_region = true;
            for (std::size_t c = c0; c < c1; ++c) {
                std::uint64_t b = c * chunk;
                if (b >= n) break;
                std::uint64_t e = std::min(n, b + chunk);
                fn(c, b, e);
            }
            detail::in_parallel_region = false;
        });
    }
    for (auto& th : pool) th.join();
}

inline std::size_t default_chunks(std::uint64_t n) {
    if (n < (1u << 16)) return 1;
    return 256;
}

}  // namespace rbmlab
