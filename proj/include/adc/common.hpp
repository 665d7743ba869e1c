#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace adc {

// Exceptions the CLI maps to exit codes. Core numeric routines throw
// std::domain_error / std::invalid_argument for contract violations.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct BundleError : std::runtime_error { using std::runtime_error::runtime_error; };

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Counter-based RNG. Every draw is a pure function of (seed, counter), so
// sampling is reproducible regardless of thread scheduling or call order.
// splitmix64 finalizer; passes the usual smoke tests, not cryptographic.
// ---------------------------------------------------------------------------

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(hash_combine(seed, stream)), ctr_(0) {}

    std::uint64_t next_u64() { return mix64(state_ + 0x9e3779b97f4a7c15ull * ++ctr_); }

    // uniform in [0,1); 53-bit resolution
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    double next_normal();  // inverse-CDF; defined after norm_inv_cdf

private:
    std::uint64_t state_;
    std::uint64_t ctr_;
};

// ---------------------------------------------------------------------------
// Deterministic parallel execution: work is split into a fixed number of
// chunks and chunk results are merged in chunk order, so results do not
// depend on the number of worker threads.
// ---------------------------------------------------------------------------

inline int& global_thread_count() {
    static int n = int(std::thread::hardware_concurrency());
    return n;
}

inline void set_thread_count(int n) { global_thread_count() = n > 0 ? n : 1; }

// fn(chunk_id, begin, end) over [0, n) split into n_chunks ranges.
inline void parallel_chunks(std::int64_t n, int n_chunks,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (n_chunks > n) n_chunks = int(n);
    int workers = std::min(global_thread_count(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c) {
            std::int64_t b = n * c / n_chunks, e = n * (c + 1) / n_chunks;
            if (b < e) fn(c, b, e);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int c = w; c < n_chunks; c += workers) {
                std::int64_t b = n * c / n_chunks, e = n * (c + 1) / n_chunks;
                if (b < e) fn(c, b, e);
            }
        });
    }
    for (auto& t : pool) t.join();
}

inline double sq(double x) { return x * x; }

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2sq(std::span<const double> a) { return dot(a, a); }

}  // namespace adc
