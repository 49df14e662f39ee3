#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace semitrace {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// ---------------------------------------------------------------------------
// Error hierarchy.  Everything user-facing throws one of these; the CLI maps
// them to nonzero exit codes with the message printed to stderr.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input (inconsistent polynomial degrees, bad config syntax, ...).
// Distinct from a hypothesis check that merely fails.
struct StructuralError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    int line = 0;
    int col = 0;
    ConfigError(const std::string& msg, int l, int c)
        : Error(msg + " (line " + std::to_string(l) + ", col " + std::to_string(c) + ")"),
          line(l), col(c) {}
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A quadrature node saw a non-positive value of a form that must be definite.
struct DefinitenessError : Error {
    using Error::Error;
};

// A quadrature / scan / refinement failed to reach its accuracy target.
struct AccuracyError : Error {
    using Error::Error;
};

struct PreconditionError : Error {
    using Error::Error;
};

// Requested energies exceed the validated range of a cached model spectrum.
struct CacheExtensionRequired : Error {
    using Error::Error;
};

// Channel sweep hit m_max before the channel cutoff; result would be partial.
struct IncompleteSweepError : Error {
    using Error::Error;
};

struct StiffnessError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Small vector helpers.  Points live in at most three dimensions; we carry
// fixed arrays plus an explicit dimension to keep everything allocation-free.
// ---------------------------------------------------------------------------

using Vec3 = std::array<double, 3>;

inline Vec3 vec3(double x = 0.0, double y = 0.0, double z = 0.0) { return {x, y, z}; }

inline double dot(const Vec3& a, const Vec3& b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec3& a, int n) { return std::sqrt(dot(a, a, n)); }

inline Vec3 axpy(double c, const Vec3& a, const Vec3& b, int n) {
    Vec3 r{0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) r[i] = c * a[i] + b[i];
    return r;
}

// ---------------------------------------------------------------------------
// Deterministic fork/join parallelism.  Work items are indexed; callers own
// result slots, so the merge order never depends on scheduling.
// ---------------------------------------------------------------------------

inline std::atomic<int>& thread_count_storage() {
    static std::atomic<int> n{0};  // 0 = use hardware_concurrency
    return n;
}

inline void set_thread_count(int n) { thread_count_storage().store(n); }

inline int thread_count() {
    int n = thread_count_storage().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline bool& in_parallel_region() {
    thread_local bool flag = false;
    return flag;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const int workers = std::min<std::size_t>(thread_count(), count);
    if (workers <= 1 || in_parallel_region()) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            in_parallel_region() = true;
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

// Chunked variant for fine-grained loops.
template <typename Fn>
void parallel_for_chunked(std::size_t count, std::size_t grain, Fn&& fn) {
    if (grain == 0) grain = 1;
    const std::size_t chunks = (count + grain - 1) / grain;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t lo = c * grain;
        const std::size_t hi = std::min(count, lo + grain);
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
}

// ---------------------------------------------------------------------------
// Formatting: one path for every numeric value we emit, so identical runs
// produce byte-identical files.
// ---------------------------------------------------------------------------

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_g(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

}  // namespace semitrace
