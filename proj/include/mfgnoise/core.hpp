#pragma once

#include <algorithm>
#include <array>
#include <exception>
#include <numbers>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfgnoise {

inline constexpr const char* kVersion = "mfgnoise 0.1.0";

/// Upper bound on d and m; lets inner loops run on stack buffers.
inline constexpr std::size_t kMaxDim = 8;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed problem data or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Query outside the region where a field is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A coefficient or accumulator produced NaN/inf.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

inline std::string format_vector(std::span<const double> v) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ", ";
        os << v[i];
    }
    os << ')';
    return os.str();
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2_sq(std::span<const double> a) { return dot(a, a); }

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double z) { return std::isfinite(z); });
}

/// Axis-aligned box [lo, hi] in R^n.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    Box() = default;
    Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {}

    static Box cube(std::size_t n, double a, double b) {
        return Box(std::vector<double>(n, a), std::vector<double>(n, b));
    }

    std::size_t dim() const { return lo.size(); }

    double width(std::size_t i) const { return hi[i] - lo[i]; }

    bool well_formed() const {
        if (lo.size() != hi.size() || lo.empty()) return false;
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(hi[i] > lo[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i])) return false;
        return true;
    }

    bool contains(std::span<const double> z, double tol = 0.0) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (z[i] < lo[i] - tol || z[i] > hi[i] + tol) return false;
        return true;
    }

    /// Projects z into the box; returns true when any coordinate moved.
    bool clamp(std::span<double> z) const {
        bool moved = false;
        for (std::size_t i = 0; i < lo.size(); ++i) {
            if (z[i] < lo[i]) {
                z[i] = lo[i];
                moved = true;
            } else if (z[i] > hi[i]) {
                z[i] = hi[i];
                moved = true;
            }
        }
        return moved;
    }

    Box expanded(std::span<const double> below, std::span<const double> above) const {
        Box out = *this;
        for (std::size_t i = 0; i < lo.size(); ++i) {
            out.lo[i] -= below[i];
            out.hi[i] += above[i];
        }
        return out;
    }

    double diameter() const {
        double s = 0.0;
        for (std::size_t i = 0; i < lo.size(); ++i) s += width(i) * width(i);
        return std::sqrt(s);
    }
};

inline Box unbounded_box(std::size_t n) {
    const double inf = std::numeric_limits<double>::infinity();
    return Box(std::vector<double>(n, -inf), std::vector<double>(n, inf));
}

// ---------------------------------------------------------------------------
// Random numbers

/// Philox4x32-10 counter-based generator (Salmon et al.); one call maps a
/// 128-bit counter and 64-bit key to 128 random bits.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;

    static Counter generate(Counter ctr, std::uint64_t key) {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return ctr;
    }
};

/// Standard normal stream for one (seed, stream, path) triple. Draw n is a
/// pure function of the triple and n, so any worker reproduces it.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t path)
        : seed_(seed), stream_(stream), path_(path) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto r = Philox4x32::generate(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(path_),
             static_cast<std::uint32_t>(path_ >> 32), stream_ ^ static_cast<std::uint32_t>(block_ >> 32)},
            seed_);
        ++block_;
        const double u1 = to_unit_open(r[0], r[1]);
        const double u2 = to_unit_open(r[2], r[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static double to_unit_open(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((std::uint64_t{a} << 32) | b) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint64_t path_;
    std::uint64_t block_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Mixes a parent seed with a tag into an independent child seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Uniform doubles in [0,1) from a single Philox-keyed sequence.
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed, std::uint32_t stream = 0) : seed_(seed), stream_(stream) {}

    double next() {
        if (pos_ == 2) refill();
        return buf_[pos_++];
    }

    double uniform(double a, double b) { return a + (b - a) * next(); }

    std::size_t index(std::size_t n) {
        auto k = static_cast<std::size_t>(next() * static_cast<double>(n));
        return std::min(k, n - 1);
    }

private:
    void refill() {
        const auto r = Philox4x32::generate(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), stream_, 0x5A17u},
            seed_);
        ++block_;
        buf_[0] = static_cast<double>(((std::uint64_t{r[0]} << 32) | r[1]) >> 11) * 0x1.0p-53;
        buf_[1] = static_cast<double>(((std::uint64_t{r[2]} << 32) | r[3]) >> 11) * 0x1.0p-53;
        pos_ = 0;
    }

    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint64_t block_ = 0;
    double buf_[2] = {0.0, 0.0};
    std::size_t pos_ = 2;
};

// ---------------------------------------------------------------------------
// Reductions and parallelism

/// Pairwise (cascade) summation; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double z : v) s += z;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Splits [0, n) into contiguous chunks run on up to `threads` workers.
/// fn(begin, end, worker) must only write to per-index outputs so that the
/// result is independent of the partition.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min(resolve_threads(threads), n);
    if (workers <= 1) {
        fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace mfgnoise
