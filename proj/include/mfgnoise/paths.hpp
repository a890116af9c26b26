#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace mfgnoise {

/// Values of the frozen characteristics coefficients at one point:
/// dX = -bx dt, dp = -bp dt + diffusion, running cost a.
struct FrozenSample {
    std::array<double, kMaxDim> bx{};
    std::array<double, kMaxDim> bp{};
    std::array<double, kMaxDim> a{};
    std::array<double, kMaxDim * kMaxDim> vol{};  // row-major m x m, used when has_volatility()
};

/// Coefficients frozen along a given field. eval receives the coefficient
/// time argument tau = t - s of the functional.
template <class C>
concept FrozenCoefficients = requires(const C& c, double tau, const double* x, const double* p, FrozenSample& out) {
    { c.d() } -> std::convertible_to<std::size_t>;
    { c.m() } -> std::convertible_to<std::size_t>;
    { c.sigma() } -> std::convertible_to<double>;
    { c.has_volatility() } -> std::convertible_to<bool>;
    c.eval(tau, x, p, out);
};

struct MonteCarloConfig {
    std::size_t n_paths = 256;
    /// Fixed step; 0 selects t / steps for a sub-horizon t.
    double dt = 0.0;
    std::size_t steps = 128;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::size_t n_steps_for(double t) const {
        if (dt > 0.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / dt - 1e-9)));
        return std::max<std::size_t>(1, steps);
    }
};

inline void check_mc(const MonteCarloConfig& mc) {
    if (mc.n_paths == 0) throw ValidationError("n_paths must be positive");
    if (!(mc.dt >= 0.0) || !std::isfinite(mc.dt)) throw ValidationError("dt must be nonnegative and finite");
    if (mc.dt == 0.0 && mc.steps == 0) throw ValidationError("steps must be positive");
}

/// Where paths live: X is projected onto x_box, p onto p_box after every step.
struct PathDomain {
    Box x_box;
    Box p_box;
};

/// Standard normals Z[path][step][coord] for one (seed, stream) pair; the
/// Brownian increment over a step of length dt is sqrt(dt) Z. Entries depend
/// only on (seed, stream, path, step, coord), so sharing a table across grid
/// nodes or sub-horizons implements common random numbers.
class BrownianIncrements {
public:
    BrownianIncrements(std::uint64_t seed, std::uint32_t stream, std::size_t n_paths, std::size_t n_steps,
                       std::size_t m, std::size_t threads = 1)
        : n_paths_(n_paths), n_steps_(n_steps), m_(m), z_(n_paths * n_steps * m) {
        parallel_for(n_paths, threads, [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t k = b; k < e; ++k) {
                NormalStream ns(seed, stream, k);
                double* row = z_.data() + k * n_steps_ * m_;
                for (std::size_t j = 0; j < n_steps_ * m_; ++j) row[j] = ns.next();
            }
        });
    }

    std::size_t n_paths() const { return n_paths_; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t m() const { return m_; }
    const double* path(std::size_t k) const { return z_.data() + k * n_steps_ * m_; }

private:
    std::size_t n_paths_, n_steps_, m_;
    std::vector<double> z_;
};

/// Stepping driver used by every path routine: either a precomputed table or
/// a fresh NormalStream per path producing the same numbers.
class NormalSource {
public:
    NormalSource(const BrownianIncrements* table, std::uint64_t seed, std::uint32_t stream, std::size_t path)
        : table_(table), stream_(seed, stream, path) {
        if (table_) row_ = table_->path(path);
    }
    double next() { return row_ ? row_[pos_++] : stream_.next(); }

private:
    const BrownianIncrements* table_;
    const double* row_ = nullptr;
    std::size_t pos_ = 0;
    NormalStream stream_;
};

namespace detail {

[[noreturn]] inline void non_finite(double s, const double* x, std::size_t d, const double* p, std::size_t m) {
    throw NonFiniteError("non-finite coefficient at s=" + std::to_string(s) + ", X=" +
                         format_vector(std::span<const double>(x, d)) + ", p=" +
                         format_vector(std::span<const double>(p, m)));
}

inline bool finite_n(const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

}  // namespace detail

/// One explicit Euler / Euler-Maruyama step of the characteristics from
/// path time s (tau = t - s). Returns true when a projection happened.
/// `fs` must already hold the coefficients at (tau, x, p).
template <FrozenCoefficients C>
bool euler_step(const C& c, const FrozenSample& fs, double dt, double sqdt, double* x, double* p, const double* z,
                const PathDomain& dom) {
    const std::size_t d = c.d(), m = c.m();
    for (std::size_t i = 0; i < d; ++i) x[i] -= fs.bx[i] * dt;
    if (c.has_volatility()) {
        // diffusion matrix sqrt(2) Sigma
        std::array<double, kMaxDim> dp{};
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += fs.vol[i * m + j] * z[j];
            dp[i] = std::numbers::sqrt2 * s * sqdt;
        }
        for (std::size_t i = 0; i < m; ++i) p[i] += -fs.bp[i] * dt + dp[i];
    } else {
        const double amp = std::sqrt(2.0 * c.sigma()) * sqdt;
        for (std::size_t i = 0; i < m; ++i) p[i] += -fs.bp[i] * dt + amp * z[i];
    }
    const bool mx = dom.x_box.clamp(std::span<double>(x, d));
    const bool mp = dom.p_box.clamp(std::span<double>(p, m));
    return mx || mp;
}

inline bool driftless_noise(double sigma, bool has_vol) { return sigma == 0.0 && !has_vol; }

struct PairedPaths {
    std::vector<double> y_paths, q_paths;
};

/// Ensemble of characteristics (X, p), optionally with a second system (Y, q).
struct PathBundle {
    std::size_t n_paths = 0, n_steps = 0, d = 0, m = 0;
    double dt = 0.0;
    std::vector<double> x_paths;  // [path][step][d]
    std::vector<double> p_paths;  // [path][step][m]
    std::optional<PairedPaths> paired;
    std::size_t clamp_events = 0;
    std::uint64_t seed = 0;
    bool shared_driver = true;

    double clamp_rate() const {
        const double n = static_cast<double>(n_paths) * static_cast<double>(n_steps);
        return n > 0 ? static_cast<double>(clamp_events) / n : 0.0;
    }
    const double* x(std::size_t k, std::size_t j) const { return x_paths.data() + (k * (n_steps + 1) + j) * d; }
    const double* p(std::size_t k, std::size_t j) const { return p_paths.data() + (k * (n_steps + 1) + j) * m; }
    const double* y(std::size_t k, std::size_t j) const { return paired->y_paths.data() + (k * (n_steps + 1) + j) * d; }
    const double* q(std::size_t k, std::size_t j) const { return paired->q_paths.data() + (k * (n_steps + 1) + j) * m; }
};

struct StartPoint {
    std::vector<double> x, p;
};

namespace detail {

template <FrozenCoefficients C>
void run_path(const C& c, double t, std::size_t n_steps, const StartPoint& start, NormalSource& src,
              const PathDomain& dom, double* xs, double* ps, std::size_t& events) {
    const std::size_t d = c.d(), m = c.m();
    const double dt = t / static_cast<double>(n_steps);
    const double sqdt = std::sqrt(dt);
    std::array<double, kMaxDim> x{}, p{}, z{};
    std::copy(start.x.begin(), start.x.end(), x.begin());
    std::copy(start.p.begin(), start.p.end(), p.begin());
    std::copy(x.begin(), x.begin() + d, xs);
    std::copy(p.begin(), p.begin() + m, ps);
    FrozenSample fs;
    for (std::size_t j = 0; j < n_steps; ++j) {
        const double s = static_cast<double>(j) * dt;
        c.eval(t - s, x.data(), p.data(), fs);
        if (!finite_n(fs.bx.data(), d) || !finite_n(fs.bp.data(), m) || !finite_n(fs.a.data(), d))
            non_finite(s, x.data(), d, p.data(), m);
        for (std::size_t i = 0; i < m; ++i) z[i] = src.next();
        if (euler_step(c, fs, dt, sqdt, x.data(), p.data(), z.data(), dom)) ++events;
        std::copy(x.begin(), x.begin() + d, xs + (j + 1) * d);
        std::copy(p.begin(), p.begin() + m, ps + (j + 1) * m);
    }
}

inline void check_start(const StartPoint& s, std::size_t d, std::size_t m) {
    if (s.x.size() != d || s.p.size() != m) throw ValidationError("start point dimension mismatch");
}

}  // namespace detail

/// Simulates mc.n_paths characteristics over [0, t] from one start point.
/// Path k uses its own counter-based substream, so results do not depend on
/// mc.threads.
template <FrozenCoefficients C>
PathBundle simulate(const C& c, double t, const StartPoint& start, const MonteCarloConfig& mc, const PathDomain& dom,
                    std::uint32_t stream = 0) {
    check_mc(mc);
    if (!(t > 0.0)) throw ValidationError("simulate: sub-horizon must be positive");
    detail::check_start(start, c.d(), c.m());
    PathBundle b;
    b.n_paths = mc.n_paths;
    b.n_steps = mc.n_steps_for(t);
    b.d = c.d();
    b.m = c.m();
    b.dt = t / static_cast<double>(b.n_steps);
    b.seed = mc.seed;
    b.x_paths.resize(b.n_paths * (b.n_steps + 1) * b.d);
    b.p_paths.resize(b.n_paths * (b.n_steps + 1) * b.m);
    std::vector<std::size_t> events(b.n_paths, 0);
    parallel_for(b.n_paths, mc.threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t k = lo; k < hi; ++k) {
            NormalSource src(nullptr, mc.seed, stream, k);
            detail::run_path(c, t, b.n_steps, start, src, dom, b.x_paths.data() + k * (b.n_steps + 1) * b.d,
                             b.p_paths.data() + k * (b.n_steps + 1) * b.m, events[k]);
        }
    });
    for (std::size_t e : events) b.clamp_events += e;
    return b;
}

/// Two characteristic systems in lockstep. With shared_driver the same
/// increment drives p and q at every step; otherwise q uses stream + 1.
template <FrozenCoefficients C>
PathBundle simulate_coupled(const C& c, double t, const StartPoint& a, const StartPoint& b_start,
                            const MonteCarloConfig& mc, const PathDomain& dom, bool shared_driver = true,
                            std::uint32_t stream = 0) {
    PathBundle b = simulate(c, t, a, mc, dom, stream);
    detail::check_start(b_start, c.d(), c.m());
    b.shared_driver = shared_driver;
    PairedPaths pp;
    pp.y_paths.resize(b.x_paths.size());
    pp.q_paths.resize(b.p_paths.size());
    std::vector<std::size_t> events(b.n_paths, 0);
    const std::uint32_t s2 = shared_driver ? stream : stream + 1;
    parallel_for(b.n_paths, mc.threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t k = lo; k < hi; ++k) {
            NormalSource src(nullptr, mc.seed, s2, k);
            detail::run_path(c, t, b.n_steps, b_start, src, dom, pp.y_paths.data() + k * (b.n_steps + 1) * b.d,
                             pp.q_paths.data() + k * (b.n_steps + 1) * b.m, events[k]);
        }
    });
    for (std::size_t e : events) b.clamp_events += e;
    b.paired = std::move(pp);
    return b;
}

/// Columnar dump: path,step,s,x0..,p0..[,y0..,q0..]
inline void write_path_dump(const PathBundle& b, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write path dump '" + path + "'");
    os.precision(17);
    os << "path,step,s";
    for (std::size_t i = 0; i < b.d; ++i) os << ",x" << i;
    for (std::size_t i = 0; i < b.m; ++i) os << ",p" << i;
    if (b.paired) {
        for (std::size_t i = 0; i < b.d; ++i) os << ",y" << i;
        for (std::size_t i = 0; i < b.m; ++i) os << ",q" << i;
    }
    os << '\n';
    for (std::size_t k = 0; k < b.n_paths; ++k)
        for (std::size_t j = 0; j <= b.n_steps; ++j) {
            os << k << ',' << j << ',' << static_cast<double>(j) * b.dt;
            for (std::size_t i = 0; i < b.d; ++i) os << ',' << b.x(k, j)[i];
            for (std::size_t i = 0; i < b.m; ++i) os << ',' << b.p(k, j)[i];
            if (b.paired) {
                for (std::size_t i = 0; i < b.d; ++i) os << ',' << b.y(k, j)[i];
                for (std::size_t i = 0; i < b.m; ++i) os << ',' << b.q(k, j)[i];
            }
            os << '\n';
        }
}

/// Frozen coefficients given by plain callables; handy for tests and for
/// explicit (A, B1, B2) data.
template <class Fx, class Fp, class Fa>
struct LambdaCoefficients {
    std::size_t d_, m_;
    double sigma_;
    Fx bx;
    Fp bp;
    Fa a;
    std::size_t d() const { return d_; }
    std::size_t m() const { return m_; }
    double sigma() const { return sigma_; }
    bool has_volatility() const { return false; }
    void eval(double tau, const double* x, const double* p, FrozenSample& out) const {
        bx(tau, x, p, out.bx.data());
        bp(tau, x, p, out.bp.data());
        a(tau, x, p, out.a.data());
    }
};

template <class Fx, class Fp, class Fa>
LambdaCoefficients<Fx, Fp, Fa> make_frozen(std::size_t d, std::size_t m, double sigma, Fx bx, Fp bp, Fa a) {
    return {d, m, sigma, std::move(bx), std::move(bp), std::move(a)};
}

}  // namespace mfgnoise
