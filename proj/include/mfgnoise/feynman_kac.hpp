#pragma once

#include <cmath>
#include <vector>

#include "core.hpp"
#include "paths.hpp"
#include "value_field.hpp"

namespace mfgnoise {

/// One application of the functional on every node of a grid.
struct FKSlice {
    std::vector<double> values;   // [node][out]
    std::vector<double> std_err;  // Monte Carlo standard error, same layout
    std::size_t clamp_events = 0;
    std::size_t steps = 0;  // path steps simulated (denominator of the clamp rate)

    double max_std_err() const {
        double s = 0.0;
        for (double e : std_err) s = std::max(s, e);
        return s;
    }
};

namespace detail {

/// Mean and standard error of v[0..n) by pairwise sums.
inline void mean_se(std::span<double> v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    mean = pairwise_sum(v) / n;
    if (v.size() < 2) {
        se = 0.0;
        return;
    }
    const double mu = mean;
    for (double& z : v) z = (z - mu) * (z - mu);
    se = std::sqrt(pairwise_sum(v) / (n - 1.0) / n);
}

}  // namespace detail

/// V(t,x,p) = E[ int_0^t e^{-lambda s} A(t-s,X_s,p_s) ds + e^{-lambda t} U0(X_t,p_t) ]
/// on every node of `grid`, with the left rectangle rule on the path grid.
/// `terminal(x, p, out)` plays U0. All nodes share the same path substreams
/// (`table` if given), so the result is a deterministic function of
/// (mc.seed, stream) and does not depend on mc.threads.
template <FrozenCoefficients C, class Terminal>
FKSlice feynman_kac_apply(const C& c, const Terminal& terminal, double t, const Grid& grid, std::size_t out_dim,
                          const MonteCarloConfig& mc, double discount, const PathDomain& dom,
                          const BrownianIncrements* table = nullptr, std::uint32_t stream = 0) {
    check_mc(mc);
    if (!(t > 0.0)) throw ValidationError("feynman_kac_apply: sub-horizon must be positive");
    if (!(discount >= 0.0)) throw ValidationError("feynman_kac_apply: discount must be nonnegative");
    const std::size_t d = c.d(), m = c.m();
    const std::size_t n_steps = mc.n_steps_for(t);
    const bool deterministic = driftless_noise(c.sigma(), c.has_volatility());
    const std::size_t n_paths = deterministic ? 1 : mc.n_paths;
    if (table && !deterministic && (table->n_paths() < n_paths || table->n_steps() < n_steps || table->m() != m))
        throw ValidationError("feynman_kac_apply: increment table too small");
    const double dt = t / static_cast<double>(n_steps);
    const double sqdt = std::sqrt(dt);
    const std::size_t n_nodes = grid.n_space();

    FKSlice out;
    out.values.assign(n_nodes * out_dim, 0.0);
    out.std_err.assign(n_nodes * out_dim, 0.0);
    std::vector<std::size_t> events(n_nodes, 0);
    const std::size_t workers = std::min(resolve_threads(mc.threads), std::max<std::size_t>(1, n_nodes));
    std::vector<std::vector<double>> bufs(workers, std::vector<double>(n_paths * out_dim));
    std::vector<double> disc(n_steps + 1);
    for (std::size_t j = 0; j <= n_steps; ++j) disc[j] = std::exp(-discount * static_cast<double>(j) * dt);

    parallel_for(n_nodes, workers, [&](std::size_t lo, std::size_t hi, std::size_t w) {
        auto& buf = bufs[w];
        std::array<double, kMaxDim> x0{}, p0{}, x{}, p{}, z{}, term{};
        FrozenSample fs;
        for (std::size_t s = lo; s < hi; ++s) {
            grid.node(s, x0.data(), p0.data());
            std::size_t ev = 0;
            for (std::size_t k = 0; k < n_paths; ++k) {
                NormalSource src(deterministic ? nullptr : table, mc.seed, stream, k);
                x = x0;
                p = p0;
                std::array<double, kMaxDim> acc{};
                for (std::size_t j = 0; j < n_steps; ++j) {
                    const double sj = static_cast<double>(j) * dt;
                    c.eval(t - sj, x.data(), p.data(), fs);
                    if (!detail::finite_n(fs.bx.data(), d) || !detail::finite_n(fs.bp.data(), m) ||
                        !detail::finite_n(fs.a.data(), out_dim))
                        detail::non_finite(sj, x.data(), d, p.data(), m);
                    for (std::size_t i = 0; i < out_dim; ++i) acc[i] += disc[j] * fs.a[i] * dt;
                    if (!deterministic)
                        for (std::size_t i = 0; i < m; ++i) z[i] = src.next();
                    if (euler_step(c, fs, dt, sqdt, x.data(), p.data(), z.data(), dom)) ++ev;
                }
                terminal(x.data(), p.data(), term.data());
                for (std::size_t i = 0; i < out_dim; ++i) {
                    const double v = acc[i] + disc[n_steps] * term[i];
                    if (!std::isfinite(v))
                        throw NonFiniteError("non-finite Feynman-Kac accumulation at node " +
                                             format_vector(std::span<const double>(x0.data(), d)) + ", " +
                                             format_vector(std::span<const double>(p0.data(), m)));
                    buf[i * n_paths + k] = v;
                }
            }
            for (std::size_t i = 0; i < out_dim; ++i) {
                double mean, se;
                detail::mean_se(std::span<double>(buf.data() + i * n_paths, n_paths), mean, se);
                out.values[s * out_dim + i] = mean;
                out.std_err[s * out_dim + i] = se;
            }
            events[s] = ev;
        }
    });
    for (std::size_t e : events) out.clamp_events += e;
    out.steps = n_nodes * n_paths * n_steps;
    return out;
}

/// Specialization for F = G = b = 0 without volatility: X stays put and
/// p_t = p_0 + sqrt(2 sigma) W_t. Each path's partial sums are computed once
/// and shared by all nodes; paths whose partial sums would leave the p-box
/// from a given node are re-simulated stepwise with projection.
template <class Terminal>
std::vector<FKSlice> feynman_kac_pure_diffusion(const Terminal& terminal, const std::vector<double>& horizons,
                                                const Grid& grid, std::size_t out_dim, double sigma,
                                                const MonteCarloConfig& mc, double discount, const Box& p_clamp,
                                                std::uint32_t stream = 0) {
    check_mc(mc);
    const std::size_t m = grid.m(), d = grid.d();
    const std::size_t nh = horizons.size();
    const bool deterministic = sigma == 0.0;
    const std::size_t n_paths = deterministic ? 1 : mc.n_paths;
    std::vector<std::size_t> nsteps(nh);
    std::vector<double> amp(nh);
    std::size_t max_steps = 0;
    for (std::size_t h = 0; h < nh; ++h) {
        if (!(horizons[h] > 0.0)) throw ValidationError("pure diffusion: horizons must be positive");
        nsteps[h] = mc.n_steps_for(horizons[h]);
        amp[h] = std::sqrt(2.0 * sigma * horizons[h] / static_cast<double>(nsteps[h]));
        max_steps = std::max(max_steps, nsteps[h]);
    }
    // per path, per horizon, per coordinate: (sum, min partial sum, max partial sum)
    std::vector<double> stats(n_paths * nh * m * 3, 0.0);
    if (!deterministic) {
        parallel_for(n_paths, mc.threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
            std::vector<double> sum(m), mn(m), mx(m);
            for (std::size_t k = lo; k < hi; ++k) {
                NormalStream ns(mc.seed, stream, k);
                std::fill(sum.begin(), sum.end(), 0.0);
                std::fill(mn.begin(), mn.end(), 0.0);
                std::fill(mx.begin(), mx.end(), 0.0);
                std::size_t done = 0;
                std::vector<std::size_t> order(nh);
                for (std::size_t h = 0; h < nh; ++h) order[h] = h;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nsteps[a] < nsteps[b]; });
                for (std::size_t h : order) {
                    for (; done < nsteps[h]; ++done)
                        for (std::size_t i = 0; i < m; ++i) {
                            sum[i] += ns.next();
                            mn[i] = std::min(mn[i], sum[i]);
                            mx[i] = std::max(mx[i], sum[i]);
                        }
                    double* st = stats.data() + ((k * nh + h) * m) * 3;
                    for (std::size_t i = 0; i < m; ++i) {
                        st[3 * i] = sum[i];
                        st[3 * i + 1] = mn[i];
                        st[3 * i + 2] = mx[i];
                    }
                }
            }
        });
    }
    const std::size_t n_nodes = grid.n_space();
    std::vector<FKSlice> res(nh);
    for (auto& r : res) {
        r.values.assign(n_nodes * out_dim, 0.0);
        r.std_err.assign(n_nodes * out_dim, 0.0);
    }
    std::vector<std::size_t> events(nh * n_nodes, 0);
    const std::size_t workers = std::min(resolve_threads(mc.threads), std::max<std::size_t>(1, n_nodes));
    std::vector<std::vector<double>> bufs(workers, std::vector<double>(n_paths * out_dim));
    parallel_for(n_nodes, workers, [&](std::size_t lo, std::size_t hi, std::size_t w) {
        auto& buf = bufs[w];
        std::array<double, kMaxDim> x0{}, p0{}, p{}, term{};
        for (std::size_t s = lo; s < hi; ++s) {
            grid.node(s, x0.data(), p0.data());
            for (std::size_t h = 0; h < nh; ++h) {
                const double df = std::exp(-discount * horizons[h]);
                std::size_t ev = 0;
                for (std::size_t k = 0; k < n_paths; ++k) {
                    const double* st = stats.data() + ((k * nh + h) * m) * 3;
                    bool inside = true;
                    for (std::size_t i = 0; i < m; ++i) {
                        p[i] = p0[i] + amp[h] * st[3 * i];
                        if (p0[i] + amp[h] * st[3 * i + 1] < p_clamp.lo[i] ||
                            p0[i] + amp[h] * st[3 * i + 2] > p_clamp.hi[i])
                            inside = false;
                    }
                    if (!inside) {
                        NormalStream ns(mc.seed, stream, k);
                        p = p0;
                        for (std::size_t j = 0; j < nsteps[h]; ++j) {
                            for (std::size_t i = 0; i < m; ++i) p[i] += amp[h] * ns.next();
                            if (p_clamp.clamp(std::span<double>(p.data(), m))) ++ev;
                        }
                    }
                    terminal(x0.data(), p.data(), term.data());
                    for (std::size_t i = 0; i < out_dim; ++i) buf[i * n_paths + k] = df * term[i];
                }
                for (std::size_t i = 0; i < out_dim; ++i) {
                    double mean, se;
                    detail::mean_se(std::span<double>(buf.data() + i * n_paths, n_paths), mean, se);
                    if (!std::isfinite(mean))
                        throw NonFiniteError("non-finite Feynman-Kac accumulation at node " +
                                             format_vector(std::span<const double>(x0.data(), d)));
                    res[h].values[s * out_dim + i] = mean;
                    res[h].std_err[s * out_dim + i] = se;
                }
                events[h * n_nodes + s] = ev;
            }
        }
    });
    for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t s = 0; s < n_nodes; ++s) res[h].clamp_events += events[h * n_nodes + s];
        res[h].steps = n_nodes * n_paths * nsteps[h];
    }
    return res;
}

}  // namespace mfgnoise
