#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "feynman_kac.hpp"
#include "paths.hpp"
#include "problem.hpp"
#include "value_field.hpp"

namespace mfgnoise {

struct GridConfig {
    std::size_t n_x = 17;
    std::size_t n_p = 17;
    std::size_t time_nodes_per_window = 2;
};

struct ContinuationConfig {
    double window = 0.0;      // 0: min(T, 0.25 / (1 + L0))
    double min_window = 0.0;  // 0: 1e-6 T
    double tol = 1e-6;
    std::size_t max_iter = 50;
    double lip_max = 0.0;  // 0: 1e3 (1 + |D U0|)
    double damping = 0.0;
    bool force = false;
    /// Later windows scale with (1 + Lip0) / (1 + Lip_k) of the current slice.
    bool adaptive = true;
    /// When b ignores (x,u), evaluate B2 = b(p) directly instead of through the iterate.
    bool autonomous_psi = true;
    std::size_t max_windows = 100000;
};

enum class SolveStatus { Converged, BlowUp, MaxIterations };

inline const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "Converged";
        case SolveStatus::BlowUp: return "BlowUp";
        case SolveStatus::MaxIterations: return "MaxIterations";
    }
    return "?";
}

struct ResidualRecord {
    std::size_t window;
    double t_start, t_end;
    std::size_t iteration;
    double residual;
};

struct GradRecord {
    double t;
    double dx_norm;
    double dp_norm;
};

struct SolveResult {
    ValueField field;
    SolveStatus status = SolveStatus::Converged;
    std::optional<double> blowup_time;
    std::vector<ResidualRecord> picard_residuals;
    std::vector<GradRecord> grad_history;
    double clamp_rate = 0.0;
    double max_std_err = 0.0;
    double initial_window = 0.0;
    double lip_max = 0.0;
    std::size_t windows = 0;
    bool direct_mode = false;
    std::vector<std::string> warnings;

    double last_residual() const { return picard_residuals.empty() ? 0.0 : picard_residuals.back().residual; }
};

inline void check_grid(const GridConfig& g) {
    if (g.n_x < 2 || g.n_p < 2) throw ValidationError("grid needs at least 2 nodes per axis");
    if (g.time_nodes_per_window == 0) throw ValidationError("time_nodes_per_window must be positive");
}

inline void check_ctrl(const ContinuationConfig& c) {
    if (!(c.window >= 0.0) || !(c.min_window >= 0.0)) throw ValidationError("window lengths must be nonnegative");
    if (!(c.tol > 0.0)) throw ValidationError("tol must be positive");
    if (c.max_iter == 0) throw ValidationError("max_iter must be positive");
    if (!(c.lip_max >= 0.0)) throw ValidationError("lip_max must be nonnegative");
    if (!(c.damping >= 0.0 && c.damping < 1.0)) throw ValidationError("damping must lie in [0, 1)");
}

/// F, G, b (and the volatility) frozen along an iterate U_n.
/// tau is measured from the window start t0.
struct IterateCoefficients {
    const ProblemSpec* spec;
    const ValueField* iterate;  // nullptr when the coefficients ignore u
    double t0 = 0.0;
    bool autonomous_b = false;

    std::size_t d() const { return spec->d; }
    std::size_t m() const { return spec->m; }
    double sigma() const { return spec->sigma; }
    bool has_volatility() const { return spec->volatility.has_value(); }

    void eval(double tau, const double* x, const double* p, FrozenSample& out) const {
        std::array<double, kMaxDim> u{};
        if (iterate) iterate->evaluate_extended(t0 + tau, x, p, u.data());
        spec->f_coef.evaluate(x, p, u.data(), out.bx.data());
        spec->g_coef.evaluate(x, p, u.data(), out.a.data());
        if (autonomous_b) {
            static const std::array<double, kMaxDim> zero{};
            spec->b_coef.evaluate(zero.data(), p, zero.data(), out.bp.data());
        } else {
            spec->b_coef.evaluate(x, p, u.data(), out.bp.data());
        }
        if (spec->volatility) spec->volatility->evaluate(x, p, u.data(), out.vol.data());
    }
};

namespace detail {

inline ValueField initial_slice(const ProblemSpec& s, const Grid& g) {
    ValueField f({0.0}, g, s.d);
    std::array<double, kMaxDim> x{}, p{};
    for (std::size_t n = 0; n < g.n_space(); ++n) {
        g.node(n, x.data(), p.data());
        s.u0.evaluate(x.data(), p.data(), nullptr, f.slice(0) + n * s.d);
    }
    return f;
}

/// Collects slices in time order and assembles the final field.
struct SliceStore {
    std::vector<double> times;
    std::vector<std::vector<double>> slices;

    void push(double t, const double* v, std::size_t n) {
        times.push_back(t);
        slices.emplace_back(v, v + n);
    }

    ValueField build(const Grid& g, std::size_t d) const {
        ValueField f(times, g, d);
        for (std::size_t k = 0; k < slices.size(); ++k) std::copy(slices[k].begin(), slices[k].end(), f.slice(k));
        return f;
    }
};

inline constexpr std::size_t kIncrementTableCap = std::size_t{1} << 22;

}  // namespace detail

/// Lipschitz solution U = psi~(t, G(.,U), F(.,U), b(.,U), U0) by Picard
/// iteration on consecutive time windows.
inline SolveResult picard_solve(const ProblemSpec& spec, const GridConfig& gc, const MonteCarloConfig& mc,
                                const ContinuationConfig& ctrl) {
    check_well_formed(spec);
    check_grid(gc);
    check_mc(mc);
    check_ctrl(ctrl);
    if (!ctrl.force) {
        const auto rep = validate_problem(spec, 256, 0);
        if (!rep.passed) {
            const auto& v = rep.boundary_violations.front();
            throw ValidationError("problem '" + spec.name + "' fails the boundary invariance check (" +
                                  std::to_string(rep.boundary_violations.size()) + " violations, first at x=" +
                                  format_vector(v.x) + ", flux " + std::to_string(v.inward_flux) +
                                  "); pass force to solve anyway");
        }
    }

    const double T = spec.horizon;
    const Grid grid(spec.omega, gc.n_x, spec.p_box, gc.n_p);
    const PathDomain dom{spec.clamp_x_box(), spec.buffered_p_box()};
    const std::size_t d = spec.d, K = gc.time_nodes_per_window;
    const std::size_t slice_n = grid.n_space() * d;

    SolveResult res;
    res.lip_max = ctrl.lip_max > 0.0 ? ctrl.lip_max : 1e3 * (1.0 + u0_lipschitz(spec));
    const double L0 = coefficient_lipschitz(spec);
    const double w0 = ctrl.window > 0.0 ? std::min(ctrl.window, T) : std::min(T, 0.25 / (1.0 + L0));
    const double min_window = ctrl.min_window > 0.0 ? ctrl.min_window : 1e-6 * T;
    res.initial_window = w0;

    ValueField start = detail::initial_slice(spec, grid);
    detail::SliceStore store;
    store.push(0.0, start.slice(0), slice_n);

    std::size_t total_events = 0, total_steps = 0;
    auto account = [&](const FKSlice& s) {
        total_events += s.clamp_events;
        total_steps += s.steps;
        res.max_std_err = std::max(res.max_std_err, s.max_std_err());
    };
    const bool stochastic = spec.stochastic();

    if (spec.iterate_independent()) {
        // The Picard map does not depend on the iterate: every slice is
        // psi~(t, ..., U0) computed from time 0.
        res.direct_mode = true;
        const double w = ctrl.window > 0.0 ? std::min(ctrl.window, T) : T;
        std::vector<double> horizons;
        std::vector<std::pair<double, double>> wins;
        for (double t0 = 0.0; t0 < T * (1.0 - 1e-12);) {
            double h = std::min(w, T - t0);
            if (T - t0 - h < 1e-9 * T) h = T - t0;
            wins.push_back({t0, t0 + h});
            for (std::size_t k = 1; k <= K; ++k)
                horizons.push_back(k == K ? t0 + h : t0 + h * static_cast<double>(k) / static_cast<double>(K));
            t0 += h;
        }
        MonteCarloConfig m2 = mc;
        m2.seed = derive_seed(mc.seed, 0);
        auto terminal = [&](const double* x, const double* p, double* out) { spec.u0.evaluate(x, p, nullptr, out); };
        std::vector<FKSlice> slices;
        if (spec.pure_diffusion()) {
            slices = feynman_kac_pure_diffusion(terminal, horizons, grid, d, spec.sigma, m2, spec.discount, dom.p_box);
        } else {
            IterateCoefficients c{&spec, nullptr, 0.0, ctrl.autonomous_psi && spec.b_autonomous()};
            std::unique_ptr<BrownianIncrements> table;
            std::size_t max_steps = 0;
            for (double h : horizons) max_steps = std::max(max_steps, m2.n_steps_for(h));
            if (stochastic && m2.n_paths * max_steps * spec.m <= detail::kIncrementTableCap)
                table = std::make_unique<BrownianIncrements>(m2.seed, 0, m2.n_paths, max_steps, spec.m, m2.threads);
            for (double h : horizons)
                slices.push_back(feynman_kac_apply(c, terminal, h, grid, d, m2, spec.discount, dom, table.get()));
        }
        std::size_t hk = 0;
        for (std::size_t wi = 0; wi < wins.size(); ++wi) {
            const std::size_t first_slice = store.slices.size() - 1;
            double r = 0.0;
            for (std::size_t k = 0; k < K; ++k, ++hk) {
                account(slices[hk]);
                for (std::size_t i = 0; i < slice_n; ++i)
                    r = std::max(r, std::abs(slices[hk].values[i] - store.slices[first_slice][i]));
                store.push(horizons[hk], slices[hk].values.data(), slice_n);
            }
            res.picard_residuals.push_back({wi, wins[wi].first, wins[wi].second, 1, r});
            res.picard_residuals.push_back({wi, wins[wi].first, wins[wi].second, 2, 0.0});
            ++res.windows;
        }
        res.field = store.build(grid, d);
        // blow-up scan in time order
        for (std::size_t k = 0; k < res.field.n_times(); ++k) {
            if (slice_gradient(res.field, k).joint > res.lip_max) {
                res.status = SolveStatus::BlowUp;
                res.blowup_time = res.field.times()[k == 0 ? 0 : k - 1];
                std::vector<double> times(res.field.times().begin(), res.field.times().begin() + static_cast<long>(k));
                if (times.empty()) times.push_back(0.0);
                detail::SliceStore trimmed;
                for (std::size_t j = 0; j < times.size(); ++j) trimmed.push(times[j], res.field.slice(j), slice_n);
                res.field = trimmed.build(grid, d);
                break;
            }
        }
    } else {
        const double lip0 = slice_gradient(start, 0).joint;
        double t0 = 0.0;
        double scale = 1.0;
        std::size_t wi = 0;
        while (t0 < T * (1.0 - 1e-12)) {
            if (wi >= ctrl.max_windows) {
                res.status = SolveStatus::MaxIterations;
                res.warnings.push_back("window budget exhausted at t=" + std::to_string(t0));
                break;
            }
            const double lip = slice_gradient(start, 0).joint;
            if (!std::isfinite(lip) || lip > res.lip_max) {
                res.status = SolveStatus::BlowUp;
                res.blowup_time = t0;
                break;
            }
            double h = ctrl.adaptive ? w0 * scale * (1.0 + lip0) / (1.0 + lip) : w0 * scale;
            h = std::min({h, w0, T - t0});
            if (T - t0 - h < 1e-9 * T) h = T - t0;

            bool window_done = false;
            while (!window_done) {
                if (h < min_window) {
                    res.status = SolveStatus::BlowUp;
                    res.blowup_time = t0;
                    break;
                }
                std::vector<double> times{t0};
                for (std::size_t k = 1; k <= K; ++k)
                    times.push_back(k == K ? t0 + h : t0 + h * static_cast<double>(k) / static_cast<double>(K));
                ValueField local(times, grid, d);
                for (std::size_t k = 0; k <= K; ++k) std::copy(start.slice(0), start.slice(0) + slice_n, local.slice(k));
                MonteCarloConfig m2 = mc;
                m2.seed = derive_seed(mc.seed, wi);
                std::unique_ptr<BrownianIncrements> table;
                const std::size_t max_steps = m2.n_steps_for(h);
                if (stochastic && m2.n_paths * max_steps * spec.m <= detail::kIncrementTableCap)
                    table = std::make_unique<BrownianIncrements>(m2.seed, 0, m2.n_paths, max_steps, spec.m, m2.threads);
                IterateCoefficients c{&spec, &local, t0, ctrl.autonomous_psi && spec.b_autonomous()};
                auto terminal = [&](const double* x, const double* p, double* out) { start.space_eval(0, x, p, out); };

                std::vector<ResidualRecord> trace;
                double prev = std::numeric_limits<double>::infinity();
                int increases = 0;
                bool diverged = false, converged = false;
                std::vector<FKSlice> last(K);
                for (std::size_t it = 1; it <= ctrl.max_iter; ++it) {
                    std::vector<FKSlice> next(K);
                    try {
                        for (std::size_t k = 1; k <= K; ++k)
                            next[k - 1] = feynman_kac_apply(c, terminal, times[k] - t0, grid, d, m2, spec.discount, dom,
                                                            table.get());
                    } catch (const NonFiniteError&) {
                        diverged = true;
                        break;
                    }
                    double r = 0.0;
                    for (std::size_t k = 1; k <= K; ++k)
                        for (std::size_t i = 0; i < slice_n; ++i) {
                            const double diff = std::abs(next[k - 1].values[i] - local.slice(k)[i]);
                            r = std::isnan(diff) ? diff : std::max(r, diff);
                        }
                    trace.push_back({wi, t0, t0 + h, it, r});
                    for (const auto& s : next) account(s);
                    if (!std::isfinite(r)) {
                        diverged = true;
                        break;
                    }
                    for (std::size_t k = 1; k <= K; ++k)
                        for (std::size_t i = 0; i < slice_n; ++i)
                            local.slice(k)[i] =
                                (1.0 - ctrl.damping) * next[k - 1].values[i] + ctrl.damping * local.slice(k)[i];
                    last = std::move(next);
                    if (r <= ctrl.tol) {
                        converged = true;
                        break;
                    }
                    increases = r > prev ? increases + 1 : 0;
                    prev = r;
                    if (increases >= 3) {
                        diverged = true;
                        break;
                    }
                }
                res.picard_residuals.insert(res.picard_residuals.end(), trace.begin(), trace.end());
                if (diverged) {
                    h *= 0.5;
                    scale *= 0.5;
                    res.warnings.push_back("Picard divergence on window starting at t=" + std::to_string(t0) +
                                           "; halving window to " + std::to_string(h));
                    continue;
                }
                for (std::size_t k = 1; k <= K; ++k) store.push(times[k], local.slice(k), slice_n);
                ++res.windows;
                ++wi;
                if (!converged) {
                    res.status = SolveStatus::MaxIterations;
                    res.warnings.push_back("residual plateau above tol on window starting at t=" + std::to_string(t0));
                }
                std::copy(local.slice(K), local.slice(K) + slice_n, start.slice(0));
                t0 = times[K];
                window_done = true;
            }
            if (!window_done || res.status == SolveStatus::MaxIterations) break;
        }
        res.field = store.build(grid, d);
    }

    res.clamp_rate = total_steps ? static_cast<double>(total_events) / static_cast<double>(total_steps) : 0.0;
    if (res.clamp_rate > 0.01)
        res.warnings.push_back("clamp rate " + std::to_string(res.clamp_rate) + " exceeds 1%");
    for (std::size_t k = 0; k < res.field.n_times(); ++k) {
        const auto g = slice_gradient(res.field, k);
        res.grad_history.push_back({res.field.times()[k], g.dx_norm, g.dp_norm});
    }
    return res;
}

}  // namespace mfgnoise
