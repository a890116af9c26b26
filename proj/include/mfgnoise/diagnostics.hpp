#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "core.hpp"
#include "problem.hpp"
#include "solver.hpp"
#include "value_field.hpp"

namespace mfgnoise {

/// Per-time-node Jacobian operator norms in x and p.
inline std::vector<GradRecord> grad_norms(const ValueField& field) {
    if (field.n_times() == 0) throw ValidationError("grad_norms: empty field");
    const Grid& g = field.grid();
    if (g.n_x < 2 || g.n_p < 2) throw ValidationError("grad_norms: grid needs at least two nodes per axis");
    std::vector<GradRecord> out;
    out.reserve(field.n_times());
    for (std::size_t k = 0; k < field.n_times(); ++k) {
        const auto sg = slice_gradient(field, k);
        out.push_back({field.times()[k], sg.dx_norm, sg.dp_norm});
    }
    return out;
}

struct BetaSchedule {
    double beta0 = 0.5;
    double lambda_beta = 0.0;
    double operator()(double t) const { return beta0 * std::exp(-lambda_beta * t); }
};

/// lambda* = |D_x G|^2 + 2 |D_x F| from a Lipschitz table.
inline double lambda_beta_star(const ValidationReport& lip) {
    if (lip.lipschitz_table.empty()) throw ValidationError("lambda_beta_star: Lipschitz table missing");
    const double g = lip.lipschitz("G", Block::X);
    return g * g + 2.0 * lip.lipschitz("F", Block::X);
}

struct BoundCurves {
    double alpha = 0.0;
    double horizon = 0.0;
    BetaSchedule beta;
    double dx_cap = 0.0;
    double lambda_a = 0.0;
    bool coupled = false;
    double autonomous_c = 0.5;  // shape-only constant, normalized at t = 0
    std::vector<double> t, dx_value, dp_value, dx_bound, dp_bound_coupled, dp_bound_autonomous;

    const std::vector<double>& dp_bound() const { return coupled ? dp_bound_coupled : dp_bound_autonomous; }
};

inline double largest_eigenvalue(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    return es.eigenvalues().maxCoeff();
}

inline BoundCurves bound_curves(double alpha, const std::optional<Eigen::MatrixXd>& a, double horizon,
                                const std::vector<GradRecord>& history, const ValidationReport& lip) {
    if (!(alpha > 0.0)) throw ValidationError("bound_curves: alpha must be positive");
    BoundCurves bc;
    bc.alpha = alpha;
    bc.horizon = horizon;
    bc.beta = {alpha / 2.0, lambda_beta_star(lip)};
    bc.dx_cap = 2.0 / alpha * std::exp(bc.beta.lambda_beta * horizon);
    bc.coupled = a.has_value();
    if (a) bc.lambda_a = largest_eigenvalue(*a);
    if (!history.empty() && history.front().dp_norm > 0.0) bc.autonomous_c = history.front().dp_norm / 2.0;
    double sup_dx = 0.0;
    for (const auto& r : history) {
        sup_dx = std::max(sup_dx, r.dx_norm);
        bc.t.push_back(r.t);
        bc.dx_value.push_back(r.dx_norm);
        bc.dp_value.push_back(r.dp_norm);
        bc.dx_bound.push_back(1.0 / bc.beta(r.t));
        bc.dp_bound_coupled.push_back(2.0 * std::sqrt(r.dx_norm * bc.lambda_a));
        bc.dp_bound_autonomous.push_back(bc.autonomous_c * (1.0 + std::exp(r.t * sup_dx)));
    }
    return bc;
}

inline BoundCurves bound_curves(const ProblemSpec& spec, double alpha, const std::optional<Eigen::MatrixXd>& a,
                                double horizon, const std::vector<GradRecord>& history) {
    ValidationReport lip;
    lip.lipschitz_table = lipschitz_table(spec);
    return bound_curves(alpha, a, horizon, history, lip);
}

struct BoundViolation {
    std::string curve;
    double t, value, bound;
};

/// dx against 1/beta and, for coupled runs, dp against 2 sqrt(dx lambda_A);
/// the autonomous dp curve is shape-only and never asserted.
inline std::vector<BoundViolation> check_bounds(const BoundCurves& bc, double eps) {
    std::vector<BoundViolation> v;
    for (std::size_t k = 0; k < bc.t.size(); ++k) {
        if (!(bc.dx_value[k] <= bc.dx_bound[k] + eps)) v.push_back({"dx", bc.t[k], bc.dx_value[k], bc.dx_bound[k]});
        if (bc.coupled && !(bc.dp_value[k] <= bc.dp_bound_coupled[k] + eps))
            v.push_back({"dp", bc.t[k], bc.dp_value[k], bc.dp_bound_coupled[k]});
    }
    return v;
}

// ---------------------------------------------------------------------------

struct ZSample {
    double t = 0.0;
    std::vector<double> x, y, p, q;
    double z_value = std::numeric_limits<double>::infinity();
    double inner = 0.0;      // <U(x,p) - U(y,q), x - y>
    double quadratic = 0.0;  // <p - q, A (p - q)>
    double beta_term = 0.0;  // -beta(t) |U(x,p) - U(y,q)|^2
};

struct HistogramBin {
    double lo, hi;
    std::size_t count;
};

struct ZReport {
    ZSample min;
    std::vector<HistogramBin> histogram;
    std::size_t n_samples = 0;
};

struct ZConfig {
    std::size_t n_samples = 100000;
    std::uint64_t seed = 1;
    bool autonomous = false;  // q = p
    std::size_t bins = 40;
    std::size_t threads = 1;
};

inline ZSample z_value_at(const ValueField& f, const Eigen::MatrixXd& a, const BetaSchedule& beta, double t,
                          const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& p,
                          const std::vector<double>& q) {
    const std::size_t od = f.out_dim(), m = p.size();
    std::array<double, kMaxDim> ux{}, uy{};
    f.evaluate_extended(t, x.data(), p.data(), ux.data());
    f.evaluate_extended(t, y.data(), q.data(), uy.data());
    ZSample z{t, x, y, p, q};
    double du2 = 0.0;
    for (std::size_t i = 0; i < od; ++i) {
        const double du = ux[i] - uy[i];
        z.inner += du * (x[i] - y[i]);
        du2 += du * du;
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            z.quadratic += (p[i] - q[i]) * a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (p[j] - q[j]);
    z.beta_term = -beta(t) * du2;
    z.z_value = z.inner + z.quadratic + z.beta_term;
    return z;
}

/// Samples Z on (t, x, y, p, q): half lattice tuples on the field's own nodes,
/// half uniform in the field's domain.
inline ZReport z_monitor(const ValueField& f, const Eigen::MatrixXd& a, const BetaSchedule& beta, const ZConfig& cfg) {
    if (cfg.n_samples == 0) throw ValidationError("z_monitor: n_samples must be at least 1");
    const Grid& g = f.grid();
    const std::size_t d = g.d(), m = g.m();
    if (static_cast<std::size_t>(a.rows()) != m || static_cast<std::size_t>(a.cols()) != m)
        throw ValidationError("z_monitor: A must be m x m");
    if (f.out_dim() != d) throw ValidationError("z_monitor: field must take values in R^d");
    struct Draw {
        double t;
        std::vector<double> x, y, p, q;
    };
    std::vector<Draw> draws(cfg.n_samples);
    UniformStream rng(cfg.seed, 0x5au);
    const auto& times = f.times();
    for (std::size_t k = 0; k < cfg.n_samples; ++k) {
        Draw& dr = draws[k];
        dr.x.resize(d);
        dr.y.resize(d);
        dr.p.resize(m);
        dr.q.resize(m);
        if (k % 2 == 0) {
            dr.t = times[rng.index(times.size())];
            for (std::size_t i = 0; i < d; ++i) {
                dr.x[i] = g.x_node(i, rng.index(g.n_x));
                dr.y[i] = g.x_node(i, rng.index(g.n_x));
            }
            for (std::size_t i = 0; i < m; ++i) {
                dr.p[i] = g.p_node(i, rng.index(g.n_p));
                dr.q[i] = g.p_node(i, rng.index(g.n_p));
            }
        } else {
            dr.t = rng.uniform(times.front(), times.back());
            for (std::size_t i = 0; i < d; ++i) {
                dr.x[i] = rng.uniform(g.omega.lo[i], g.omega.hi[i]);
                dr.y[i] = rng.uniform(g.omega.lo[i], g.omega.hi[i]);
            }
            for (std::size_t i = 0; i < m; ++i) {
                dr.p[i] = rng.uniform(g.p_box.lo[i], g.p_box.hi[i]);
                dr.q[i] = rng.uniform(g.p_box.lo[i], g.p_box.hi[i]);
            }
        }
        if (cfg.autonomous) dr.q = dr.p;
    }
    std::vector<double> z(cfg.n_samples);
    parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t k = lo; k < hi; ++k) {
            const auto& dr = draws[k];
            z[k] = z_value_at(f, a, beta, dr.t, dr.x, dr.y, dr.p, dr.q).z_value;
        }
    });
    ZReport rep;
    rep.n_samples = cfg.n_samples;
    std::size_t arg = 0;
    double zmin = z[0], zmax = z[0];
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (!std::isfinite(z[k])) throw NonFiniteError("z_monitor: non-finite Z value");
        if (z[k] < zmin) {
            zmin = z[k];
            arg = k;
        }
        zmax = std::max(zmax, z[k]);
    }
    const auto& dr = draws[arg];
    rep.min = z_value_at(f, a, beta, dr.t, dr.x, dr.y, dr.p, dr.q);
    const std::size_t nb = std::max<std::size_t>(1, cfg.bins);
    const double width = zmax > zmin ? (zmax - zmin) / static_cast<double>(nb) : 1.0;
    rep.histogram.resize(nb);
    for (std::size_t b = 0; b < nb; ++b)
        rep.histogram[b] = {zmin + width * static_cast<double>(b), zmin + width * static_cast<double>(b + 1), 0};
    for (double v : z) {
        auto b = static_cast<std::size_t>((v - zmin) / width);
        ++rep.histogram[std::min(b, nb - 1)].count;
    }
    return rep;
}

// ---------------------------------------------------------------------------

struct UniquenessReport {
    double discrepancy = 0.0;
    double seed_discrepancy = 0.0;        // among the seed reruns
    double refinement_discrepancy = 0.0;  // base grid vs refined grid, base seed
    double max_std_err = 0.0;             // over all runs
    std::vector<std::uint64_t> seeds;
};

/// Reruns the solve with n_runs seeds on the base grid and once on the grid
/// refined to 2n-1 nodes per axis; compares final slices on the base nodes.
inline UniquenessReport uniqueness_probe(const ProblemSpec& spec, const GridConfig& gc, const MonteCarloConfig& mc,
                                         const ContinuationConfig& ctrl, std::size_t n_runs,
                                         std::uint64_t perturbation = 1) {
    if (n_runs == 0) throw ValidationError("uniqueness_probe: n_runs must be at least 1");
    UniquenessReport rep;
    std::vector<SolveResult> runs;
    std::string bad;
    auto run = [&](const GridConfig& g, std::uint64_t seed) {
        MonteCarloConfig m = mc;
        m.seed = seed;
        auto r = picard_solve(spec, g, m, ctrl);
        if (r.status != SolveStatus::Converged)
            bad += " seed " + std::to_string(seed) + " (" + std::to_string(g.n_x) + " nodes): " + status_name(r.status) + ";";
        rep.max_std_err = std::max(rep.max_std_err, r.max_std_err);
        return r;
    };
    for (std::size_t k = 0; k < n_runs; ++k) {
        const std::uint64_t seed = mc.seed + k * perturbation;
        rep.seeds.push_back(seed);
        runs.push_back(run(gc, seed));
    }
    GridConfig fine = gc;
    fine.n_x = 2 * gc.n_x - 1;
    fine.n_p = 2 * gc.n_p - 1;
    SolveResult refined = run(fine, mc.seed);
    if (!bad.empty()) throw Error("uniqueness_probe: runs did not converge:" + bad);

    const ValueField& base = runs.front().field;
    const Grid& g = base.grid();
    const std::size_t od = base.out_dim(), kb = base.n_times() - 1;
    auto final_diff = [&](const ValueField& other, bool refined_grid) {
        const std::size_t ko = other.n_times() - 1;
        double mx = 0.0;
        std::vector<std::size_t> idx(g.d() + g.m());
        for (std::size_t s = 0; s < g.n_space(); ++s) {
            std::size_t so = s;
            if (refined_grid) {
                g.multi_index(s, idx.data());
                for (auto& i : idx) i *= 2;
                so = other.grid().flat(idx.data());
            }
            for (std::size_t i = 0; i < od; ++i)
                mx = std::max(mx, std::abs(base.at(kb, s, i) - other.at(ko, so, i)));
        }
        return mx;
    };
    for (std::size_t a = 0; a < runs.size(); ++a)
        for (std::size_t b = a + 1; b < runs.size(); ++b) {
            // all seed runs live on the same grid; compare a against b
            const ValueField& fa = runs[a].field;
            const ValueField& fb = runs[b].field;
            const std::size_t ka = fa.n_times() - 1, kbb = fb.n_times() - 1;
            for (std::size_t s = 0; s < g.n_space(); ++s)
                for (std::size_t i = 0; i < od; ++i)
                    rep.seed_discrepancy =
                        std::max(rep.seed_discrepancy, std::abs(fa.at(ka, s, i) - fb.at(kbb, s, i)));
        }
    rep.refinement_discrepancy = final_diff(refined.field, true);
    rep.discrepancy = std::max(rep.seed_discrepancy, rep.refinement_discrepancy);
    return rep;
}

// ---------------------------------------------------------------------------
// CSV output. Numbers use %.17g so that files round-trip bit for bit.

inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_bounds_csv(std::ostream& os, const BoundCurves& bc) {
    os << "t,dx_norm,dp_norm,dx_bound,dp_bound\n";
    const auto& dp = bc.dp_bound();
    for (std::size_t k = 0; k < bc.t.size(); ++k)
        os << fmt_num(bc.t[k]) << ',' << fmt_num(bc.dx_value[k]) << ',' << fmt_num(bc.dp_value[k]) << ','
           << fmt_num(bc.dx_bound[k]) << ',' << fmt_num(dp[k]) << '\n';
}

inline void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& h) {
    os << "bin_lo,bin_hi,count\n";
    for (const auto& b : h) os << fmt_num(b.lo) << ',' << fmt_num(b.hi) << ',' << b.count << '\n';
}

inline void write_grad_csv(std::ostream& os, const std::vector<GradRecord>& g) {
    os << "t,dx_norm,dp_norm\n";
    for (const auto& r : g) os << fmt_num(r.t) << ',' << fmt_num(r.dx_norm) << ',' << fmt_num(r.dp_norm) << '\n';
}

inline void write_residual_csv(std::ostream& os, const std::vector<ResidualRecord>& rs) {
    os << "window,t_start,t_end,iteration,residual\n";
    for (const auto& r : rs)
        os << r.window << ',' << fmt_num(r.t_start) << ',' << fmt_num(r.t_end) << ',' << r.iteration << ','
           << fmt_num(r.residual) << '\n';
}

}  // namespace mfgnoise
