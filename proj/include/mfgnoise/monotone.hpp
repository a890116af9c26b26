#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coefficient.hpp"
#include "core.hpp"
#include "problem.hpp"

namespace mfgnoise {

/// One sample (x, y, p, q, u, v) of a pairwise inequality.
struct Tuple {
    std::vector<double> x, y, p, q, u, v;
};

struct ConditionMargin {
    std::string name;
    double margin = std::numeric_limits<double>::infinity();
    Tuple witness;
};

struct MonotonicityReport {
    std::string hypothesis;
    bool passed = true;
    double margin = std::numeric_limits<double>::infinity();
    double alpha_used = 0.0;
    std::optional<Eigen::MatrixXd> a_matrix;
    Tuple witness;
    std::string witness_condition;
    std::vector<ConditionMargin> conditions;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double tolerance = 1e-9;
    std::string notes;
};

/// A named set of inequalities "LHS - RHS >= 0" over tuples.
struct Check {
    std::string hypothesis;
    double alpha = 0.0;
    std::optional<Eigen::MatrixXd> a_matrix;
    bool same_p = false;  // autonomous pairing: q = p
    struct Condition {
        std::string name;
        std::function<double(const Tuple&)> fn;
        bool reads_u = true;  // false: u and v do not enter
    };
    std::vector<Condition> conditions;
};

namespace detail {

inline std::vector<double> sub(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline double dotv(const std::vector<double>& a, const std::vector<double>& b) { return dot(a, b); }

inline std::vector<double> matvec(const Eigen::MatrixXd& a, const std::vector<double>& v) {
    std::vector<double> r(static_cast<std::size_t>(a.rows()), 0.0);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(i)] += a(i, j) * v[static_cast<std::size_t>(j)];
    return r;
}

inline std::vector<double> tmatvec(const Eigen::MatrixXd& a, const std::vector<double>& v) {
    return matvec(a.transpose(), v);
}

inline void sample_box(UniformStream& rng, const Box& b, std::vector<double>& out) {
    out.resize(b.dim());
    for (std::size_t i = 0; i < b.dim(); ++i) out[i] = rng.uniform(b.lo[i], b.hi[i]);
}

/// Pair on the lattice of g points per axis: either equal or neighbours along
/// one random axis.
inline void lattice_pair(UniformStream& rng, const Box& b, std::size_t g, std::vector<double>& a,
                         std::vector<double>& c) {
    const std::size_t n = b.dim();
    a.resize(n);
    c.resize(n);
    std::vector<std::size_t> ia(n);
    for (std::size_t i = 0; i < n; ++i) ia[i] = rng.index(g);
    std::vector<std::size_t> ic = ia;
    if (rng.next() < 0.75) {
        const std::size_t axis = rng.index(n);
        if (ic[axis] + 1 < g && (ic[axis] == 0 || rng.next() < 0.5)) ++ic[axis];
        else --ic[axis];
    }
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = lattice(b, i, ia[i], g);
        c[i] = lattice(b, i, ic[i], g);
    }
}

inline std::vector<Tuple> draw_tuples(const SamplerConfig& s, bool same_p) {
    if (s.n_samples == 0) throw ValidationError("sampler: n_samples must be at least 1");
    UniformStream rng(s.seed, 0x33u);
    std::vector<Tuple> out;
    out.reserve(s.n_samples * (s.include_grid_pairs ? 2 : 1));
    auto have = [](const Box& b) { return b.dim() > 0; };
    for (std::size_t k = 0; k < s.n_samples; ++k) {
        Tuple t;
        if (have(s.x_box)) {
            sample_box(rng, s.x_box, t.x);
            sample_box(rng, s.x_box, t.y);
        }
        if (have(s.p_box)) {
            sample_box(rng, s.p_box, t.p);
            if (same_p) t.q = t.p;
            else sample_box(rng, s.p_box, t.q);
        }
        if (have(s.u_box)) {
            sample_box(rng, s.u_box, t.u);
            sample_box(rng, s.u_box, t.v);
        }
        out.push_back(std::move(t));
    }
    if (s.include_grid_pairs) {
        const std::size_t g = std::max<std::size_t>(2, s.grid_points);
        for (std::size_t k = 0; k < s.n_samples; ++k) {
            Tuple t;
            // a tuple with every pair equal satisfies every inequality as 0 >= 0; redraw it
            for (int attempt = 0; attempt < 16; ++attempt) {
                if (have(s.x_box)) lattice_pair(rng, s.x_box, g, t.x, t.y);
                if (have(s.p_box)) {
                    lattice_pair(rng, s.p_box, g, t.p, t.q);
                    if (same_p) t.q = t.p;
                }
                if (have(s.u_box)) lattice_pair(rng, s.u_box, g, t.u, t.v);
                if (t.x != t.y || t.p != t.q || t.u != t.v) break;
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

inline std::vector<double> eval(const CoefficientField& f, const std::vector<double>& x,
                                const std::vector<double>& p, const std::vector<double>& u) {
    std::vector<double> out(f.out_dim());
    f.evaluate(x.data(), p.data(), u.data(), out.data());
    return out;
}

inline void check_symmetric_psd(const Eigen::MatrixXd& a, std::size_t m) {
    if (static_cast<std::size_t>(a.rows()) != m || static_cast<std::size_t>(a.cols()) != m)
        throw ValidationError("matrix A must be m x m");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ValidationError("matrix A must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) throw ValidationError("matrix A must be positive semidefinite");
}

}  // namespace detail

/// Evaluates every condition of `check` on the sampled tuples; the margin is
/// the minimum of LHS - RHS. Ties keep the earliest sample.
inline MonotonicityReport run_check(const Check& check, const SamplerConfig& sampler, double tolerance = 1e-9,
                                    std::size_t threads = 1) {
    const auto tuples = detail::draw_tuples(sampler, check.same_p);
    const std::size_t nc = check.conditions.size();
    std::vector<double> vals(tuples.size() * nc);
    parallel_for(tuples.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t k = lo; k < hi; ++k)
            for (std::size_t c = 0; c < nc; ++c) {
                const auto& cond = check.conditions[c];
                const Tuple& t = tuples[k];
                const bool trivial = t.x == t.y && t.p == t.q && (!cond.reads_u || t.u == t.v);
                vals[k * nc + c] = trivial ? std::numeric_limits<double>::infinity() : cond.fn(t);
            }
    });
    MonotonicityReport rep;
    rep.hypothesis = check.hypothesis;
    rep.alpha_used = check.alpha;
    rep.a_matrix = check.a_matrix;
    rep.n_samples = tuples.size();
    rep.seed = sampler.seed;
    rep.tolerance = tolerance;
    for (std::size_t c = 0; c < nc; ++c) {
        ConditionMargin cm;
        cm.name = check.conditions[c].name;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < tuples.size(); ++k) {
            const double v = vals[k * nc + c];
            if (std::isnan(v)) throw NonFiniteError("condition " + cm.name + " evaluated to NaN");
            if (v < cm.margin) {
                cm.margin = v;
                arg = k;
            }
        }
        cm.witness = tuples[arg];
        if (cm.margin < rep.margin) {
            rep.margin = cm.margin;
            rep.witness = cm.witness;
            rep.witness_condition = cm.name;
        }
        rep.conditions.push_back(std::move(cm));
    }
    rep.passed = rep.margin >= -tolerance;
    rep.notes = "sampled check: a failure carries a concrete witness; a pass is evidence, not proof.";
    return rep;
}

/// Re-evaluates the named condition at a tuple.
inline double margin_at(const Check& check, const std::string& condition, const Tuple& t) {
    for (const auto& c : check.conditions)
        if (c.name == condition) return c.fn(t);
    throw ValidationError("unknown condition '" + condition + "'");
}

// ---------------------------------------------------------------------------
// Checks. Each make_* builds the inequalities; each check_* samples them.

/// <f(x)-f(y), x-y> >= alpha |f(x)-f(y)|^2, pairs sharing p (and u).
inline Check make_alpha_monotone(const CoefficientField& f, double alpha) {
    if (f.out_dim() != f.dim(Block::X)) throw ValidationError("alpha-monotone check needs f: R^d -> R^d");
    Check c;
    c.hypothesis = "alpha";
    c.alpha = alpha;
    c.same_p = true;
    c.conditions.push_back({"lemma_a1_ii", [f, alpha](const Tuple& t) {
                                const auto& u = t.u;
                                const auto df = detail::sub(detail::eval(f, t.x, t.p, u), detail::eval(f, t.y, t.p, u));
                                return detail::dotv(df, detail::sub(t.x, t.y)) - alpha * detail::dotv(df, df);
                            }, false});
    return c;
}

inline SamplerConfig alpha_sampler(const CoefficientField& f, const SamplerConfig& s) {
    SamplerConfig out = s;
    if (f.dim(Block::P) == 0) out.p_box = Box();
    if (f.dim(Block::U) == 0) out.u_box = Box();
    return out;
}

inline MonotonicityReport check_alpha_monotone(const CoefficientField& f, double alpha, const SamplerConfig& sampler,
                                               double tolerance = 1e-9) {
    return run_check(make_alpha_monotone(f, alpha), alpha_sampler(f, sampler), tolerance);
}

/// First-order form xi^T Df xi >= alpha |Df xi|^2 with a central-difference Df.
inline MonotonicityReport check_alpha_monotone_differential(const CoefficientField& f, double alpha,
                                                            const SamplerConfig& sampler, double tolerance = 1e-6) {
    Check c;
    c.hypothesis = "alpha_differential";
    c.alpha = alpha;
    c.same_p = true;
    c.conditions.push_back({"lemma_a1_i", [f, alpha](const Tuple& t) {
                                // t.y - t.x is the direction xi
                                const std::size_t d = t.x.size();
                                auto xi = detail::sub(t.y, t.x);
                                double nrm = std::sqrt(detail::dotv(xi, xi));
                                if (nrm == 0.0) return 0.0;
                                for (double& z : xi) z /= nrm;
                                const double h = 1e-5;
                                std::vector<double> a = t.x, b = t.x;
                                for (std::size_t i = 0; i < d; ++i) {
                                    a[i] += h * xi[i];
                                    b[i] -= h * xi[i];
                                }
                                auto dfx = detail::sub(detail::eval(f, a, t.p, t.u), detail::eval(f, b, t.p, t.u));
                                for (double& z : dfx) z /= 2 * h;
                                return detail::dotv(xi, dfx) - alpha * detail::dotv(dfx, dfx);
                            }, false});
    return run_check(c, alpha_sampler(f, sampler), tolerance);
}

namespace detail {

inline void require_shapes(const ProblemSpec& s) { check_well_formed(s); }

inline std::function<double(const Tuple&)> u0_coupled_condition(const ProblemSpec& s, Eigen::MatrixXd a,
                                                                double alpha) {
    return [s, a, alpha](const Tuple& t) {
        const auto du = sub(eval(s.u0, t.x, t.p, {}), eval(s.u0, t.y, t.q, {}));
        const auto dp = sub(t.p, t.q);
        return dotv(du, sub(t.x, t.y)) + dotv(dp, matvec(a, dp)) - alpha * dotv(du, du);
    };
}

/// <G(x,p,u)-G(y,q,v), x-y> + <F(x,p,u)-F(x,q,v), u-v> + <b(x,p,u)-b(y,q,v), B(p-q)>
inline double coupled_lhs(const ProblemSpec& s, const Eigen::MatrixXd& bmat, const Tuple& t) {
    const auto dg = sub(eval(s.g_coef, t.x, t.p, t.u), eval(s.g_coef, t.y, t.q, t.v));
    const auto df = sub(eval(s.f_coef, t.x, t.p, t.u), eval(s.f_coef, t.x, t.q, t.v));
    const auto db = sub(eval(s.b_coef, t.x, t.p, t.u), eval(s.b_coef, t.y, t.q, t.v));
    const auto dp = sub(t.p, t.q);
    return dotv(dg, sub(t.x, t.y)) + dotv(df, sub(t.u, t.v)) + dotv(db, matvec(bmat, dp));
}

}  // namespace detail

/// The terms of the coupled (G,F,b) inequality at one tuple.
struct CoupledTerms {
    double g_term, f_term, b_term, rhs;
    double margin() const { return g_term + f_term + b_term - rhs; }
};

inline CoupledTerms coupled_terms(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha, const Tuple& t) {
    using namespace detail;
    const auto dg = sub(eval(s.g_coef, t.x, t.p, t.u), eval(s.g_coef, t.y, t.q, t.v));
    const auto df = sub(eval(s.f_coef, t.x, t.p, t.u), eval(s.f_coef, t.x, t.q, t.v));
    const auto db = sub(eval(s.b_coef, t.x, t.p, t.u), eval(s.b_coef, t.y, t.q, t.v));
    const auto dx = sub(t.x, t.y), dp = sub(t.p, t.q);
    const Eigen::MatrixXd sym = a + a.transpose();
    return {dotv(dg, dx), dotv(df, sub(t.u, t.v)), dotv(db, matvec(sym, dp)), alpha * (dotv(dx, dx) + dotv(dp, dp))};
}

inline Check make_hyp_autonomous(const ProblemSpec& s, double alpha) {
    detail::require_shapes(s);
    if (!s.b_autonomous())
        throw ValidationError("check_hyp_autonomous: b depends on x or u; use check_hyp_coupled instead");
    Check c;
    c.hypothesis = "autonomous";
    c.alpha = alpha;
    c.same_p = true;
    c.conditions.push_back({"u0_monotone", [s, alpha](const Tuple& t) {
                                using namespace detail;
                                const auto du = sub(eval(s.u0, t.x, t.p, {}), eval(s.u0, t.y, t.p, {}));
                                return dotv(du, sub(t.x, t.y)) - alpha * dotv(du, du);
                            }, false});
    c.conditions.push_back({"fg_monotone", [s, alpha](const Tuple& t) {
                                using namespace detail;
                                const auto dg = sub(eval(s.g_coef, t.x, t.p, t.u), eval(s.g_coef, t.y, t.p, t.v));
                                const auto df = sub(eval(s.f_coef, t.x, t.p, t.u), eval(s.f_coef, t.x, t.p, t.v));
                                const auto dx = sub(t.x, t.y);
                                return dotv(dg, dx) + dotv(df, sub(t.u, t.v)) - alpha * dotv(dx, dx);
                            }});
    return c;
}

inline MonotonicityReport check_hyp_autonomous(const ProblemSpec& s, double alpha, const SamplerConfig& sampler,
                                               double tolerance = 1e-9) {
    return run_check(make_hyp_autonomous(s, alpha), sampler, tolerance);
}

inline Check make_hyp_coupled(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha) {
    detail::require_shapes(s);
    detail::check_symmetric_psd(a, s.m);
    Check c;
    c.hypothesis = "coupled";
    c.alpha = alpha;
    c.a_matrix = a;
    c.conditions.push_back({"u0_coupled", detail::u0_coupled_condition(s, a, alpha), false});
    c.conditions.push_back({"gfb_coupled", [s, a, alpha](const Tuple& t) {
                                return coupled_terms(s, a, alpha, t).margin();
                            }});
    return c;
}

inline MonotonicityReport check_hyp_coupled(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha,
                                            const SamplerConfig& sampler, double tolerance = 1e-9) {
    return run_check(make_hyp_coupled(s, a, alpha), sampler, tolerance);
}

/// Right side alpha |G(x,p,w)-G(y,q,w)|^2 minimized over w = t u + (1-t) v on an 11-point t-grid.
inline Check make_weaker_monotonicity(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha) {
    detail::require_shapes(s);
    detail::check_symmetric_psd(a, s.m);
    Check c;
    c.hypothesis = "weaker";
    c.alpha = alpha;
    c.a_matrix = a;
    c.conditions.push_back({"u0_coupled", detail::u0_coupled_condition(s, a, alpha), false});
    c.conditions.push_back({"gfb_weaker", [s, a, alpha](const Tuple& t) {
                                using namespace detail;
                                const double lhs = coupled_lhs(s, a + a.transpose(), t);
                                double rhs = std::numeric_limits<double>::infinity();
                                std::vector<double> w(t.u.size());
                                for (int k = 0; k <= 10; ++k) {
                                    const double th = k / 10.0;
                                    for (std::size_t i = 0; i < w.size(); ++i) w[i] = th * t.u[i] + (1 - th) * t.v[i];
                                    const auto dg = sub(eval(s.g_coef, t.x, t.p, w), eval(s.g_coef, t.y, t.q, w));
                                    rhs = std::min(rhs, alpha * dotv(dg, dg));
                                }
                                return lhs - rhs;
                            }});
    return c;
}

inline MonotonicityReport check_weaker_monotonicity(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha,
                                                    const SamplerConfig& sampler, double tolerance = 1e-9) {
    return run_check(make_weaker_monotonicity(s, a, alpha), sampler, tolerance);
}

/// Gamma = [N M] acting on X = (x, p); Ftilde = (F, b).
inline Check make_g_monotonicity(const ProblemSpec& s, const Eigen::MatrixXd& n, const Eigen::MatrixXd& mm,
                                 double alpha) {
    detail::require_shapes(s);
    const auto d = static_cast<Eigen::Index>(s.d), m = static_cast<Eigen::Index>(s.m);
    if (n.rows() != d || n.cols() != d) throw ValidationError("N must be d x d");
    if (mm.rows() != d || mm.cols() != m) throw ValidationError("M must be d x m");
    Check c;
    c.hypothesis = "g";
    c.alpha = alpha;
    c.conditions.push_back({"u0_gamma", [s, n, mm](const Tuple& t) {
                                using namespace detail;
                                const auto du = sub(eval(s.u0, t.x, t.p, {}), eval(s.u0, t.y, t.q, {}));
                                const auto nx = matvec(n, sub(t.x, t.y));
                                const auto mp = matvec(mm, sub(t.p, t.q));
                                double r = 0.0;
                                for (std::size_t i = 0; i < du.size(); ++i) r += du[i] * (nx[i] + mp[i]);
                                return r;
                            }, false});
    c.conditions.push_back({"fgb_gamma", [s, n, mm, alpha](const Tuple& t) {
                                using namespace detail;
                                const auto df = sub(eval(s.f_coef, t.x, t.p, t.u), eval(s.f_coef, t.y, t.q, t.v));
                                const auto db = sub(eval(s.b_coef, t.x, t.p, t.u), eval(s.b_coef, t.y, t.q, t.v));
                                const auto dg = sub(eval(s.g_coef, t.x, t.p, t.u), eval(s.g_coef, t.y, t.q, t.v));
                                const auto duv = sub(t.u, t.v);
                                const auto nf = matvec(n, df), mb = matvec(mm, db);
                                double lhs = 0.0;
                                for (std::size_t i = 0; i < duv.size(); ++i) lhs += (nf[i] + mb[i]) * duv[i];
                                lhs += dotv(tmatvec(n, dg), sub(t.x, t.y)) + dotv(tmatvec(mm, dg), sub(t.p, t.q));
                                return lhs - alpha * dotv(duv, duv);
                            }});
    return c;
}

inline MonotonicityReport check_g_monotonicity(const ProblemSpec& s, const Eigen::MatrixXd& n,
                                               const Eigen::MatrixXd& mm, double alpha, const SamplerConfig& sampler,
                                               double tolerance = 1e-9) {
    return run_check(make_g_monotonicity(s, n, mm, alpha), sampler, tolerance);
}

inline Check make_volatility_condition(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha) {
    detail::require_shapes(s);
    if (!s.volatility) throw ValidationError("check_volatility_condition: problem has no volatility");
    detail::check_symmetric_psd(a, s.m);
    Check c;
    c.hypothesis = "volatility";
    c.alpha = alpha;
    c.a_matrix = a;
    c.conditions.push_back({"u0_coupled", detail::u0_coupled_condition(s, a, alpha), false});
    c.conditions.push_back({"gfb_volatility", [s, a, alpha](const Tuple& t) {
                                using namespace detail;
                                const auto m = static_cast<Eigen::Index>(s.m);
                                const auto sx = eval(*s.volatility, t.x, t.p, t.u);
                                const auto sy = eval(*s.volatility, t.y, t.q, t.v);
                                Eigen::MatrixXd ds(m, m);
                                for (Eigen::Index i = 0; i < m; ++i)
                                    for (Eigen::Index j = 0; j < m; ++j)
                                        ds(i, j) = sx[static_cast<std::size_t>(i * m + j)] -
                                                   sy[static_cast<std::size_t>(i * m + j)];
                                const double trace = (ds.transpose() * (2.0 * a) * ds).trace();
                                const auto terms = coupled_terms(s, a, alpha, t);
                                return terms.margin() - trace;
                            }});
    return c;
}

inline MonotonicityReport check_volatility_condition(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha,
                                                     const SamplerConfig& sampler, double tolerance = 1e-9) {
    return run_check(make_volatility_condition(s, a, alpha), sampler, tolerance);
}

inline Check make_trade_condition(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha) {
    detail::require_shapes(s);
    detail::check_symmetric_psd(a, s.m);
    Check c;
    c.hypothesis = "trade";
    c.alpha = alpha;
    c.a_matrix = a;
    c.conditions.push_back({"u0_a_monotone", detail::u0_coupled_condition(s, a, 0.0), false});
    c.conditions.push_back({"gfb_in_u", [s, a, alpha](const Tuple& t) {
                                using namespace detail;
                                const auto duv = sub(t.u, t.v);
                                return coupled_lhs(s, 2.0 * a, t) - alpha * dotv(duv, duv);
                            }});
    return c;
}

inline MonotonicityReport check_trade_condition(const ProblemSpec& s, const Eigen::MatrixXd& a, double alpha,
                                                const SamplerConfig& sampler, double tolerance = 1e-9) {
    return run_check(make_trade_condition(s, a, alpha), sampler, tolerance);
}

// ---------------------------------------------------------------------------

struct ASearchResult {
    Eigen::MatrixXd a;
    double margin;
    bool autonomous_shortcut = false;
};

struct ASearchConfig {
    std::size_t budget = 25;  // log-grid points per coordinate
    double lo = 1e-3, hi = 1e3;
    std::size_t sweeps = 2;
    std::size_t bisection_steps = 40;
    /// Return A = 0 when b ignores (x,u) and the autonomous hypothesis holds.
    bool autonomous_shortcut = true;
    /// Also search off-diagonal entries (symmetric A).
    bool full_symmetric = false;
    double tolerance = 1e-9;
};

/// Coordinate search over diagonal A on a log-grid maximizing the sampled
/// coupled margin, then per-coordinate bisection down to the smallest
/// feasible entry. Empty result: no certificate found (not a disproof).
inline std::optional<ASearchResult> search_matrix_A(const ProblemSpec& s, double alpha, const SamplerConfig& sampler,
                                                    const ASearchConfig& cfg = {}) {
    const auto m = static_cast<Eigen::Index>(s.m);
    if (cfg.autonomous_shortcut && s.b_autonomous()) {
        const auto rep = check_hyp_autonomous(s, alpha, sampler, cfg.tolerance);
        if (rep.passed) return ASearchResult{Eigen::MatrixXd::Zero(m, m), rep.margin, true};
    }
    auto margin = [&](const Eigen::MatrixXd& a) { return check_hyp_coupled(s, a, alpha, sampler, cfg.tolerance).margin; };
    std::vector<double> grid{0.0};
    const std::size_t nb = std::max<std::size_t>(2, cfg.budget);
    for (std::size_t i = 0; i < nb; ++i)
        grid.push_back(cfg.lo * std::pow(cfg.hi / cfg.lo, static_cast<double>(i) / static_cast<double>(nb - 1)));

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    double best = margin(a);
    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep)
        for (Eigen::Index i = 0; i < m; ++i)
            for (double g : grid) {
                Eigen::MatrixXd trial = a;
                trial(i, i) = g;
                const double v = margin(trial);
                if (v > best) {
                    best = v;
                    a = trial;
                }
            }
    if (cfg.full_symmetric && m > 1) {
        for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep)
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = i + 1; j < m; ++j) {
                    const double r = std::sqrt(a(i, i) * a(j, j));
                    for (std::size_t k = 0; k <= 20; ++k) {
                        Eigen::MatrixXd trial = a;
                        trial(i, j) = trial(j, i) = -r + 2.0 * r * static_cast<double>(k) / 20.0;
                        try {
                            detail::check_symmetric_psd(trial, s.m);
                        } catch (const ValidationError&) {
                            continue;
                        }
                        const double v = margin(trial);
                        if (v > best) {
                            best = v;
                            a = trial;
                        }
                    }
                }
    }
    if (best < -cfg.tolerance) return std::nullopt;
    // shrink each diagonal entry to the smallest feasible value; a strictly
    // positive margin found by the grid stage is kept positive
    const bool strict = best > 0.0;
    auto feasible = [&](double v) { return strict ? v > 0.0 : v >= -cfg.tolerance; };
    auto ok_at = [&](Eigen::Index i, double v) {
        Eigen::MatrixXd trial = a;
        trial(i, i) = v;
        try {
            detail::check_symmetric_psd(trial, s.m);
        } catch (const ValidationError&) {
            return false;
        }
        return feasible(margin(trial));
    };
    for (Eigen::Index i = 0; i < m; ++i) {
        double hi = a(i, i);
        if (hi == 0.0) continue;
        // walk down the grid while feasible, then bisect the last gap
        double lo = -1.0;
        for (auto g = grid.rbegin(); g != grid.rend(); ++g) {
            if (*g >= hi) continue;
            if (ok_at(i, *g)) {
                hi = *g;
            } else {
                lo = *g;
                break;
            }
        }
        if (lo >= 0.0)
            for (std::size_t k = 0; k < cfg.bisection_steps; ++k) {
                const double mid = 0.5 * (lo + hi);
                if (ok_at(i, mid)) hi = mid;
                else lo = mid;
            }
        a(i, i) = hi;
    }
    return ASearchResult{a, margin(a), false};
}

}  // namespace mfgnoise
