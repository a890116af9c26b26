#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "coefficient.hpp"
#include "core.hpp"

namespace mfgnoise {

/// Full data of a finite-state master equation with common noise p:
///   dU/dt + F(x,p,U).D_xU + b(x,p,U).D_pU - sigma Lap_p U + lambda U = G(x,p,U),  U(0) = U0.
struct ProblemSpec {
    std::string name = "custom";
    std::size_t d = 1;
    std::size_t m = 1;
    Box omega;
    /// Omega stands in for R^d; paths may leave it into x_buffer and the face
    /// invariance sample is skipped.
    bool omega_is_truncation = false;
    Box p_box;
    Box u_box;
    double horizon = 1.0;
    double sigma = 0.0;
    double discount = 0.0;
    std::optional<CoefficientField> volatility;  // m*m entries, row-major
    CoefficientField f_coef, g_coef, b_coef, u0;

    /// When true, buffers are recomputed from the coefficients by finalize_buffers.
    bool auto_buffer = true;
    std::vector<double> p_buffer_below, p_buffer_above;
    std::vector<double> x_buffer;

    Box buffered_p_box() const { return p_box.expanded(p_buffer_below, p_buffer_above); }
    Box clamp_x_box() const { return omega_is_truncation ? omega.expanded(x_buffer, x_buffer) : omega; }
    bool stochastic() const { return volatility.has_value() || sigma > 0.0; }

    /// F, G, b and the volatility ignore u: the Picard map is constant.
    bool iterate_independent() const {
        return !f_coef.reads(Block::U) && !g_coef.reads(Block::U) && !b_coef.reads(Block::U) &&
               !(volatility && volatility->reads(Block::U));
    }

    bool b_autonomous() const { return !b_coef.reads(Block::X) && !b_coef.reads(Block::U); }

    bool pure_diffusion() const {
        return f_coef.is_zero() && g_coef.is_zero() && b_coef.is_zero() && !volatility.has_value();
    }
};

/// Boxes and sample counts for sampled checks and Lipschitz estimates.
struct SamplerConfig {
    std::size_t n_samples = 2000;
    std::uint64_t seed = 1;
    Box x_box, p_box, u_box;
    bool include_grid_pairs = true;
    std::size_t grid_points = 33;
};

inline SamplerConfig sampler_for(const ProblemSpec& spec, std::size_t n_samples = 2000, std::uint64_t seed = 1) {
    SamplerConfig s;
    s.n_samples = n_samples;
    s.seed = seed;
    s.x_box = spec.omega;
    s.p_box = spec.p_box;
    s.u_box = spec.u_box;
    return s;
}

namespace detail {

inline void draw(UniformStream& rng, const Box& b, double* out) {
    for (std::size_t i = 0; i < b.dim(); ++i) out[i] = rng.uniform(b.lo[i], b.hi[i]);
}

inline double lattice(const Box& b, std::size_t i, std::size_t k, std::size_t n) {
    if (n <= 1) return 0.5 * (b.lo[i] + b.hi[i]);
    if (k + 1 == n) return b.hi[i];
    return b.lo[i] + static_cast<double>(k) * (b.hi[i] - b.lo[i]) / static_cast<double>(n - 1);
}

inline double vec_norm(const double* v, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

}  // namespace detail

/// Sampled Lipschitz seminorm of f in one input block, the other blocks held
/// fixed. Affine fields return the exact operator norm of the block.
inline double lipschitz_seminorm(const CoefficientField& f, Block block, const SamplerConfig& sampler) {
    const std::size_t nb = f.dim(block);
    if (nb == 0) return 0.0;
    if (f.is_affine()) return f.affine_block_norm(block);
    const Box* boxes[3] = {&sampler.x_box, &sampler.p_box, &sampler.u_box};
    for (int b = 0; b < 3; ++b) {
        const std::size_t need = f.dim(static_cast<Block>(b));
        if (need == 0) continue;
        if (boxes[b]->dim() != need || !boxes[b]->well_formed())
            throw ValidationError(std::string("lipschitz_seminorm: empty or malformed box for block ") +
                                  block_name(static_cast<Block>(b)));
    }
    if (sampler.n_samples == 0) throw ValidationError("lipschitz_seminorm: n_samples must be positive");

    const Box& sel = *boxes[static_cast<int>(block)];
    UniformStream rng(sampler.seed, 0x11u);
    std::array<double, kMaxDim> z[3][2];
    std::vector<double> fa(f.out_dim()), fb(f.out_dim()), diff(f.out_dim());
    auto slot = [&](int which, int side) -> double* { return z[which][side].data(); };
    auto eval = [&](int side, double* out) {
        f.evaluate(slot(0, side), slot(1, side), slot(2, side), out);
    };
    auto anchor_others = [&]() {
        for (int b = 0; b < 3; ++b) {
            if (b == static_cast<int>(block) || f.dim(static_cast<Block>(b)) == 0) continue;
            detail::draw(rng, *boxes[b], slot(b, 0));
            std::copy(z[b][0].begin(), z[b][0].end(), z[b][1].begin());
        }
    };
    double best = 0.0;
    auto record = [&](double dz) {
        eval(0, fa.data());
        eval(1, fb.data());
        for (std::size_t i = 0; i < fa.size(); ++i) diff[i] = fa[i] - fb[i];
        if (dz > 0.0) best = std::max(best, detail::vec_norm(diff.data(), diff.size()) / dz);
    };

    const int bi = static_cast<int>(block);
    if (sampler.include_grid_pairs) {
        const std::size_t g = std::max<std::size_t>(2, sampler.grid_points);
        const std::size_t anchors = 4;
        for (std::size_t a = 0; a < anchors; ++a) {
            anchor_others();
            detail::draw(rng, sel, slot(bi, 0));
            for (std::size_t axis = 0; axis < nb; ++axis) {
                for (std::size_t k = 0; k + 1 < g; ++k) {
                    std::copy(z[bi][0].begin(), z[bi][0].end(), z[bi][1].begin());
                    slot(bi, 0)[axis] = detail::lattice(sel, axis, k, g);
                    slot(bi, 1)[axis] = detail::lattice(sel, axis, k + 1, g);
                    record(std::abs(slot(bi, 1)[axis] - slot(bi, 0)[axis]));
                }
            }
        }
    }
    for (std::size_t s = 0; s < sampler.n_samples; ++s) {
        anchor_others();
        detail::draw(rng, sel, slot(bi, 0));
        detail::draw(rng, sel, slot(bi, 1));
        double dz = 0.0;
        for (std::size_t i = 0; i < nb; ++i) dz += std::pow(slot(bi, 0)[i] - slot(bi, 1)[i], 2);
        record(std::sqrt(dz));
    }
    return best;
}

struct LipschitzEntry {
    std::string coefficient;
    Block block;
    double bound;
    std::string method;  // exact | interval | sampled
};

struct BoundaryViolation {
    std::vector<double> x, p, u;
    double inward_flux;
};

struct ValidationReport {
    bool passed = true;
    std::vector<BoundaryViolation> boundary_violations;
    std::vector<LipschitzEntry> lipschitz_table;
    std::string notes;

    double lipschitz(const std::string& coef, Block b) const {
        for (const auto& e : lipschitz_table)
            if (e.coefficient == coef && e.block == b) return e.bound;
        return 0.0;
    }
};

/// Throws ValidationError describing the first structural defect found.
inline void check_well_formed(const ProblemSpec& s) {
    auto fail = [&](const std::string& what) { throw ValidationError("problem '" + s.name + "': " + what); };
    if (s.d == 0 || s.m == 0) fail("d and m must be positive");
    if (s.d > kMaxDim || s.m > kMaxDim) fail("d and m must not exceed " + std::to_string(kMaxDim));
    if (s.omega.dim() != s.d || !s.omega.well_formed()) fail("omega must be a box in R^d with positive edges");
    if (s.p_box.dim() != s.m || !s.p_box.well_formed()) fail("p_box must be a box in R^m with positive edges");
    if (s.u_box.dim() != s.d || !s.u_box.well_formed()) fail("u_box must be a box in R^d with positive edges");
    if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) fail("horizon must be positive and finite");
    if (!(s.sigma >= 0.0) || !std::isfinite(s.sigma)) fail("sigma must be nonnegative");
    if (!(s.discount >= 0.0) || !std::isfinite(s.discount)) fail("discount must be nonnegative");
    auto shape = [&](const CoefficientField& c, const std::string& nm, std::size_t out, std::size_t du) {
        if (c.out_dim() != out || c.dim(Block::X) != s.d || c.dim(Block::P) != s.m || c.dim(Block::U) != du)
            fail("coefficient " + nm + " has shape out=" + std::to_string(c.out_dim()) + " in=(" +
                 std::to_string(c.dim(Block::X)) + "," + std::to_string(c.dim(Block::P)) + "," +
                 std::to_string(c.dim(Block::U)) + ")");
    };
    shape(s.f_coef, "F", s.d, s.d);
    shape(s.g_coef, "G", s.d, s.d);
    shape(s.b_coef, "b", s.m, s.d);
    shape(s.u0, "U0", s.d, 0);
    if (s.volatility) shape(*s.volatility, "volatility", s.m * s.m, s.d);
    auto buf = [&](const std::vector<double>& v, std::size_t n, const std::string& nm) {
        if (v.size() != n) fail(nm + " must have one entry per coordinate");
        for (double z : v)
            if (!(z >= 0.0) || !std::isfinite(z)) fail(nm + " entries must be nonnegative");
    };
    buf(s.p_buffer_below, s.m, "p_buffer_below");
    buf(s.p_buffer_above, s.m, "p_buffer_above");
    buf(s.x_buffer, s.d, "x_buffer");
}

/// Sampled sup norm of a coefficient over omega x p_box x u_box.
inline double sup_norm(const CoefficientField& c, const ProblemSpec& s, std::size_t n = 512, std::uint64_t seed = 3) {
    UniformStream rng(seed, 0x22u);
    std::array<double, kMaxDim> x{}, p{}, u{};
    std::vector<double> out(c.out_dim());
    double best = 0.0;
    auto visit = [&] {
        c.evaluate(x.data(), p.data(), u.data(), out.data());
        best = std::max(best, detail::vec_norm(out.data(), out.size()));
    };
    // corners of the (x,p,u) box first: affine maps attain their sup there
    const std::size_t nd = s.d + s.m + c.dim(Block::U);
    if (nd <= 12) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << nd); ++mask) {
            std::size_t bit = 0;
            for (std::size_t i = 0; i < s.d; ++i, ++bit) x[i] = (mask >> bit & 1) ? s.omega.hi[i] : s.omega.lo[i];
            for (std::size_t i = 0; i < s.m; ++i, ++bit) p[i] = (mask >> bit & 1) ? s.p_box.hi[i] : s.p_box.lo[i];
            for (std::size_t i = 0; i < c.dim(Block::U); ++i, ++bit)
                u[i] = (mask >> bit & 1) ? s.u_box.hi[i] : s.u_box.lo[i];
            visit();
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        detail::draw(rng, s.omega, x.data());
        detail::draw(rng, s.p_box, p.data());
        if (c.dim(Block::U)) detail::draw(rng, s.u_box, u.data());
        visit();
    }
    return best;
}

/// Default buffers: 4 sqrt(2 sigma T) + |b|_inf T for p (volatility replaces
/// sqrt(sigma) by |Sigma|_inf), |F|_inf T for x when omega is a truncation.
inline void finalize_buffers(ProblemSpec& s) {
    if (!s.auto_buffer) return;
    double diff = std::sqrt(2.0 * s.sigma * s.horizon);
    if (s.volatility) diff = std::sqrt(2.0 * s.horizon) * sup_norm(*s.volatility, s);
    const double w = 4.0 * diff + sup_norm(s.b_coef, s) * s.horizon;
    s.p_buffer_below.assign(s.m, w);
    s.p_buffer_above.assign(s.m, w);
    s.x_buffer.assign(s.d, s.omega_is_truncation ? sup_norm(s.f_coef, s) * s.horizon : 0.0);
}

inline LipschitzEntry lipschitz_entry(const CoefficientField& c, const std::string& nm, Block b,
                                      const ProblemSpec& s) {
    LipschitzEntry e{nm, b, 0.0, "exact"};
    if (c.dim(b) == 0) return e;
    if (c.is_affine()) {
        e.bound = c.affine_block_norm(b);
    } else if (c.is_builtin()) {
        SamplerConfig sc = sampler_for(s, 4000, 17);
        e.bound = lipschitz_seminorm(c, b, sc);
        e.method = "sampled";
    } else {
        e.bound = c.polynomial_block_bound(b, s.omega, s.p_box, s.u_box);
        e.method = "interval";
    }
    return e;
}

inline std::vector<LipschitzEntry> lipschitz_table(const ProblemSpec& s) {
    std::vector<LipschitzEntry> t;
    auto add = [&](const CoefficientField& c, const std::string& nm) {
        for (Block b : {Block::X, Block::P, Block::U})
            if (c.dim(b)) t.push_back(lipschitz_entry(c, nm, b, s));
    };
    add(s.f_coef, "F");
    add(s.g_coef, "G");
    add(s.b_coef, "b");
    add(s.u0, "U0");
    if (s.volatility) add(*s.volatility, "volatility");
    return t;
}

/// Joint Lipschitz bound of U0 in (x,p).
inline double u0_lipschitz(const ProblemSpec& s) {
    if (s.u0.is_affine()) {
        const auto& a = std::get<AffineMap>(s.u0.kind());
        Eigen::MatrixXd j(a.mx.rows(), a.mx.cols() + a.mp.cols());
        j << a.mx, a.mp;
        return Eigen::JacobiSVD<Eigen::MatrixXd>(j).singularValues()(0);
    }
    const double lx = lipschitz_entry(s.u0, "U0", Block::X, s).bound;
    const double lp = lipschitz_entry(s.u0, "U0", Block::P, s).bound;
    return std::sqrt(lx * lx + lp * lp);
}

/// Largest entry of the Lipschitz table.
inline double coefficient_lipschitz(const ProblemSpec& s) {
    double l = 0.0;
    for (const auto& e : lipschitz_table(s)) l = std::max(l, e.bound);
    return l;
}

/// Samples each face of omega with random (p,u) and records outward-flux
/// violations eta.F < -1e-12; fills the Lipschitz table.
inline ValidationReport validate_problem(const ProblemSpec& spec, std::size_t n_boundary_samples, std::uint64_t seed) {
    check_well_formed(spec);
    if (n_boundary_samples == 0) throw ValidationError("validate_problem: n_boundary_samples must be positive");
    ValidationReport rep;
    rep.lipschitz_table = lipschitz_table(spec);
    bool sampled_bounds = false;
    for (const auto& e : rep.lipschitz_table) sampled_bounds |= e.method == "sampled";
    if (sampled_bounds)
        rep.notes += "Lipschitz bounds marked 'sampled' are lower bounds from finite sampling. ";
    if (spec.omega_is_truncation) {
        rep.notes += "omega is a truncation of R^d; face invariance not sampled. ";
        return rep;
    }
    std::array<double, kMaxDim> x{}, p{}, u{}, f{};
    for (std::size_t face = 0; face < 2 * spec.d; ++face) {
        const std::size_t axis = face / 2;
        const bool upper = face % 2 == 1;
        const double eta = upper ? 1.0 : -1.0;
        UniformStream rng(seed, static_cast<std::uint32_t>(face));
        for (std::size_t k = 0; k < n_boundary_samples; ++k) {
            detail::draw(rng, spec.omega, x.data());
            x[axis] = upper ? spec.omega.hi[axis] : spec.omega.lo[axis];
            detail::draw(rng, spec.p_box, p.data());
            detail::draw(rng, spec.u_box, u.data());
            spec.f_coef.evaluate(x.data(), p.data(), u.data(), f.data());
            const double flux = eta * f[axis];
            if (flux < -1e-12) {
                rep.boundary_violations.push_back({std::vector<double>(x.begin(), x.begin() + spec.d),
                                                   std::vector<double>(p.begin(), p.begin() + spec.m),
                                                   std::vector<double>(u.begin(), u.begin() + spec.d), flux});
            }
        }
    }
    rep.passed = rep.boundary_violations.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// Builtin problems (all d = m = 1)

inline std::vector<std::string> builtin_problem_names() {
    return {"linear_toy", "autonomous_monotone", "geometric_price", "heat_only", "invertible_transport"};
}

inline ProblemSpec builtin_catalog(const std::string& name, const std::vector<double>& params) {
    auto need = [&](std::size_t n) {
        if (params.size() != n)
            throw ValidationError("builtin '" + name + "' expects " + std::to_string(n) + " parameters, got " +
                                  std::to_string(params.size()));
    };
    ProblemSpec s;
    s.name = name;
    s.d = 1;
    s.m = 1;
    s.omega = Box::cube(1, -1.0, 1.0);
    s.p_box = Box::cube(1, -1.0, 1.0);
    s.u_box = Box::cube(1, -2.0, 2.0);
    s.horizon = 1.0;
    if (name == "linear_toy") {
        need(3);
        const double lam = params[0], a0 = params[1], b0 = params[2];
        s.f_coef = affine_1d(0.0, 0.0, 0.0, 1.0);
        s.g_coef = affine_1d(0.0, 1.0, 0.0, 0.0);
        s.b_coef = affine_1d(0.0, lam, 0.0, 0.0);
        s.u0 = affine_1d(0.0, a0, b0, 0.0, 0);
        s.omega_is_truncation = true;
        const double ub = 2.0 * (std::abs(a0) + std::abs(b0) + 1.0);
        s.u_box = Box::cube(1, -ub, ub);
    } else if (name == "autonomous_monotone") {
        need(0);
        s.sigma = 0.1;
        s.f_coef = affine_1d(0.0, 0.0, 0.0, 1.0);
        s.g_coef = affine_1d(0.0, 1.0, 0.0, 0.0);
        s.b_coef = affine_1d(0.0, 0.0, 1.0, 0.0);
        s.u0 = affine_1d(0.0, 1.0, 0.0, 0.0, 0);
        s.omega_is_truncation = true;
    } else if (name == "geometric_price") {
        need(2);
        s.sigma = 0.0;
        s.f_coef = affine_1d(0.0, 0.0, 0.0, 1.0);
        s.g_coef = affine_1d(0.0, 1.0, 0.0, 0.0);
        s.b_coef = CoefficientField::builtin("geometric_drift", {params[0], params[1]}, 1, 1, 1);
        s.u0 = affine_1d(0.0, 1.0, 0.0, 0.0, 0);
        s.omega_is_truncation = true;
        s.p_box = Box::cube(1, 0.0, 2.0);
    } else if (name == "heat_only") {
        need(1);
        s.sigma = params[0];
        s.f_coef = CoefficientField::zero(1, 1, 1, 1);
        s.g_coef = CoefficientField::zero(1, 1, 1, 1);
        s.b_coef = CoefficientField::zero(1, 1, 1, 1);
        PolynomialMap sq;
        sq.outputs = {{Monomial{1.0, {0, 2}}}};
        s.u0 = CoefficientField::polynomial(std::move(sq), 1, 1, 0);
        s.p_box = Box::cube(1, -2.0, 2.0);
        s.u_box = Box::cube(1, -1.0, 10.0);
    } else if (name == "invertible_transport") {
        need(0);
        s.f_coef = CoefficientField::zero(1, 1, 1, 1);
        s.g_coef = CoefficientField::zero(1, 1, 1, 1);
        s.b_coef = affine_1d(0.0, 0.0, 0.0, 1.0);
        s.u0 = affine_1d(0.0, 1.0, 1.0, 0.0, 0);
        s.u_box = Box::cube(1, -3.0, 3.0);
    } else {
        throw ValidationError("unknown builtin problem '" + name + "'");
    }
    if (s.sigma < 0.0) throw ValidationError("builtin '" + name + "': sigma must be nonnegative");
    finalize_buffers(s);
    if (name == "geometric_price") {
        // p is a price: no room below zero
        s.auto_buffer = false;
        s.p_buffer_below.assign(1, 0.0);
    }
    check_well_formed(s);
    return s;
}

/// Re-derives horizon-dependent data after changing the horizon.
inline void set_horizon(ProblemSpec& s, double horizon) {
    s.horizon = horizon;
    if (s.auto_buffer) {
        finalize_buffers(s);
    } else {
        // keep explicit zero lower buffers, refresh the rest
        const auto below = s.p_buffer_below;
        s.auto_buffer = true;
        finalize_buffers(s);
        s.auto_buffer = false;
        for (std::size_t i = 0; i < below.size() && i < s.p_buffer_below.size(); ++i)
            if (below[i] == 0.0) s.p_buffer_below[i] = 0.0;
    }
}

}  // namespace mfgnoise
