#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "core.hpp"
#include "diagnostics.hpp"
#include "value_field.hpp"

namespace mfgnoise {

/// alpha' = 1 - alpha^2 - lambda beta,  beta' = -alpha beta.
struct ToyTrajectory {
    std::vector<double> t, alpha, beta;
    std::optional<double> blowup_time;
    bool blown_up = false;
};

namespace detail {

struct ToyState {
    double a, b;
};

inline ToyState toy_rhs(double lambda, ToyState s) { return {1.0 - s.a * s.a - lambda * s.b, -s.a * s.b}; }

inline ToyState rk4(double lambda, ToyState s, double h) {
    const auto k1 = toy_rhs(lambda, s);
    const auto k2 = toy_rhs(lambda, {s.a + 0.5 * h * k1.a, s.b + 0.5 * h * k1.b});
    const auto k3 = toy_rhs(lambda, {s.a + 0.5 * h * k2.a, s.b + 0.5 * h * k2.b});
    const auto k4 = toy_rhs(lambda, {s.a + h * k3.a, s.b + h * k3.b});
    return {s.a + h / 6.0 * (k1.a + 2 * k2.a + 2 * k3.a + k4.a), s.b + h / 6.0 * (k1.b + 2 * k2.b + 2 * k3.b + k4.b)};
}

inline bool escaped(ToyState s, double threshold) {
    return !std::isfinite(s.a) || !std::isfinite(s.b) || std::abs(s.a) > threshold;
}

}  // namespace detail

/// RK4 on nodes k*dt. A node step is split into substeps of length at most
/// 0.1 / max(|alpha|, sqrt|lambda beta|); the escape time past `threshold`
/// is refined by bisection within the substep where it happens.
inline ToyTrajectory toy_ode_solve(double lambda, double alpha0, double beta0, double horizon, double dt,
                                   double threshold = 1e6) {
    if (!(dt > 0.0)) throw ValidationError("toy_ode_solve: dt must be positive");
    if (!(horizon >= 0.0)) throw ValidationError("toy_ode_solve: horizon must be nonnegative");
    ToyTrajectory tr;
    detail::ToyState s{alpha0, beta0};
    tr.t.push_back(0.0);
    tr.alpha.push_back(alpha0);
    tr.beta.push_back(beta0);
    const auto n = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
    double t = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        const double t_next = std::min(horizon, static_cast<double>(k) * dt);
        while (t < t_next) {
            const double rate = std::max(std::abs(s.a), std::sqrt(std::abs(lambda * s.b)));
            double h = t_next - t;
            if (rate * h > 0.1) h = 0.1 / rate;
            const auto next = detail::rk4(lambda, s, h);
            if (detail::escaped(next, threshold)) {
                double lo = 0.0, hi = h;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (detail::escaped(detail::rk4(lambda, s, mid), threshold)) hi = mid;
                    else lo = mid;
                }
                tr.blown_up = true;
                tr.blowup_time = t + hi;
                return tr;
            }
            s = next;
            t = (t_next - t == h) ? t_next : t + h;
        }
        tr.t.push_back(t_next);
        tr.alpha.push_back(s.a);
        tr.beta.push_back(s.b);
    }
    return tr;
}

enum class BlowupVerdict { GuaranteedBlowup, NoCertificate };

inline const char* verdict_name(BlowupVerdict v) {
    return v == BlowupVerdict::GuaranteedBlowup ? "GuaranteedBlowup" : "NoCertificate";
}

struct BlowupCertificate {
    BlowupVerdict verdict = BlowupVerdict::NoCertificate;
    std::string branch;  // inequality that was evaluated
    double value = 0.0;  // its left-hand side
};

inline BlowupCertificate toy_blowup_certificate(double lambda, double alpha0, double beta0) {
    BlowupCertificate c;
    const double lb = lambda * beta0;
    if (alpha0 < 0.0) {
        c.branch = "lambda*beta0 >= 1 (alpha0 < 0)";
        c.value = lb;
        if (lb >= 1.0) c.verdict = BlowupVerdict::GuaranteedBlowup;
    } else {
        c.branch = std::string("1 - lambda*beta0*exp(-alpha0*(alpha0+1)) <= -1 ") +
                   (alpha0 > 0.0 ? "(alpha0 > 0)" : "(alpha0 = 0: needs alpha0 > 0)");
        c.value = 1.0 - lb * std::exp(-alpha0 * (alpha0 + 1.0));
        if (alpha0 > 0.0 && c.value <= -1.0) c.verdict = BlowupVerdict::GuaranteedBlowup;
    }
    return c;
}

inline std::string verdict_line(const BlowupCertificate& c) {
    return std::string("certificate: ") + verdict_name(c.verdict) + " " + c.branch + " value=" + fmt_num(c.value);
}

inline void write_toy_csv(std::ostream& os, const ToyTrajectory& tr) {
    os << "t,alpha,beta\n";
    for (std::size_t k = 0; k < tr.t.size(); ++k)
        os << fmt_num(tr.t[k]) << ',' << fmt_num(tr.alpha[k]) << ',' << fmt_num(tr.beta[k]) << '\n';
}

/// heat_quadratic(sigma): |p|^2 + 2 sigma t m.  linear_toy(lambda, alpha0, beta0):
/// alpha(t) x + beta(t) p for d = m = 1.
inline std::vector<double> analytic_solution(const std::string& name, const std::vector<double>& params, double t,
                                             const std::vector<double>& x, const std::vector<double>& p) {
    if (!(t >= 0.0)) throw ValidationError("analytic_solution: t must be nonnegative");
    if (name == "heat_quadratic") {
        if (params.size() != 1) throw ValidationError("heat_quadratic takes one parameter (sigma)");
        double v = 2.0 * params[0] * t * static_cast<double>(p.size());
        for (double z : p) v += z * z;
        return {v};
    }
    if (name == "linear_toy") {
        if (params.size() != 3) throw ValidationError("linear_toy takes three parameters (lambda, alpha0, beta0)");
        if (x.size() != 1 || p.size() != 1) throw ValidationError("linear_toy is one-dimensional");
        if (t == 0.0) return {params[1] * x[0] + params[2] * p[0]};
        const double n = std::ceil(t / 1e-3);
        const auto tr = toy_ode_solve(params[0], params[1], params[2], t, t / n);
        if (tr.blown_up) throw DomainError("linear_toy: t = " + fmt_num(t) + " is past the blow-up time " +
                                           fmt_num(*tr.blowup_time));
        return {tr.alpha.back() * x[0] + tr.beta.back() * p[0]};
    }
    throw ValidationError("analytic_solution: unknown name '" + name + "'");
}

struct InverseCheck {
    double t = 0.0;
    double max_residual = 0.0;         // |V(t, U(t,x,p), p) - x| over grid nodes, analytic V
    double numeric_inverse_gap = 0.0;  // |V_num - V| with V_num from bisection in x
    double min_increment = 0.0;        // smallest x-difference of U between neighbours
};

/// Composition identity for invertible_transport (d = m = 1, F = 0, b(u) = u,
/// U0 = x + p, sigma = 0): V(t,y,p) = y (1 + t) - p.
inline InverseCheck inverse_identity_check(const ValueField& f, std::size_t k) {
    const Grid& g = f.grid();
    if (g.d() != 1 || g.m() != 1 || f.out_dim() != 1) throw ValidationError("inverse_identity_check: needs d = m = 1");
    if (k >= f.n_times()) throw ValidationError("inverse_identity_check: time index out of range");
    InverseCheck r;
    r.t = f.times()[k];
    const double t = r.t;
    auto u = [&](std::size_t ix, std::size_t ip) { return f.at(k, ix * g.n_p + ip, 0); };
    r.min_increment = std::numeric_limits<double>::infinity();
    for (std::size_t ip = 0; ip < g.n_p; ++ip)
        for (std::size_t ix = 0; ix + 1 < g.n_x; ++ix) r.min_increment = std::min(r.min_increment, u(ix + 1, ip) - u(ix, ip));
    if (!(r.min_increment > 0.0))
        throw DomainError("inverse_identity_check: field is not strictly increasing in x at t = " + fmt_num(t));
    auto v_exact = [t](double y, double p) { return y * (1.0 + t) - p; };
    for (std::size_t ip = 0; ip < g.n_p; ++ip) {
        const double p = g.p_node(0, ip);
        for (std::size_t ix = 0; ix < g.n_x; ++ix) {
            const double x = g.x_node(0, ix);
            r.max_residual = std::max(r.max_residual, std::abs(v_exact(u(ix, ip), p) - x));
        }
        // numeric inverse on a y-grid inside the range of U(t,.,p)
        const double ylo = u(0, ip), yhi = u(g.n_x - 1, ip);
        for (std::size_t j = 0; j <= 16; ++j) {
            const double y = ylo + (yhi - ylo) * static_cast<double>(j) / 16.0;
            double lo = g.omega.lo[0], hi = g.omega.hi[0];
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                double val;
                f.space_eval(k, &mid, &p, &val);
                if (val < y) lo = mid;
                else hi = mid;
            }
            r.numeric_inverse_gap = std::max(r.numeric_inverse_gap, std::abs(0.5 * (lo + hi) - v_exact(y, p)));
        }
    }
    return r;
}

}  // namespace mfgnoise
