#include <gtest/gtest.h>

#include <mfgnoise/monotone.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace mfgnoise;

namespace {

using Eigen::Matrix2d;
using Eigen::Matrix3d;
using Eigen::MatrixXd;

/// Random d = m = 1 affine problem; coefficients in [-2, 2].
struct AffineSet {
    double g[3], f[3], b[3], u0[2];
    double a, alpha;
};

AffineSet draw(UniformStream& r) {
    AffineSet s;
    for (double& v : s.g) v = r.uniform(-2, 2);
    for (double& v : s.f) v = r.uniform(-2, 2);
    for (double& v : s.b) v = r.uniform(-2, 2);
    for (double& v : s.u0) v = r.uniform(-2, 2);
    s.a = r.uniform(0, 2);
    s.alpha = r.uniform(0, 1);
    return s;
}

ProblemSpec to_spec(const AffineSet& a) {
    ProblemSpec s = builtin_catalog("autonomous_monotone", {});
    s.g_coef = affine_1d(0.1, a.g[0], a.g[1], a.g[2]);
    s.f_coef = affine_1d(-0.2, a.f[0], a.f[1], a.f[2]);
    s.b_coef = affine_1d(0.3, a.b[0], a.b[1], a.b[2]);
    s.u0 = affine_1d(0.0, a.u0[0], a.u0[1], 0.0, 0);
    finalize_buffers(s);
    return s;
}

/// Symmetric matrices of the two coupled conditions as quadratic forms in
/// (dx, dp, du) and (dx, dp).
Matrix3d gfb_form(const AffineSet& s) {
    Matrix3d q = Matrix3d::Zero();
    // G . dx
    q(0, 0) += s.g[0];
    q(0, 1) += s.g[1];
    q(0, 2) += s.g[2];
    // F(x,p,u) - F(x,q,v) = f_p dp + f_u du, against du
    q(2, 1) += s.f[1];
    q(2, 2) += s.f[2];
    // b against 2a dp
    q(1, 0) += 2 * s.a * s.b[0];
    q(1, 1) += 2 * s.a * s.b[1];
    q(1, 2) += 2 * s.a * s.b[2];
    q(0, 0) -= s.alpha;
    q(1, 1) -= s.alpha;
    return 0.5 * (q + q.transpose());
}

Matrix2d u0_form(const AffineSet& s) {
    const double ux = s.u0[0], up = s.u0[1];
    Matrix2d q;
    q << ux - s.alpha * ux * ux, 0.5 * up - s.alpha * ux * up, 0.5 * up - s.alpha * ux * up, s.a - s.alpha * up * up;
    return q;
}

template <class M>
double min_eig(const M& m) {
    return Eigen::SelfAdjointEigenSolver<M>(m).eigenvalues().minCoeff();
}

template <class M>
double max_abs_eig(const M& m) {
    return Eigen::SelfAdjointEigenSolver<M>(m).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST(AffineProperties, MarginMatchesQuadraticForm) {
    UniformStream r(101, 0);
    for (int set = 0; set < 200; ++set) {
        const auto a = draw(r);
        const auto s = to_spec(a);
        const auto q = gfb_form(a);
        const auto q0 = u0_form(a);
        const auto chk = make_hyp_coupled(s, MatrixXd::Constant(1, 1, a.a), a.alpha);
        for (const auto& t : detail::draw_tuples(sampler_for(s, 50, static_cast<std::uint64_t>(set)), false)) {
            const Eigen::Vector3d d3(t.x[0] - t.y[0], t.p[0] - t.q[0], t.u[0] - t.v[0]);
            const Eigen::Vector2d d2(d3(0), d3(1));
            const double scale = 1.0 + d3.squaredNorm();
            EXPECT_NEAR(margin_at(chk, "gfb_coupled", t), d3.dot(q * d3), 1e-12 * scale * 20);
            EXPECT_NEAR(margin_at(chk, "u0_coupled", t), d2.dot(q0 * d2), 1e-12 * scale * 20);
        }
    }
}

TEST(AffineProperties, PassFailAgreesWithDefiniteness) {
    UniformStream r(202, 0);
    std::size_t fails = 0;
    for (int set = 0; set < 200; ++set) {
        const auto a = draw(r);
        const auto s = to_spec(a);
        const double e3 = min_eig(gfb_form(a)), e2 = min_eig(u0_form(a));
        const double worst = std::min(e3 / max_abs_eig(gfb_form(a)), e2 / max_abs_eig(u0_form(a)));
        const auto rep = check_hyp_coupled(s, MatrixXd::Constant(1, 1, a.a), a.alpha, sampler_for(s, 2000, 5));
        if (e3 >= 0.0 && e2 >= 0.0) {
            // positive semidefinite forms cannot fail beyond rounding
            EXPECT_GE(rep.margin, -1e-12) << set;
        } else if (worst < -0.2) {
            EXPECT_FALSE(rep.passed) << set;
            ++fails;
        }
    }
    EXPECT_GT(fails, 50u);
}

TEST(AffineProperties, EveryFailureWitnessReproduces) {
    UniformStream r(303, 0);
    std::size_t failures = 0;
    for (int set = 0; set < 200; ++set) {
        const auto a = draw(r);
        const auto s = to_spec(a);
        const MatrixXd A = MatrixXd::Constant(1, 1, a.a);
        const auto sampler = sampler_for(s, 500, static_cast<std::uint64_t>(set));
        std::vector<Check> checks{make_hyp_coupled(s, A, a.alpha), make_weaker_monotonicity(s, A, a.alpha),
                                  make_trade_condition(s, A, a.alpha),
                                  make_g_monotonicity(s, MatrixXd::Identity(1, 1), MatrixXd::Constant(1, 1, a.a), a.alpha),
                                  make_alpha_monotone(s.g_coef, a.alpha)};
        if (s.b_autonomous()) checks.push_back(make_hyp_autonomous(s, a.alpha));
        for (const auto& chk : checks) {
            const auto rep = run_check(chk, chk.hypothesis == "alpha" ? alpha_sampler(s.g_coef, sampler) : sampler);
            if (rep.passed) continue;
            ++failures;
            EXPECT_LT(rep.margin, -rep.tolerance);
            EXPECT_NEAR(margin_at(chk, rep.witness_condition, rep.witness), rep.margin, 1e-12) << chk.hypothesis;
        }
    }
    EXPECT_GT(failures, 200u);
}

TEST(AffineProperties, TwoDimensionalSets) {
    UniformStream r(404, 0);
    for (int set = 0; set < 50; ++set) {
        ProblemSpec s = builtin_catalog("autonomous_monotone", {});
        s.d = 2;
        s.m = 2;
        s.omega = Box::cube(2, -1, 1);
        s.p_box = Box::cube(2, -1, 1);
        s.u_box = Box::cube(2, -2, 2);
        auto rnd = [&](std::size_t rows, std::size_t cols) {
            MatrixXd m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.uniform(-1, 1);
            return m;
        };
        auto aff = [&](std::size_t out, std::size_t du) {
            AffineMap a;
            a.c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
            a.mx = rnd(out, 2);
            a.mp = rnd(out, 2);
            a.mu = rnd(out, du);
            return CoefficientField::affine(std::move(a));
        };
        s.f_coef = aff(2, 2);
        s.g_coef = aff(2, 2);
        s.b_coef = aff(2, 2);
        s.u0 = aff(2, 0);
        finalize_buffers(s);
        const MatrixXd h = rnd(2, 2);
        const MatrixXd A = h * h.transpose();
        const auto chk = make_hyp_coupled(s, A, 0.1);
        const auto rep = run_check(chk, sampler_for(s, 300, static_cast<std::uint64_t>(set)));
        EXPECT_NEAR(margin_at(chk, rep.witness_condition, rep.witness), rep.margin, 1e-12);
        const auto again = run_check(chk, sampler_for(s, 300, static_cast<std::uint64_t>(set)), 1e-9, 3);
        EXPECT_EQ(again.margin, rep.margin);
    }
}
