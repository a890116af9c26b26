#include <gtest/gtest.h>

#include <mfgnoise/mfgnoise.hpp>

#include <cmath>
#include <sstream>

using namespace mfgnoise;

TEST(ToyOde, TanhClosedForm) {
    const auto tr = toy_ode_solve(0.0, 0.0, 1.0, 1.0, 1e-3);
    ASSERT_FALSE(tr.blown_up);
    EXPECT_NEAR(tr.alpha.back(), std::tanh(1.0), 1e-8);
    EXPECT_NEAR(tr.beta.back(), 1.0 / std::cosh(1.0), 1e-8);
    EXPECT_EQ(tr.t.size(), 1001u);
    EXPECT_DOUBLE_EQ(tr.t.back(), 1.0);
    for (std::size_t k = 0; k < tr.t.size(); k += 100) EXPECT_NEAR(tr.alpha[k], std::tanh(tr.t[k]), 1e-10);
}

TEST(ToyOde, FourthOrder) {
    std::vector<double> err;
    for (double dt : {0.1, 0.05, 0.025}) err.push_back(std::abs(toy_ode_solve(0.0, 0.0, 1.0, 1.0, dt).alpha.back() - std::tanh(1.0)));
    for (std::size_t i = 0; i + 1 < err.size(); ++i) EXPECT_GE(std::log2(err[i] / err[i + 1]), 3.5);
}

TEST(ToyOde, NegativeAlphaBranchBlowsUp) {
    const auto tr = toy_ode_solve(2.0, -0.5, 1.0, 10.0, 1e-3);
    ASSERT_TRUE(tr.blown_up);
    ASSERT_TRUE(tr.blowup_time.has_value());
    EXPECT_GT(*tr.blowup_time, 0.0);
    EXPECT_LT(*tr.blowup_time, 10.0);
    for (double a : tr.alpha) EXPECT_TRUE(std::isfinite(a));
}

TEST(ToyOde, BaselineStableUnderHalving) {
    const auto a = toy_ode_solve(4.0, 1.0, 4.0, 2.0, 1e-3);
    const auto b = toy_ode_solve(4.0, 1.0, 4.0, 2.0, 5e-4);
    ASSERT_TRUE(a.blown_up && b.blown_up);
    EXPECT_NEAR(*a.blowup_time, *b.blowup_time, 5e-4 * *a.blowup_time);
    // escape is super-exponential, so the threshold barely moves the time
    const auto c = toy_ode_solve(4.0, 1.0, 4.0, 2.0, 1e-3, 1e8);
    EXPECT_NEAR(*a.blowup_time, *c.blowup_time, 1e-5);
}

TEST(ToyOde, NoBlowUpInsideHorizon) {
    const auto tr = toy_ode_solve(0.0, 1.0, 1.0, 3.0, 1e-2);
    EXPECT_FALSE(tr.blown_up);
    EXPECT_FALSE(tr.blowup_time.has_value());
    EXPECT_NEAR(tr.alpha.back(), 1.0, 1e-12);  // alpha = 1 is a fixed point when lambda = 0
}

TEST(ToyOde, RejectsBadStep) {
    EXPECT_THROW(toy_ode_solve(0, 0, 1, 1, 0.0), ValidationError);
    EXPECT_THROW(toy_ode_solve(0, 0, 1, -1, 1e-3), ValidationError);
}

TEST(ToyOde, CsvLayout) {
    std::ostringstream os;
    write_toy_csv(os, toy_ode_solve(0.0, 0.0, 1.0, 0.5, 0.25));
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "t,alpha,beta");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}

TEST(Certificate, Examples) {
    const auto a = toy_blowup_certificate(4, 1, 4);
    EXPECT_EQ(a.verdict, BlowupVerdict::GuaranteedBlowup);
    EXPECT_NEAR(a.value, 1.0 - 16.0 * std::exp(-2.0), 1e-15);
    EXPECT_NEAR(a.value, -1.1654, 1e-4);
    EXPECT_EQ(toy_blowup_certificate(0, 1, 1).verdict, BlowupVerdict::NoCertificate);
    const auto c = toy_blowup_certificate(2, -0.5, 1);
    EXPECT_EQ(c.verdict, BlowupVerdict::GuaranteedBlowup);
    EXPECT_EQ(c.value, 2.0);
    EXPECT_EQ(toy_blowup_certificate(100, 0, 1).verdict, BlowupVerdict::NoCertificate);
    EXPECT_NE(verdict_line(a).find("GuaranteedBlowup"), std::string::npos);
}

TEST(Certificate, SoundAtNumericalLevel) {
    UniformStream r(8, 0);
    std::size_t certified = 0;
    for (int i = 0; i < 400 && certified < 40; ++i) {
        const double lambda = r.uniform(0, 10), a0 = r.uniform(-2, 2), b0 = r.uniform(0, 5);
        if (a0 > -0.1 && a0 < 0.1) continue;  // keep escape times short
        if (toy_blowup_certificate(lambda, a0, b0).verdict != BlowupVerdict::GuaranteedBlowup) continue;
        ++certified;
        for (double dt : {1e-3, 5e-4})
            EXPECT_TRUE(toy_ode_solve(lambda, a0, b0, 20.0, dt).blown_up) << lambda << ' ' << a0 << ' ' << b0;
    }
    EXPECT_GE(certified, 20u);
}

TEST(Analytic, HeatQuadratic) {
    EXPECT_EQ(analytic_solution("heat_quadratic", {0.5}, 1.0, {0.3}, {0.0})[0], 1.0);
    EXPECT_DOUBLE_EQ(analytic_solution("heat_quadratic", {0.25}, 2.0, {0.0, 0.0}, {1.0, 2.0})[0], 5.0 + 2.0);
    EXPECT_EQ(analytic_solution("heat_quadratic", {0.5}, 0.0, {0.0}, {1.5})[0], 2.25);
}

TEST(Analytic, LinearToy) {
    const double v = analytic_solution("linear_toy", {0, 0, 1}, 1.0, {2.0}, {3.0})[0];
    EXPECT_NEAR(v, 2 * std::tanh(1.0) + 3 / std::cosh(1.0), 1e-8);
    EXPECT_NEAR(v, 3.467, 1e-3);
    EXPECT_EQ(analytic_solution("linear_toy", {4, 1, 4}, 0.0, {0.5}, {-0.25})[0], 0.5 - 1.0);
    EXPECT_THROW(analytic_solution("linear_toy", {4, 1, 4}, 1.0, {0.5}, {0.5}), DomainError);
    EXPECT_THROW(analytic_solution("nope", {}, 1.0, {0.5}, {0.5}), ValidationError);
}

TEST(Analytic, LinearToySolvesThePde) {
    // dU/dt + U dU/dx + lambda x dU/dp - x = 0
    const std::vector<double> par{1.0, 0.5, 0.5};
    const double lambda = par[0];
    auto u = [&](double t, double x, double p) { return analytic_solution("linear_toy", par, t, {x}, {p})[0]; };
    const double ht = 1e-3, h = 1e-3;
    double worst = 0.0;
    for (double t : {0.1, 0.3, 0.5})
        for (double x : {-1.0, 0.2, 0.8})
            for (double p : {-0.5, 0.0, 0.7}) {
                const double ut = (u(t + ht, x, p) - u(t - ht, x, p)) / (2 * ht);
                const double ux = (u(t, x + h, p) - u(t, x - h, p)) / (2 * h);
                const double up = (u(t, x, p + h) - u(t, x, p - h)) / (2 * h);
                worst = std::max(worst, std::abs(ut + u(t, x, p) * ux + lambda * x * up - x));
            }
    EXPECT_LE(worst, 1e-6);
}

TEST(Inverse, InitialData) {
    ValueField f({0.0}, Grid(Box::cube(1, -1, 1), 9, Box::cube(1, -1, 1), 9), 1);
    const Grid& g = f.grid();
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        double x = 0.0, p = 0.0;
        g.node(s, &x, &p);
        f.at(0, s, 0) = x + p;
    }
    const auto r = inverse_identity_check(f, 0);
    EXPECT_LE(r.max_residual, 1e-15);
    EXPECT_LE(r.numeric_inverse_gap, 1e-12);
    EXPECT_NEAR(r.min_increment, 0.25, 1e-15);
}

TEST(Inverse, SolverField) {
    auto s = builtin_catalog("invertible_transport", {});
    set_horizon(s, 0.5);
    MonteCarloConfig mc;
    mc.n_paths = 1;
    const auto res = picard_solve(s, {17, 17, 2}, mc, {});
    ASSERT_EQ(res.status, SolveStatus::Converged);
    const auto r = inverse_identity_check(res.field, res.field.n_times() - 1);
    EXPECT_DOUBLE_EQ(r.t, 0.5);
    EXPECT_LE(r.max_residual, 1e-2);
    EXPECT_LE(r.numeric_inverse_gap, 1e-2);
}

TEST(Inverse, NonMonotoneRejected) {
    ValueField f({0.0}, Grid(Box::cube(1, -1, 1), 5, Box::cube(1, -1, 1), 5), 1);
    const Grid& g = f.grid();
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        double x = 0.0, p = 0.0;
        g.node(s, &x, &p);
        f.at(0, s, 0) = x * x + p;
    }
    EXPECT_THROW(inverse_identity_check(f, 0), DomainError);
}
