#include <gtest/gtest.h>

#include <mfgnoise/mfgnoise.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace mfgnoise;

namespace {

Grid unit_grid(std::size_t nx = 5, std::size_t np = 3) { return Grid(Box::cube(1, 0, 1), nx, Box::cube(1, -1, 1), np); }

ValueField affine_field() {
    // U(t,x,p) = 1 + 2t - 3x + 0.5p
    ValueField f({0.0, 0.5, 1.0}, unit_grid(), 1);
    const Grid& g = f.grid();
    for (std::size_t k = 0; k < f.n_times(); ++k)
        for (std::size_t s = 0; s < g.n_space(); ++s) {
            double x = 0.0, p = 0.0;
            g.node(s, &x, &p);
            f.at(k, s, 0) = 1 + 2 * f.times()[k] - 3 * x + 0.5 * p;
        }
    return f;
}

MonteCarloConfig mc_of(std::size_t n, std::uint64_t seed, std::size_t threads = 1) {
    MonteCarloConfig mc;
    mc.n_paths = n;
    mc.seed = seed;
    mc.threads = threads;
    return mc;
}

ProblemSpec zero_problem() {
    ProblemSpec s = builtin_catalog("invertible_transport", {});
    s.name = "zero";
    s.b_coef = CoefficientField::zero(1, 1, 1, 1);
    s.u0 = affine_1d(0.25, 1.0, -0.5, 0.0, 0);
    finalize_buffers(s);
    return s;
}

}  // namespace

TEST(ValueFieldTest, NodesReturnStoredValues) {
    ValueField f({0.0, 1.0}, unit_grid(), 1);
    for (std::size_t i = 0; i < f.values().size(); ++i) f.values()[i] = std::sin(3.0 * static_cast<double>(i));
    const Grid& g = f.grid();
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t s = 0; s < g.n_space(); ++s) {
            double x = 0.0, p = 0.0;
            g.node(s, &x, &p);
            EXPECT_EQ(f.evaluate(f.times()[k], {&x, 1}, {&p, 1})[0], f.at(k, s, 0));
        }
}

TEST(ValueFieldTest, AffineIsReproduced) {
    const auto f = affine_field();
    for (double t : {0.0, 0.13, 0.5, 0.77, 1.0})
        for (double x : {0.0, 0.11, 0.5, 0.93, 1.0})
            for (double p : {-1.0, -0.3, 0.0, 0.6, 1.0})
                EXPECT_NEAR(f.evaluate(t, {&x, 1}, {&p, 1})[0], 1 + 2 * t - 3 * x + 0.5 * p, 1e-13);
}

TEST(ValueFieldTest, CellMidpoint) {
    ValueField f({0.0}, Grid(Box::cube(1, 0, 1), 2, Box::cube(1, 0, 1), 2), 1);
    f.at(0, 0, 0) = 0.0;  // (x=0, p=0)
    f.at(0, 1, 0) = 0.0;  // (x=0, p=1)
    f.at(0, 2, 0) = 1.0;
    f.at(0, 3, 0) = 1.0;
    const double x = 0.5, p = 0.25;
    EXPECT_DOUBLE_EQ(f.evaluate(0.0, {&x, 1}, {&p, 1})[0], 0.5);
}

TEST(ValueFieldTest, OutOfDomainThrows) {
    const auto f = affine_field();
    double x = 1.5, p = 0.0, xin = 0.5, pout = -2.0;
    EXPECT_THROW(f.evaluate(0.5, {&x, 1}, {&p, 1}), DomainError);
    EXPECT_THROW(f.evaluate(0.5, {&xin, 1}, {&pout, 1}), DomainError);
    EXPECT_THROW(f.evaluate(1.5, {&xin, 1}, {&p, 1}), DomainError);
}

TEST(ValueFieldTest, InterpolationLipschitzBound) {
    ValueField f({0.0}, unit_grid(6, 7), 1);
    UniformStream r(3, 0);
    for (double& v : f.values()) v = r.uniform(-1, 1);
    const Grid& g = f.grid();
    const double hx = 1.0 / 5, hp = 2.0 / 6;
    double qx = 0, qp = 0;
    for (std::size_t ix = 0; ix < g.n_x; ++ix)
        for (std::size_t ip = 0; ip < g.n_p; ++ip) {
            const double v = f.at(0, ix * g.n_p + ip, 0);
            if (ix + 1 < g.n_x) qx = std::max(qx, std::abs(f.at(0, (ix + 1) * g.n_p + ip, 0) - v) / hx);
            if (ip + 1 < g.n_p) qp = std::max(qp, std::abs(f.at(0, ix * g.n_p + ip + 1, 0) - v) / hp);
        }
    for (int i = 0; i < 2000; ++i) {
        double x1 = r.uniform(0, 1), x2 = r.uniform(0, 1), p1 = r.uniform(-1, 1), p2 = r.uniform(-1, 1), a, b;
        f.space_eval(0, &x1, &p1, &a);
        f.space_eval(0, &x2, &p2, &b);
        EXPECT_LE(std::abs(a - b), qx * std::abs(x1 - x2) + qp * std::abs(p1 - p2) + 1e-12);
    }
}

TEST(ValueFieldTest, SaveLoadRoundTrip) {
    const auto f = affine_field();
    const std::string path = ::testing::TempDir() + "/field.bin";
    f.save(path);
    const auto g = ValueField::load(path);
    EXPECT_EQ(g.times(), f.times());
    EXPECT_EQ(g.values(), f.values());
    EXPECT_TRUE(g.grid() == f.grid());
    std::remove(path.c_str());
}

TEST(ValueFieldTest, LoadRejectsGarbage) {
    const std::string path = ::testing::TempDir() + "/garbage.bin";
    std::ofstream(path) << "not a field";
    EXPECT_THROW(ValueField::load(path), Error);
    std::remove(path.c_str());
    EXPECT_THROW(ValueField::load(path), Error);
}

TEST(SliceGradientTest, AffineNorms) {
    const auto f = affine_field();
    const auto g = slice_gradient(f, 1);
    EXPECT_NEAR(g.dx_norm, 3.0, 1e-12);
    EXPECT_NEAR(g.dp_norm, 0.5, 1e-12);
}

// --- picard_solve ---------------------------------------------------------

TEST(Picard, ZeroCoefficientsGiveInitialData) {
    const auto s = zero_problem();
    ASSERT_TRUE(s.iterate_independent());
    const auto r = picard_solve(s, {9, 9, 2}, mc_of(8, 1), {});
    EXPECT_EQ(r.status, SolveStatus::Converged);
    EXPECT_TRUE(r.direct_mode);
    EXPECT_LE(r.last_residual(), 1e-6);
    const Grid& g = r.field.grid();
    for (std::size_t k = 0; k < r.field.n_times(); ++k)
        for (std::size_t sn = 0; sn < g.n_space(); ++sn) {
            double x = 0.0, p = 0.0;
            g.node(sn, &x, &p);
            EXPECT_NEAR(r.field.at(k, sn, 0), 0.25 + x - 0.5 * p, 1e-15);
        }
    EXPECT_DOUBLE_EQ(r.field.times().back(), s.horizon);
}

TEST(Picard, RiccatiTanh) {
    const auto s = builtin_catalog("linear_toy", {0.0, 0.0, 1.0});
    const auto r = picard_solve(s, {}, mc_of(1, 0), {});
    ASSERT_EQ(r.status, SolveStatus::Converged);
    EXPECT_LE(r.last_residual(), 1e-6);
    const auto& last = r.grad_history.back();
    EXPECT_DOUBLE_EQ(last.t, 1.0);
    EXPECT_NEAR(last.dx_norm, std::tanh(1.0), 0.02);
    EXPECT_NEAR(last.dp_norm, 1.0 / std::cosh(1.0), 0.03);
}

TEST(Picard, FiniteTimeBlowUp) {
    auto s = builtin_catalog("linear_toy", {4.0, 1.0, 4.0});
    set_horizon(s, 2.0);
    const auto r = picard_solve(s, {}, mc_of(1, 0), {});
    ASSERT_EQ(r.status, SolveStatus::BlowUp);
    ASSERT_TRUE(r.blowup_time.has_value());
    EXPECT_LE(*r.blowup_time, s.horizon);
    const auto ref = toy_ode_solve(4.0, 1.0, 4.0, 2.0, 1e-3);
    ASSERT_TRUE(ref.blown_up);
    EXPECT_NEAR(*r.blowup_time, *ref.blowup_time, 0.1 * *ref.blowup_time);
}

TEST(Picard, InvertibleTransport) {
    const auto s = builtin_catalog("invertible_transport", {});
    const auto r = picard_solve(s, {9, 9, 2}, mc_of(1, 0), {});
    ASSERT_EQ(r.status, SolveStatus::Converged);
    for (double t : {0.5, 1.0})
        for (double x : {-1.0, 0.0, 0.5})
            for (double p : {-1.0, 0.25, 1.0})
                EXPECT_NEAR(r.field.evaluate(t, {&x, 1}, {&p, 1})[0], (x + p) / (1 + t), 5e-3);
}

TEST(Picard, MaxIterationsIsAStatus) {
    const auto s = builtin_catalog("linear_toy", {0.0, 0.0, 1.0});
    ContinuationConfig ctrl;
    ctrl.max_iter = 1;
    const auto r = picard_solve(s, {5, 5, 2}, mc_of(1, 0), ctrl);
    EXPECT_EQ(r.status, SolveStatus::MaxIterations);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Picard, ValidationGate) {
    auto s = builtin_catalog("linear_toy", {0.0, 0.0, 1.0});
    s.omega_is_truncation = false;
    s.f_coef = affine_1d(0.5, -1.0, 0.0, 0.0);  // fails the boundary check
    s.omega = Box::cube(1, 0.0, 1.0);
    EXPECT_THROW(picard_solve(s, {5, 5, 2}, mc_of(1, 0), {}), ValidationError);
    ContinuationConfig ctrl;
    ctrl.force = true;
    ctrl.max_iter = 3;
    EXPECT_NO_THROW(picard_solve(s, {5, 5, 2}, mc_of(1, 0), ctrl));
}

TEST(Picard, BadConfigsThrow) {
    const auto s = zero_problem();
    EXPECT_THROW(picard_solve(s, {1, 5, 2}, mc_of(1, 0), {}), ValidationError);
    EXPECT_THROW(picard_solve(s, {5, 5, 0}, mc_of(1, 0), {}), ValidationError);
    EXPECT_THROW(picard_solve(s, {5, 5, 2}, mc_of(0, 0), {}), ValidationError);
    ContinuationConfig bad;
    bad.damping = 1.0;
    EXPECT_THROW(picard_solve(s, {5, 5, 2}, mc_of(1, 0), bad), ValidationError);
}

namespace {

ProblemSpec noisy_toy() {
    auto s = builtin_catalog("linear_toy", {1.0, 0.5, 0.5});
    s.sigma = 0.2;
    set_horizon(s, 0.5);
    return s;
}

}  // namespace

TEST(Picard, DeterministicAcrossThreads) {
    const auto s = noisy_toy();
    const auto a = picard_solve(s, {7, 7, 2}, mc_of(64, 5, 1), {});
    const auto b = picard_solve(s, {7, 7, 2}, mc_of(64, 5, 3), {});
    EXPECT_EQ(a.field.values(), b.field.values());
    EXPECT_EQ(a.field.times(), b.field.times());
    ASSERT_EQ(a.picard_residuals.size(), b.picard_residuals.size());
    for (std::size_t i = 0; i < a.picard_residuals.size(); ++i)
        EXPECT_EQ(a.picard_residuals[i].residual, b.picard_residuals[i].residual);
}

TEST(Picard, FixedPointUnderFreshSeed) {
    const auto s = noisy_toy();
    MonteCarloConfig mc = mc_of(400, 5);
    ContinuationConfig ctrl;
    const auto r = picard_solve(s, {7, 7, 2}, mc, ctrl);
    ASSERT_EQ(r.status, SolveStatus::Converged);
    // re-apply the Picard map of the last window with a different seed
    const auto& last = r.picard_residuals.back();
    const auto& times = r.field.times();
    const auto k0 = r.field.time_index(last.t_start);
    ASSERT_TRUE(k0.has_value());
    IterateCoefficients c{&s, &r.field, last.t_start, true};
    auto terminal = [&](const double* x, const double* p, double* out) { r.field.space_eval(*k0, x, p, out); };
    const PathDomain dom{s.clamp_x_box(), s.buffered_p_box()};
    MonteCarloConfig fresh = mc;
    fresh.seed = 987654321;
    const auto again = feynman_kac_apply(c, terminal, times.back() - last.t_start, r.field.grid(), 1, fresh,
                                         s.discount, dom);
    double diff = 0.0;
    for (std::size_t n = 0; n < r.field.grid().n_space(); ++n)
        diff = std::max(diff, std::abs(again.values[n] - r.field.at(times.size() - 1, n, 0)));
    EXPECT_LE(diff, 2.0 * (ctrl.tol + 3.0 * std::max(again.max_std_err(), r.max_std_err)));
}

TEST(Picard, AutonomousSpecializationAgrees) {
    const auto s = builtin_catalog("autonomous_monotone", {});
    auto short_s = s;
    set_horizon(short_s, 0.5);
    ASSERT_TRUE(short_s.b_autonomous());
    ContinuationConfig on, off;
    off.autonomous_psi = false;
    const auto a = picard_solve(short_s, {7, 7, 2}, mc_of(64, 2), on);
    const auto b = picard_solve(short_s, {7, 7, 2}, mc_of(64, 2), off);
    ASSERT_EQ(a.status, SolveStatus::Converged);
    ASSERT_EQ(b.status, SolveStatus::Converged);
    ASSERT_EQ(a.field.values().size(), b.field.values().size());
    for (std::size_t i = 0; i < a.field.values().size(); ++i)
        EXPECT_NEAR(a.field.values()[i], b.field.values()[i], on.tol);
}

TEST(Picard, PureDiffusionHeat) {
    auto s = builtin_catalog("heat_only", {0.5});
    ASSERT_TRUE(s.pure_diffusion());
    MonteCarloConfig mc = mc_of(20000, 7);
    mc.dt = 1.0 / 64;
    const auto r = picard_solve(s, {5, 9, 1}, mc, {});
    ASSERT_EQ(r.status, SolveStatus::Converged);
    for (double x : {-1.0, 0.0, 1.0}) {
        const double p = 0.0;
        EXPECT_NEAR(r.field.evaluate(1.0, {&x, 1}, {&p, 1})[0], 1.0, 3.0 * r.max_std_err + 1e-3);
    }
}

TEST(Picard, ResultInvariants) {
    for (const auto& [name, params] : std::vector<std::pair<std::string, std::vector<double>>>{
             {"linear_toy", {4.0, 1.0, 4.0}}, {"invertible_transport", {}}}) {
        auto s = builtin_catalog(name, params);
        set_horizon(s, 1.0);
        ContinuationConfig ctrl;
        const auto r = picard_solve(s, {7, 7, 2}, mc_of(1, 0), ctrl);
        if (r.status == SolveStatus::BlowUp) {
            ASSERT_TRUE(r.blowup_time.has_value()) << name;
            EXPECT_LE(*r.blowup_time, s.horizon) << name;
        }
        if (r.status == SolveStatus::Converged) {
            EXPECT_LE(r.last_residual(), ctrl.tol) << name;
        }
        EXPECT_EQ(r.grad_history.size(), r.field.n_times());
    }
}
