#include <gtest/gtest.h>

#include <mfgnoise/feynman_kac.hpp>
#include <mfgnoise/paths.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace mfgnoise;

namespace {

auto zero3 = [](double, const double*, const double*, double* o) { o[0] = 0.0; };

PathDomain wide(std::size_t d = 1, std::size_t m = 1) { return {Box::cube(d, -50, 50), Box::cube(m, -50, 50)}; }

MonteCarloConfig mc_of(std::size_t n, std::size_t steps, std::uint64_t seed, std::size_t threads = 1) {
    MonteCarloConfig mc;
    mc.n_paths = n;
    mc.steps = steps;
    mc.seed = seed;
    mc.threads = threads;
    return mc;
}

/// Constant volatility Sigma (m = 2), no drift.
struct ConstVol {
    std::array<double, 4> s;
    std::size_t d() const { return 1; }
    std::size_t m() const { return 2; }
    double sigma() const { return 0.0; }
    bool has_volatility() const { return true; }
    void eval(double, const double*, const double*, FrozenSample& out) const {
        out.bx[0] = 0.0;
        out.bp[0] = out.bp[1] = 0.0;
        out.a[0] = 0.0;
        for (int i = 0; i < 4; ++i) out.vol[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)];
    }
};

}  // namespace

TEST(Simulate, ZeroCoefficientsStayPut) {
    const auto c = make_frozen(1, 1, 0.0, zero3, zero3, zero3);
    const auto b = simulate(c, 1.0, {{0.3}, {-0.2}}, mc_of(4, 16, 1), wide());
    for (std::size_t k = 0; k < b.n_paths; ++k)
        for (std::size_t j = 0; j <= b.n_steps; ++j) {
            EXPECT_EQ(b.x(k, j)[0], 0.3);
            EXPECT_EQ(b.p(k, j)[0], -0.2);
        }
}

TEST(Simulate, StartIsRecorded) {
    const auto c = make_frozen(1, 1, 0.3, zero3, zero3, zero3);
    const auto b = simulate(c, 0.5, {{0.1}, {0.4}}, mc_of(32, 8, 5), wide());
    for (std::size_t k = 0; k < b.n_paths; ++k) {
        EXPECT_EQ(b.x(k, 0)[0], 0.1);
        EXPECT_EQ(b.p(k, 0)[0], 0.4);
    }
    EXPECT_DOUBLE_EQ(b.dt * static_cast<double>(b.n_steps), 0.5);
}

TEST(Simulate, LinearOdeFirstOrder) {
    auto fx = [](double, const double* x, const double*, double* o) { o[0] = x[0]; };
    const auto c = make_frozen(1, 1, 0.0, fx, zero3, zero3);
    const double exact = std::exp(-1.0);
    double prev_err = 0.0;
    for (std::size_t steps : {64u, 128u, 256u}) {
        const auto b = simulate(c, 1.0, {{1.0}, {0.0}}, mc_of(1, steps, 0), wide());
        const double err = std::abs(b.x(0, steps)[0] - exact);
        EXPECT_LT(err, 2.0 / static_cast<double>(steps));
        if (prev_err > 0.0) {
            EXPECT_GE(std::log2(prev_err / err), 0.9);
        }
        prev_err = err;
    }
}

TEST(Simulate, VarianceOfDiffusion) {
    const auto c = make_frozen(1, 1, 0.5, zero3, zero3, zero3);
    const std::size_t n = 100000;
    const auto b = simulate(c, 1.0, {{0.0}, {0.0}}, mc_of(n, 16, 11), wide());
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = b.p(k, b.n_steps)[0];
    double mean = pairwise_sum(v) / n;
    for (double& z : v) z = (z - mean) * (z - mean);
    const double var = pairwise_sum(v) / (n - 1);
    // var of the sample variance of a normal: 2 s^4 / (n-1); 99% two sided
    EXPECT_NEAR(var, 1.0, 2.576 * std::sqrt(2.0 / (n - 1)));
}

TEST(Simulate, ConstantVolatilityCovariance) {
    ConstVol c{{0.5, 0.0, 0.3, 0.4}};
    const std::size_t n = 100000;
    const PathDomain dom{Box::cube(1, -50, 50), Box::cube(2, -50, 50)};
    const auto b = simulate(c, 1.0, {{0.0}, {0.0, 0.0}}, mc_of(n, 8, 2), dom);
    // 2 Sigma Sigma^T t
    const double e00 = 2 * (0.25), e01 = 2 * (0.5 * 0.3), e11 = 2 * (0.09 + 0.16);
    double s00 = 0, s01 = 0, s11 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double* p = b.p(k, b.n_steps);
        s00 += p[0] * p[0];
        s01 += p[0] * p[1];
        s11 += p[1] * p[1];
    }
    const double tol = 4.0 * std::sqrt(2.0 / n) * 1.0;
    EXPECT_NEAR(s00 / n, e00, tol);
    EXPECT_NEAR(s01 / n, e01, tol);
    EXPECT_NEAR(s11 / n, e11, tol);
}

TEST(Simulate, ThreadIndependent) {
    auto fb = [](double, const double*, const double* p, double* o) { o[0] = std::sin(p[0]); };
    const auto c = make_frozen(1, 1, 0.2, zero3, fb, zero3);
    const auto a = simulate(c, 1.0, {{0.0}, {0.1}}, mc_of(257, 32, 3, 1), wide());
    const auto b = simulate(c, 1.0, {{0.0}, {0.1}}, mc_of(257, 32, 3, 4), wide());
    EXPECT_EQ(a.p_paths, b.p_paths);
    EXPECT_EQ(a.x_paths, b.x_paths);
}

TEST(Simulate, ClampEventsCounted) {
    const auto c = make_frozen(1, 1, 2.0, zero3, zero3, zero3);
    const PathDomain dom{Box::cube(1, -1, 1), Box::cube(1, -0.1, 0.1)};
    const auto b = simulate(c, 1.0, {{0.0}, {0.0}}, mc_of(64, 32, 1), dom);
    EXPECT_GT(b.clamp_events, 0u);
    EXPECT_GT(b.clamp_rate(), 0.01);
    for (std::size_t k = 0; k < b.n_paths; ++k) EXPECT_LE(std::abs(b.p(k, b.n_steps)[0]), 0.1);
}

TEST(Simulate, NonFiniteCoefficientReportsWitness) {
    auto bad = [](double, const double* x, const double*, double* o) { o[0] = x[0] > 0.5 ? NAN : -1.0; };
    const auto c = make_frozen(1, 1, 0.0, bad, zero3, zero3);
    try {
        simulate(c, 1.0, {{0.0}, {0.0}}, mc_of(1, 16, 0), wide());
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("X="), std::string::npos);
    }
}

TEST(Coupled, IdenticalStartsIdenticalPaths) {
    const auto c = make_frozen(1, 1, 0.4, zero3, zero3, zero3);
    const auto b = simulate_coupled(c, 1.0, {{0.2}, {0.3}}, {{0.2}, {0.3}}, mc_of(64, 16, 9), wide());
    EXPECT_EQ(b.x_paths, b.paired->y_paths);
    EXPECT_EQ(b.p_paths, b.paired->q_paths);
}

TEST(Coupled, NoiseCancelsInDifference) {
    // dp = -p ds + noise: p - q = (p0 - q0) e^{-s} for Euler up to O(dt)
    auto fb = [](double, const double*, const double* p, double* o) { o[0] = p[0]; };
    const auto c = make_frozen(1, 1, 0.3, zero3, fb, zero3);
    const std::size_t steps = 256;
    const auto b = simulate_coupled(c, 1.0, {{0.0}, {0.5}}, {{0.0}, {-0.5}}, mc_of(32, steps, 4), wide());
    for (std::size_t k = 0; k < b.n_paths; ++k)
        for (std::size_t j = 0; j <= steps; j += 32) {
            const double s = static_cast<double>(j) / steps;
            EXPECT_NEAR(b.p(k, j)[0] - b.q(k, j)[0], std::exp(-s), 2.0 / steps);
        }
}

TEST(Coupled, GrowingDifferenceForPositiveSign) {
    // b = -p gives dp = +p ds, so the gap grows like e^s
    auto fb = [](double, const double*, const double* p, double* o) { o[0] = -p[0]; };
    const auto c = make_frozen(1, 1, 0.3, zero3, fb, zero3);
    const std::size_t steps = 512;
    const auto b = simulate_coupled(c, 1.0, {{0.0}, {0.1}}, {{0.0}, {0.0}}, mc_of(8, steps, 4), wide());
    for (std::size_t k = 0; k < b.n_paths; ++k)
        EXPECT_NEAR(b.p(k, steps)[0] - b.q(k, steps)[0], 0.1 * std::exp(1.0), 0.1 * 3.0 / steps);
}

TEST(Coupled, IndependentDriverSpreadsMore) {
    const auto c = make_frozen(1, 1, 0.5, zero3, zero3, zero3);
    const auto shared = simulate_coupled(c, 1.0, {{0.0}, {0.0}}, {{0.0}, {0.0}}, mc_of(2000, 16, 1), wide(), true);
    const auto indep = simulate_coupled(c, 1.0, {{0.0}, {0.0}}, {{0.0}, {0.0}}, mc_of(2000, 16, 1), wide(), false);
    auto msd = [](const PathBundle& b) {
        double s = 0;
        for (std::size_t k = 0; k < b.n_paths; ++k) {
            const double d = b.p(k, b.n_steps)[0] - b.q(k, b.n_steps)[0];
            s += d * d;
        }
        return s / static_cast<double>(b.n_paths);
    };
    EXPECT_EQ(msd(shared), 0.0);
    EXPECT_GT(msd(indep), 1.5);  // 2 * 2 sigma t = 2
}

TEST(PathDump, WritesHeaderAndRows) {
    const auto c = make_frozen(1, 1, 0.1, zero3, zero3, zero3);
    const auto b = simulate_coupled(c, 1.0, {{0.0}, {0.0}}, {{0.5}, {0.5}}, mc_of(2, 4, 1), wide());
    const std::string path = ::testing::TempDir() + "/paths.csv";
    write_path_dump(b, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "path,step,s,x0,p0,y0,q0");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 2u * 5u);
    std::remove(path.c_str());
}

TEST(Config, InvalidMonteCarlo) {
    const auto c = make_frozen(1, 1, 0.1, zero3, zero3, zero3);
    EXPECT_THROW(simulate(c, 1.0, {{0.0}, {0.0}}, mc_of(0, 4, 1), wide()), ValidationError);
    EXPECT_THROW(simulate(c, 0.0, {{0.0}, {0.0}}, mc_of(1, 4, 1), wide()), ValidationError);
    EXPECT_THROW(simulate(c, 1.0, {{0.0, 1.0}, {0.0}}, mc_of(1, 4, 1), wide()), ValidationError);
}

// --- Feynman-Kac ------------------------------------------------------------

namespace {

Grid small_grid() { return Grid(Box::cube(1, -1, 1), 5, Box::cube(1, -1, 1), 5); }

auto u0_affine = [](const double* x, const double* p, double* o) { o[0] = 2.0 * x[0] - p[0]; };

}  // namespace

TEST(FeynmanKac, IdentityWithZeroData) {
    const auto c = make_frozen(1, 1, 0.0, zero3, zero3, zero3);
    const Grid g = small_grid();
    const auto r = feynman_kac_apply(c, u0_affine, 0.7, g, 1, mc_of(16, 8, 1), 0.0, wide());
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        double x = 0.0, p = 0.0, v = 0.0;
        g.node(s, &x, &p);
        u0_affine(&x, &p, &v);
        EXPECT_EQ(r.values[s], v);
    }
}

TEST(FeynmanKac, ConstantIntegrand) {
    auto one = [](double, const double*, const double*, double* o) { o[0] = 1.0; };
    const auto c = make_frozen(1, 1, 0.0, zero3, zero3, one);
    const Grid g = small_grid();
    const auto r = feynman_kac_apply(c, u0_affine, 0.7, g, 1, mc_of(16, 8, 1), 0.0, wide());
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        double x = 0.0, p = 0.0, v = 0.0;
        g.node(s, &x, &p);
        u0_affine(&x, &p, &v);
        EXPECT_NEAR(r.values[s], 0.7 + v, 1e-14);
    }
}

TEST(FeynmanKac, DiscountedConstantIntegrand) {
    auto one = [](double, const double*, const double*, double* o) { o[0] = 1.0; };
    auto zero_u0 = [](const double*, const double*, double* o) { o[0] = 0.0; };
    const auto c = make_frozen(1, 1, 0.0, zero3, zero3, one);
    const Grid g = small_grid();
    MonteCarloConfig mc = mc_of(1, 4096, 1);
    const auto r = feynman_kac_apply(c, zero_u0, 1.0, g, 1, mc, 0.5, wide());
    // int_0^1 e^{-s/2} ds with the left rule
    EXPECT_NEAR(r.values[0], 2.0 * (1.0 - std::exp(-0.5)), 1e-3);
}

TEST(FeynmanKac, HeatSecondMoment) {
    auto sq = [](const double*, const double* p, double* o) { o[0] = p[0] * p[0]; };
    const auto c = make_frozen(1, 1, 0.5, zero3, zero3, zero3);
    const Grid g(Box::cube(1, -1, 1), 2, Box::cube(1, 0, 0.5), 2);
    const auto r = feynman_kac_apply(c, sq, 1.0, g, 1, mc_of(20000, 16, 3), 0.0, wide());
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        double x = 0.0, p = 0.0;
        g.node(s, &x, &p);
        EXPECT_NEAR(r.values[s], p * p + 1.0, 3.0 * r.std_err[s] + 1e-12);
    }
}

TEST(FeynmanKac, PureDiffusionMatchesGeneral) {
    auto sq = [](const double*, const double* p, double* o) { o[0] = p[0] * p[0]; };
    const auto c = make_frozen(1, 1, 0.5, zero3, zero3, zero3);
    const Grid g(Box::cube(1, -1, 1), 3, Box::cube(1, -1, 1), 9);
    const Box clamp = Box::cube(1, -1.8, 1.8);
    const PathDomain dom{Box::cube(1, -1, 1), clamp};
    MonteCarloConfig mc = mc_of(500, 32, 5);
    const auto gen = feynman_kac_apply(c, sq, 0.5, g, 1, mc, 0.0, dom);
    const auto fast = feynman_kac_pure_diffusion(sq, {0.5}, g, 1, 0.5, mc, 0.0, clamp);
    ASSERT_EQ(fast.size(), 1u);
    for (std::size_t s = 0; s < g.n_space(); ++s) EXPECT_NEAR(gen.values[s], fast[0].values[s], 1e-12);
    EXPECT_EQ(gen.clamp_events, fast[0].clamp_events);
}

TEST(FeynmanKac, MonotoneInRunningCost) {
    auto a_lo = [](double, const double* x, const double* p, double* o) { o[0] = std::sin(x[0] + p[0]); };
    auto a_hi = [](double, const double* x, const double* p, double* o) { o[0] = std::sin(x[0] + p[0]) + 0.1; };
    auto fx = [](double, const double* x, const double*, double* o) { o[0] = 0.5 * x[0]; };
    auto fb = [](double, const double*, const double* p, double* o) { o[0] = p[0]; };
    const auto lo = make_frozen(1, 1, 0.2, fx, fb, a_lo);
    const auto hi = make_frozen(1, 1, 0.2, fx, fb, a_hi);
    const Grid g = small_grid();
    const auto rl = feynman_kac_apply(lo, u0_affine, 1.0, g, 1, mc_of(64, 16, 7), 0.0, wide());
    const auto rh = feynman_kac_apply(hi, u0_affine, 1.0, g, 1, mc_of(64, 16, 7), 0.0, wide());
    for (std::size_t s = 0; s < g.n_space(); ++s) EXPECT_GE(rh.values[s], rl.values[s]);
}

TEST(FeynmanKac, ThreadIndependent) {
    auto sq = [](const double*, const double* p, double* o) { o[0] = p[0] * p[0]; };
    auto fb = [](double, const double*, const double* p, double* o) { o[0] = std::sin(p[0]); };
    const auto c = make_frozen(1, 1, 0.3, zero3, fb, zero3);
    const Grid g = small_grid();
    const auto a = feynman_kac_apply(c, sq, 1.0, g, 1, mc_of(100, 16, 2, 1), 0.0, wide());
    const auto b = feynman_kac_apply(c, sq, 1.0, g, 1, mc_of(100, 16, 2, 3), 0.0, wide());
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.std_err, b.std_err);
}

TEST(FeynmanKac, NonFiniteAccumulation) {
    auto inf_u0 = [](const double*, const double*, double* o) { o[0] = INFINITY; };
    const auto c = make_frozen(1, 1, 0.0, zero3, zero3, zero3);
    EXPECT_THROW(feynman_kac_apply(c, inf_u0, 1.0, small_grid(), 1, mc_of(1, 4, 1), 0.0, wide()), NonFiniteError);
}
