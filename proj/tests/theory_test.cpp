#include "qsmooth/theory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

using namespace qsmooth;

QKernel poly_kernel(double q, int p = 1) {
    return make_q_poly(p, QParam(q), SeriesPolicy{1e-12, 300000});
}

// Draws (X, Y) from a TargetModel: rejection sampling for the truncated
// bell density, uniform noise of the model's halfwidth.
Sample draw_model(const TargetModel& m, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Sample s;
    s.xs.reserve(n);
    s.ys.reserve(n);
    while (s.xs.size() < n) {
        const double x = gauss(rng);
        if (std::abs(x) > 3.0) continue;
        s.xs.push_back(x);
        const double eps = m.noise_halfwidth > 0.0 ? m.noise_halfwidth * unif(rng) : 0.0;
        s.ys.push_back(m.r(x) + eps);
    }
    return s;
}

double trunc_normal(double x) {
    if (std::abs(x) > 3.0) return 0.0;
    const double mass = std::erf(3.0 / std::sqrt(2.0));
    return std::exp(-0.5 * x * x) / (mass * std::sqrt(2.0 * std::acos(-1.0)));
}

TEST(ModelTest, DefaultModelShape) {
    const TargetModel m = make_default_model();
    EXPECT_NEAR(m.f(0.0), 0.4000222589, 1e-9);
    EXPECT_EQ(m.f(3.5), 0.0);
    EXPECT_NEAR(m.r(1.0), 2.0 + std::sin(1.0), 1e-15);
    EXPECT_NEAR(m.noise_cond_var(0.7), 1.0 / 12.0, 1e-15);
    EXPECT_NEAR(m.g(2.0), m.r(2.0) * m.f(2.0), 1e-15);
    EXPECT_NEAR(m.sup_f(), m.f(0.0), 1e-6);

    // density integrates to 1 (composite Simpson over the support)
    const int steps = 3000;
    double integral = 0.0;
    const double dx = 6.0 / steps;
    for (int i = 0; i < steps; ++i) {
        const double a = -3.0 + i * dx;
        integral += dx / 6.0 * (m.f(a) + 4.0 * m.f(a + 0.5 * dx) + m.f(a + dx));
    }
    EXPECT_NEAR(integral, 1.0, 1e-8);
}

TEST(ModelTest, Registry) {
    const TargetModel def = make_model("default");
    EXPECT_GT(def.noise_halfwidth, 0.0);
    const TargetModel cst = make_model("constant");
    EXPECT_EQ(cst.r(-1.3), 1.0);
    EXPECT_EQ(cst.noise_cond_var(0.2), 0.0);
    EXPECT_THROW(make_model("cauchy"), ParameterError);
}

TEST(ModelTest, DerivativeAccessors) {
    const TargetModel m = make_default_model();
    const QParam qp(0.9);

    // first-order accessor agrees with the raw q-difference quotient
    const double x = 0.8;
    const double direct = (m.f(qp.q * x) - m.f(x)) / ((qp.q - 1.0) * x);
    EXPECT_NEAR(m.d_f(x, 1, qp), direct, 1e-12);

    // order 0 is plain evaluation
    EXPECT_EQ(m.d_f(0.4, 0, qp), m.f(0.4));

    // at the origin the value is the continuous limit [s]_q!/s! f^(s)(0)
    const double f0 = m.f(0.0);
    EXPECT_NEAR(m.d_f(0.0, 2, qp), -q_number(2, qp) / 2.0 * f0, 1e-6);
    EXPECT_NEAR(m.d_f(0.0, 1, qp), 0.0, 1e-9);
    EXPECT_NEAR(m.d_f(0.0, 3, qp), 0.0, 1e-6);

    // accessor is continuous across the origin switch
    EXPECT_NEAR(m.d_f(0.0, 2, qp), m.d_f(0.02, 2, qp), 0.01);

    EXPECT_THROW(m.d_f(0.5, 4, qp), ParameterError);
    EXPECT_THROW(m.d_f(0.5, -1, qp), ParameterError);
}

TEST(BiasTest, ConstantRegressionGivesZero) {
    const TargetModel m = make_constant_model(3.0);
    const QKernel k = poly_kernel(0.9);
    EXPECT_NEAR(bias_rn(m, k, 0.2, 0.5), 0.0, 1e-9);
}

TEST(BiasTest, ZeroBandwidthGivesZero) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    EXPECT_DOUBLE_EQ(bias_rn(m, k, 0.0, 0.5), 0.0);
}

TEST(BiasTest, OutsideSupportThrows) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    EXPECT_THROW(bias_rn(m, k, 0.2, 5.0), DomainError);
}

TEST(BiasTest, ClassicalLimitMatchesTextbookFormula) {
    // near q = 1 the leading term must agree with the classical kernel
    // regression bias (h^2/2)(r'' + 2 r' f'/f) mu_2
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.999);
    const double h = 0.25;
    for (double x : {0.5, 1.0, -0.7}) {
        const double f = trunc_normal(x);
        const double fp = -x * f;
        const double rp = 2.0 + std::cos(x);
        const double rpp = -std::sin(x);
        const double classical = 0.5 * h * h * (rpp + 2.0 * rp * fp / f) * k.moment2;
        const double ours = bias_rn(m, k, h, x);
        EXPECT_GT(ours / classical, 0.9) << "x=" << x;
        EXPECT_LT(ours / classical, 1.1) << "x=" << x;
    }
}

TEST(BiasTest, MonteCarloOracle) {
    // empirical bias of r_hat at x = 0.5 across replicates matches the
    // leading-term prediction within 25% relative
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.99);
    const std::size_t n = 8192;
    const int reps = 2000;
    const double h = 0.2;
    const double x = 0.5;
    const double floor = 0.5 * default_floor(n);

    double sum_r = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        const Sample s = draw_model(m, n, 0xB1A5ull + rep);
        const double f_hat = estimate_gamma_point(s, k, h, x, 0);
        const double g_hat = estimate_gamma_point(s, k, h, x, 1);
        sum_r += g_hat / std::max(f_hat, floor);
    }
    const double empirical = sum_r / reps - m.r(x);
    const double predicted = bias_rn(m, k, h, x);
    EXPECT_LT(std::abs(empirical - predicted), 0.25 * std::abs(predicted))
        << "empirical=" << empirical << " predicted=" << predicted;
}

TEST(CltTest, UndersmoothingKillsAsymptoticBias) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    const CltParams cp = clt_params(m, k, k.qparam(), 0.0, 0.5);
    EXPECT_DOUBLE_EQ(cp.script_E, 0.0);
    EXPECT_GT(cp.script_V, 0.0);
}

TEST(CltTest, AsymptoticMeanVanishesAtOrigin) {
    // r(0) = 0 and g is odd, so the curvature combination cancels exactly
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.99);
    const CltParams cp = clt_params(m, k, k.qparam(), 1.7, 0.0);
    EXPECT_DOUBLE_EQ(cp.script_E, 0.0);
}

TEST(CltTest, NoiselessVarianceIsZero) {
    const TargetModel m = make_constant_model(2.0);
    const QKernel k = poly_kernel(0.9);
    const CltParams cp = clt_params(m, k, k.qparam(), 1.0, 0.5);
    EXPECT_EQ(cp.script_V, 0.0);
}

TEST(CltTest, ClassicalVarianceOracle) {
    // near q = 1 with the p = 1 kernel, script_V ~ sigma^2 * (3/5) / f(x),
    // the classical parabolic-kernel asymptotic variance
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.999);
    const double x = 0.5;
    const CltParams cp = clt_params(m, k, k.qparam(), 1.0, x);
    const double classical = (1.0 / 12.0) * 0.6 / trunc_normal(x);
    EXPECT_NEAR(cp.script_V / classical, 1.0, 0.03);
}

TEST(CltTest, VarianceScalesWithNoiseVariance) {
    const TargetModel base = make_default_model();
    TargetModel scaled = base;
    const double alpha = 3.0;
    scaled.noise_cond_var = [alpha](double x) {
        (void)x;
        return alpha * alpha / 12.0;
    };
    const QKernel k = poly_kernel(0.9);
    const CltParams a = clt_params(base, k, k.qparam(), 1.0, 0.4);
    const CltParams b = clt_params(scaled, k, k.qparam(), 1.0, 0.4);
    EXPECT_NEAR(b.script_V, alpha * alpha * a.script_V, 1e-14 * b.script_V);
}

TEST(CltTest, OutsideSupportThrows) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    EXPECT_THROW(clt_params(m, k, k.qparam(), 1.0, 4.0), DomainError);
}

TEST(RateTest, VnkHalvesWhenNDoubles) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    const QParam qp = k.qparam();
    const double h = 0.2;
    const RateTerms a = rate_terms(m, k, qp, 1024, h, 0);
    const RateTerms b = rate_terms(m, k, qp, 2048, h, 0);
    EXPECT_NEAR(b.v_nk, 0.5 * a.v_nk, 1e-14 * a.v_nk);
}

TEST(RateTest, VnkIgnoresC0AtKZero) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    const QParam qp = k.qparam();
    const RateTerms a = rate_terms(m, k, qp, 4096, 0.15, 0, 1.0);
    const RateTerms b = rate_terms(m, k, qp, 4096, 0.15, 0, 7.3);
    EXPECT_EQ(a.v_nk, b.v_nk);
}

TEST(RateTest, IndependentRecomputation) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.99);
    const QParam qp = k.qparam();
    const std::size_t n = 10000;
    const double h = std::pow(static_cast<double>(n), -0.2);
    const double c0 = 1.0, L = 2.0;
    const RateTerms rt = rate_terms(m, k, qp, n, h, 0, c0, L);

    // longhand re-evaluation of every factor
    const double lnq = (std::pow(static_cast<double>(n), 1.0 - qp.q) - 1.0) / (1.0 - qp.q);
    const double v = m.sup_f() * k.square_integral / (n * h);
    const double w = L / (1.0 + qp.q) * k.moment2;
    const double rate = qp.q * w * h * h + std::sqrt(v * lnq);
    EXPECT_NEAR(rt.v_nk, v, 1e-12 * v);
    EXPECT_NEAR(rt.w_term, w, 1e-12 * w);
    EXPECT_NEAR(rt.rate, rate, 1e-12 * rate);
}

TEST(RateTest, MonotoneDecreasingInN) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.99);
    const QParam qp = k.qparam();
    double prev = std::numeric_limits<double>::infinity();
    for (int j = 8; j <= 16; ++j) {
        const std::size_t n = std::size_t{1} << j;
        const double h = std::pow(static_cast<double>(n), -0.2);
        const double rate = rate_terms(m, k, qp, n, h, 0).rate;
        EXPECT_LT(rate, prev) << "n=" << n;
        prev = rate;
    }
}

TEST(RateTest, ParameterGuards) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.99);
    const QParam qp = k.qparam();
    // sqrt(2 [2]_q) = sqrt(3.98) ~ 1.995 at q = 0.99
    EXPECT_THROW(rate_terms(m, k, qp, 1024, 0.2, 0, 1.0, 1.99), ParameterError);
    EXPECT_NO_THROW(rate_terms(m, k, qp, 1024, 0.2, 0, 1.0, 2.0));
    EXPECT_THROW(rate_terms(m, k, qp, 0, 0.2, 0), ParameterError);
    EXPECT_THROW(rate_terms(m, k, qp, 1024, 0.0, 0), ParameterError);
    EXPECT_THROW(rate_terms(m, k, qp, 1024, 0.2, -1), ParameterError);
    EXPECT_THROW(rate_terms(m, k, qp, 1024, 0.2, 0, 0.0), ParameterError);
}

TEST(BernsteinTest, SmallTLimit) {
    const QParam qp(0.5);
    EXPECT_NEAR(bernstein_bound(1e-10, 1.0, 0.1, qp), 1.0, 1e-9);
    EXPECT_EQ(bernstein_bound(0.0, 1.0, 0.1, qp), 1.0);
}

TEST(BernsteinTest, BoundedByOneAndDecreasing) {
    const QParam qp(0.5);
    const double v = 1.0, c = 0.1;
    const double cap = bernstein_t_cap(v, c, qp);
    double prev = 1.0;
    for (int i = 1; i <= 50; ++i) {
        const double t = cap * i / 50.0;
        const double b = bernstein_bound(t, v, c, qp);
        EXPECT_LE(b, 1.0);
        EXPECT_GT(b, 0.0);
        EXPECT_LT(b, prev) << "t=" << t;
        prev = b;
    }
}

TEST(BernsteinTest, ClassicalOracle) {
    const QParam qp(0.999);
    EXPECT_NEAR(bernstein_bound(1.0, 1.0, 0.01, qp), 0.6095, 2e-3);
}

TEST(BernsteinTest, DomainAndParameterErrors) {
    const QParam qp(0.5);
    EXPECT_THROW(bernstein_bound(2.0, 1.0, 0.1, qp), DomainError);
    EXPECT_THROW(bernstein_bound(-1.0, 1.0, 0.1, qp), ParameterError);
    EXPECT_THROW(bernstein_bound(1.0, 0.0, 0.1, qp), ParameterError);
    EXPECT_THROW(bernstein_bound(1.0, 1.0, 0.0, qp), ParameterError);
    // the cap is inside the domain, a third beyond it is not
    const double cap = bernstein_t_cap(1.0, 0.1, qp);
    EXPECT_NO_THROW(bernstein_bound(cap, 1.0, 0.1, qp));
    EXPECT_THROW(bernstein_bound(1.3 * cap, 1.0, 0.1, qp), DomainError);
}

TEST(BernsteinTest, ScaleConstantShape) {
    const TargetModel m = make_default_model();
    const QKernel k = poly_kernel(0.9);
    const QParam qp = k.qparam();
    const double c1 = bernstein_scale(m, k, qp, 2048, 0.2, 0);
    const double c2 = bernstein_scale(m, k, qp, 4096, 0.2, 0);
    EXPECT_GT(c1, 0.0);
    EXPECT_NEAR(c2, 0.5 * c1, 1e-14 * c1);
    // k = 1 picks up the (c0 ln_q n)^{1/2} envelope factor
    const double lnq = tsallis_ln(2048.0, qp.q);
    EXPECT_NEAR(bernstein_scale(m, k, qp, 2048, 0.2, 1), std::sqrt(lnq) * c1, 1e-12 * c1);
}

TEST(MarkovTest, ConstantSamples) {
    const std::vector<double> xs(32, 2.0);
    const MarkovCheck lo = markov_check(xs, 4.0);
    EXPECT_EQ(lo.empirical_prob, 0.0);
    EXPECT_DOUBLE_EQ(lo.bound, 0.5);
    const MarkovCheck hi = markov_check(xs, 1.0);
    EXPECT_EQ(hi.empirical_prob, 1.0);
    EXPECT_DOUBLE_EQ(hi.bound, 2.0);
}

TEST(MarkovTest, UniformOracle) {
    std::mt19937_64 rng(20240817ull);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> xs(100000);
    for (double& x : xs) x = unif(rng);
    const MarkovCheck mc = markov_check(xs, 0.9);
    EXPECT_NEAR(mc.empirical_prob, 0.1, 0.01);
    EXPECT_NEAR(mc.bound, 0.5 / 0.9, 0.01);
    EXPECT_LE(mc.empirical_prob, mc.bound);
}

TEST(MarkovTest, InputGuards) {
    EXPECT_THROW(markov_check({}, 1.0), ParameterError);
    EXPECT_THROW(markov_check({1.0, -0.1}, 1.0), ParameterError);
    EXPECT_THROW(markov_check({1.0}, 0.0), ParameterError);
}

TEST(LyapunovTest, DegenerateVarianceThrows) {
    Sample s;
    s.xs = {-0.5, 0.5, -0.5, 0.5};
    s.ys = {3.0, 3.0, 3.0, 3.0};
    EstimatorConfig cfg;
    cfg.kernel = poly_kernel(0.9);
    cfg.h = 1.0;
    cfg.b = 0.1;
    cfg.grid = {0.0};
    EXPECT_THROW(lyapunov_ratio(s, cfg, 0.0, 3.0), DegenerateVariance);
}

TEST(LyapunovTest, ShiftInvariance) {
    const TargetModel m = make_default_model();
    Sample s = draw_model(m, 512, 99ull);
    EstimatorConfig cfg;
    cfg.kernel = poly_kernel(0.9);
    cfg.h = 0.3;
    cfg.b = default_floor(s.n());
    cfg.grid = {0.3};
    const double before = lyapunov_ratio(s, cfg, 0.3);
    for (double& y : s.ys) y += 4.75;
    const double after = lyapunov_ratio(s, cfg, 0.3);
    EXPECT_NEAR(after, before, 1e-6 * before);
}

TEST(LyapunovTest, DecreasesWithSampleSize) {
    const TargetModel m = make_default_model();
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {std::size_t{1024}, std::size_t{8192}, std::size_t{65536}}) {
        const Sample s = draw_model(m, n, 7000ull + n);
        EstimatorConfig cfg;
        cfg.kernel = poly_kernel(0.99);
        cfg.h = std::pow(static_cast<double>(n), -0.2);
        cfg.b = default_floor(n);
        cfg.grid = {0.0};
        const double ratio = lyapunov_ratio(s, cfg, 0.0);
        EXPECT_LT(ratio, 0.8 * prev) << "n=" << n;
        prev = ratio;
    }
}

TEST(ReportTest, ShapeAndSerialization) {
    TheoryRequest req;
    req.model = make_default_model();
    req.kernel = poly_kernel(0.9);
    req.grid = {-0.5, 0.0, 0.5};
    req.n = 1024;
    req.k = 1;
    TheoryReport rep = make_theory_report(req);

    ASSERT_EQ(rep.bias_leading.size(), 3u);
    ASSERT_EQ(rep.script_E.size(), 3u);
    ASSERT_EQ(rep.script_V.size(), 3u);
    for (double v : rep.script_V) {
        EXPECT_GT(v, 0.0);
        EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_GT(rep.v_nk, 0.0);
    EXPECT_GT(rep.w_term, 0.0);
    EXPECT_GT(rep.rate, 0.0);
    ASSERT_EQ(rep.bernstein_curve.size(), 20u);
    double prev_t = 0.0, prev_b = 2.0;
    for (const auto& [t, bound] : rep.bernstein_curve) {
        EXPECT_GT(t, prev_t);
        EXPECT_LT(bound, prev_b);
        EXPECT_GT(bound, 0.0);
        EXPECT_LE(bound, 1.0);
        prev_t = t;
        prev_b = bound;
    }

    nlohmann::ordered_json j = to_json(rep);
    for (const char* key : {"bias_leading", "script_E", "script_V", "v_nk", "w_term",
                            "rate", "bernstein_curve", "lyapunov_ratio"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j["lyapunov_ratio"].is_null());
    EXPECT_EQ(j["bernstein_curve"].size(), 20u);

    rep.lyapunov_ratio = 0.25;
    EXPECT_DOUBLE_EQ(to_json(rep)["lyapunov_ratio"].get<double>(), 0.25);
}

TEST(ReportTest, EmptyGridThrows) {
    TheoryRequest req;
    req.model = make_default_model();
    req.kernel = poly_kernel(0.9);
    EXPECT_THROW(make_theory_report(req), ParameterError);
}

}  // namespace
