#include "qsmooth/estimators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

using namespace qsmooth;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Standard normal truncated to [-3,3], renormalized.
double trunc_normal_pdf(double x) {
    if (std::abs(x) > 3.0) return 0.0;
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
    return phi / 0.99730020393674;
}

Sample draw_model(std::size_t n, std::uint64_t seed, double slope = 2.0,
                  bool add_sin = false) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> noise(-0.5, 0.5);
    Sample s;
    s.xs.reserve(n);
    s.ys.reserve(n);
    while (s.xs.size() < n) {
        const double x = gauss(rng);
        if (std::abs(x) > 3.0) continue;
        const double r = slope * x + (add_sin ? std::sin(x) : 0.0);
        s.xs.push_back(x);
        s.ys.push_back(r + noise(rng));
    }
    return s;
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    return g;
}

std::string write_temp_csv(const std::string& name, const std::string& content) {
    std::string path = testing::TempDir() + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST(EstimateGammaTest, SinglePointAndEmptySupport) {
    QParam q(0.5);
    EstimatorConfig cfg{make_q_poly(0, q), 1.0, 0.1, {0.7}};
    Sample s{{0.7}, {3.0}};
    EXPECT_EQ(estimate_gamma(s, cfg, 0)[0], 0.5);  // K(0)/h = 1/2

    Sample far{{5.0, -4.0}, {1.0, 1.0}};
    EXPECT_EQ(estimate_gamma(far, cfg, 0)[0], 0.0);
}

TEST(EstimateGammaTest, HandComputedThreeRows) {
    QParam q(0.5);
    EstimatorConfig cfg{make_q_poly(0, q), 1.0, 0.1, {0.25, 9.0}};
    Sample s{{0.0, 0.5, 1.0}, {1.0, 2.0, 0.0}};
    // all three X_i are within h of 0.25; rectangular kernel value 1/2
    auto f = estimate_gamma(s, cfg, 0);
    auto g = estimate_gamma(s, cfg, 1);
    EXPECT_NEAR(f[0], 0.5, 1e-15);                                  // 3*(1/2)/3
    EXPECT_NEAR(g[0], (1.0 + 2.0 + 0.0) * 0.5 / 3.0, 1e-15);        // = 0.5
    EXPECT_EQ(f[1], 0.0);
    EXPECT_EQ(g[1], 0.0);

    EstimateSet e = estimate_regression(s, cfg);
    EXPECT_NEAR(e.r_hat[0], 1.0, 1e-14);
    EXPECT_FALSE(e.floored_mask[0]);
    // empty region: 0/(b/2) = 0, floor recorded
    EXPECT_EQ(e.r_hat[1], 0.0);
    EXPECT_TRUE(e.floored_mask[1]);
}

TEST(EstimateGammaTest, MatchesRegressionPath) {
    QParam q(0.8);
    Sample s = draw_model(500, 11);
    EstimatorConfig cfg{make_q_poly(1, q), 0.3, default_floor(500), linspace(-1, 1, 41)};
    auto f = estimate_gamma(s, cfg, 0);
    auto g = estimate_gamma(s, cfg, 1);
    EstimateSet e = estimate_regression(s, cfg);
    for (std::size_t j = 0; j < cfg.grid.size(); ++j) {
        EXPECT_NEAR(e.f_hat[j], f[j], 1e-14 * std::max(1.0, std::abs(f[j])));
        EXPECT_NEAR(e.g_hat[j], g[j], 1e-14 * std::max(1.0, std::abs(g[j])));
    }
}

TEST(EstimateGammaTest, MomentOrderCapAndErrors) {
    QParam q(0.5);
    EstimatorConfig cfg{make_q_poly(1, q), 0.5, 0.1, {0.0}};
    Sample s{{0.1}, {2.0}};
    EXPECT_NO_THROW(estimate_gamma(s, cfg, 8));
    EXPECT_THROW(estimate_gamma(s, cfg, 9), ParameterError);
    EXPECT_THROW(estimate_gamma(s, cfg, -1), ParameterError);

    EstimatorConfig bad = cfg;
    bad.h = 0.0;
    EXPECT_THROW(estimate_gamma(s, bad, 0), ParameterError);
    bad = cfg;
    bad.grid = {1.0, 0.0};
    EXPECT_THROW(estimate_gamma(s, bad, 0), ParameterError);
    Sample mism{{0.1, 0.2}, {1.0}};
    EXPECT_THROW(estimate_gamma(mism, cfg, 0), ParameterError);
}

TEST(EstimateGammaTest, AffineEquivariance) {
    QParam q(0.7);
    Sample s = draw_model(300, 5);
    EstimatorConfig cfg{make_q_poly(1, q), 0.25, 0.1, linspace(-1.5, 1.5, 31)};
    auto g = estimate_gamma(s, cfg, 1);
    Sample scaled = s;
    const double alpha = -2.5;
    for (double& y : scaled.ys) y *= alpha;
    auto gs = estimate_gamma(scaled, cfg, 1);
    for (std::size_t j = 0; j < g.size(); ++j)
        EXPECT_NEAR(gs[j], alpha * g[j], 1e-13 * std::max(1.0, std::abs(g[j])));
}

TEST(EstimateRegressionTest, ConstantResponse) {
    QParam q(0.6);
    Sample s = draw_model(400, 3);
    for (double& y : s.ys) y = 7.25;
    EstimatorConfig cfg{make_q_poly(2, q), 0.3, default_floor(400), linspace(-1, 1, 21)};
    EstimateSet e = estimate_regression(s, cfg);
    for (std::size_t j = 0; j < cfg.grid.size(); ++j) {
        if (!e.floored_mask[j]) {
            EXPECT_NEAR(e.r_hat[j], 7.25, 1e-12);
        }
    }
}

TEST(EstimateRegressionTest, ShiftInvariance) {
    QParam q(0.9);
    Sample s = draw_model(600, 17);
    EstimatorConfig cfg{make_q_poly(1, q), 0.25, default_floor(600), linspace(-1, 1, 41)};
    EstimateSet e = estimate_regression(s, cfg);
    Sample shifted = s;
    const double c = 4.75;
    for (double& y : shifted.ys) y += c;
    EstimateSet es = estimate_regression(shifted, cfg);
    for (std::size_t j = 0; j < cfg.grid.size(); ++j) {
        EXPECT_EQ(e.floored_mask[j], es.floored_mask[j]);
        if (!e.floored_mask[j]) {
            EXPECT_NEAR(es.r_hat[j], e.r_hat[j] + c, 1e-11);
        }
    }
}

TEST(EstimateRegressionTest, DensityRecovery) {
    // classical-limit regime: density estimate close to the truth in sup norm
    QParam q(0.99);
    const std::size_t n = 10000;
    Sample s = draw_model(n, 20240817);
    EstimatorConfig cfg{make_q_poly(1, q), default_bandwidth(n), default_floor(n),
                        linspace(-1, 1, 201)};
    auto f = estimate_gamma(s, cfg, 0);
    EXPECT_LT(sup_error(f, trunc_normal_pdf, cfg.grid), 0.05);

    // naive recomputation of the sup
    double naive = 0.0;
    for (std::size_t j = 0; j < cfg.grid.size(); ++j)
        naive = std::max(naive, std::abs(f[j] - trunc_normal_pdf(cfg.grid[j])));
    EXPECT_EQ(sup_error(f, trunc_normal_pdf, cfg.grid), naive);
}

TEST(EstimateRegressionTest, LinearModelRecovery) {
    QParam q(0.99);
    const std::size_t n = 10000;
    Sample s = draw_model(n, 99);
    EstimatorConfig cfg{make_q_poly(1, q), default_bandwidth(n), default_floor(n),
                        linspace(-1, 1, 201)};
    EstimateSet e = estimate_regression(s, cfg);
    EXPECT_LT(sup_error(e.r_hat, [](double x) { return 2.0 * x; }, cfg.grid), 0.1);
}

TEST(EstimateRegressionTest, MassConsistency) {
    QParam q(0.99);
    const std::size_t n = 2048;
    Sample s = draw_model(n, 7);
    EstimatorConfig cfg{make_q_poly(1, q), default_bandwidth(n), default_floor(n),
                        linspace(-1, 1, 11)};
    auto fhat = [&](double x) { return estimate_gamma_point(s, cfg.kernel, cfg.h, x, 0); };
    const double mass = jackson_integral(fhat, -4.0, 4.0, q).value;
    EXPECT_NEAR(mass, 1.0, 0.02);
}

TEST(EstimateRegressionTest, VarianceScalesInverseN) {
    QParam q(0.99);
    QKernel kern = make_q_poly(1, q);
    const double h = 0.2, x0 = 0.0;
    std::vector<double> log_n, log_var;
    for (std::size_t n : {250u, 1000u, 4000u}) {
        std::vector<double> vals;
        for (int rep = 0; rep < 200; ++rep) {
            Sample s = draw_model(n, 1000 * n + rep);
            vals.push_back(estimate_gamma_point(s, kern, h, x0, 0));
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= (vals.size() - 1);
        log_n.push_back(std::log((double)n));
        log_var.push_back(std::log(var));
    }
    // least-squares slope over the three points
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
        mx += log_n[i];
        my += log_var[i];
    }
    mx /= log_n.size();
    my /= log_n.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
        num += (log_n[i] - mx) * (log_var[i] - my);
        den += (log_n[i] - mx) * (log_n[i] - mx);
    }
    EXPECT_NEAR(num / den, -1.0, 0.15);
}

TEST(CsvIngestTest, RoundTripAndErrors) {
    const std::string good = "x,y\n0.5,1.25\n-1.5,2\n3e-1,-0.125\n";
    Sample s = load_sample_csv(write_temp_csv("good.csv", good));
    ASSERT_EQ(s.n(), 3u);
    EXPECT_EQ(s.xs[0], 0.5);
    EXPECT_EQ(s.ys[2], -0.125);

    // CRLF is tolerated
    Sample s2 = load_sample_csv(write_temp_csv("crlf.csv", "x,y\r\n1,2\r\n"));
    EXPECT_EQ(s2.n(), 1u);

    EXPECT_THROW(load_sample_csv(write_temp_csv("empty.csv", "")), InputFormatError);
    EXPECT_THROW(load_sample_csv(write_temp_csv("hdr.csv", "a,b\n1,2\n")), InputFormatError);
    EXPECT_THROW(load_sample_csv(write_temp_csv("nodata.csv", "x,y\n")), InputFormatError);
    EXPECT_THROW(load_sample_csv("/nonexistent/file.csv"), InputFormatError);

    try {
        load_sample_csv(write_temp_csv("bad.csv", "x,y\n1,2\n3,oops\n"));
        FAIL() << "expected InputFormatError";
    } catch (const InputFormatError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos)
            << "message should carry the line number: " << e.what();
    }
}

TEST(DefaultsTest, BandwidthAndFloorRules) {
    EXPECT_NEAR(default_bandwidth(1024), std::pow(1024.0, -0.2), 1e-15);
    EXPECT_NEAR(default_floor(1024), std::pow(1024.0, -0.1), 1e-15);
    // n^{-1/10} dominates the epsilon floor at every representable n
    EXPECT_NEAR(default_floor(1u << 30), 0.125, 1e-15);
}
