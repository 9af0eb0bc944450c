#pragma once

// Small statistical toolbox shared by the theory evaluators and the Monte
// Carlo harness: moments, OLS slope, normal CDF, Kolmogorov-Smirnov test,
// and counter-based seed derivation for replicate streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qsmooth/qarith.hpp"

namespace qsmooth {
namespace stats {

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw ParameterError("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double variance(const std::vector<double>& v) {
    if (v.size() < 2) throw ParameterError("variance: need at least 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ParameterError("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return (v.size() % 2 == 1) ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Least-squares slope of y against x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ParameterError("ols_slope: need matching inputs of length >= 2");
    const double mx = mean(x), my = mean(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    if (den == 0.0) throw ParameterError("ols_slope: degenerate x values");
    return num / den;
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// Asymptotic Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
inline double ks_tail(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-12) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

// One-sample KS test against the standard normal.
inline KsResult ks_test_standard_normal(std::vector<double> sample) {
    if (sample.size() < 8) throw ParameterError("ks_test: need at least 8 values");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double cdf = normal_cdf(sample[i]);
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    const double sq = std::sqrt(n);
    const double lambda = (sq + 0.12 + 0.11 / sq) * d;
    return {d, ks_tail(lambda)};
}

// Standard error of an empirical proportion.
inline double binomial_se(double p_hat, std::size_t n) {
    if (n == 0) throw ParameterError("binomial_se: n must be positive");
    return std::sqrt(std::max(p_hat * (1.0 - p_hat), 1.0 / static_cast<double>(n)) /
                     static_cast<double>(n));
}

// splitmix64 step; the standard 64-bit finalizer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic per-stream seed from a master seed and a stream index; used to
// hand each replicate an independent RNG stream regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0xD2B74407B1CE6E93ull * (stream + 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

}  // namespace stats
}  // namespace qsmooth
