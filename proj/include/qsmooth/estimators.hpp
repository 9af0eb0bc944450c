#pragma once

// Kernel moment-sum estimators on a fixed evaluation grid: the density
// estimate, the numerator g-estimate, their ratio with a floored denominator,
// and the generic k-th moment sum behind all of them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qsmooth/kernels.hpp"

namespace qsmooth {

struct Sample {
    std::vector<double> xs;
    std::vector<double> ys;

    std::size_t n() const { return xs.size(); }

    void validate() const {
        if (xs.size() != ys.size())
            throw ParameterError("Sample: xs and ys differ in length");
        if (xs.empty()) throw ParameterError("Sample: empty");
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
                throw NonFiniteEvaluation("Sample: non-finite entry at row " +
                                          std::to_string(i + 1));
    }
};

// Reads observations from a CSV file with header `x,y`, one pair per row.
// Malformed content is a hard error carrying the 1-based line number.
inline Sample load_sample_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputFormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw InputFormatError(path + ": empty file, expected `x,y` header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y")
        throw InputFormatError(path + ":1: expected header `x,y`, got `" + line + "`");

    Sample s;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw InputFormatError(path + ":" + std::to_string(lineno) + ": expected two comma-separated fields");
        std::size_t used = 0;
        double x, y;
        try {
            x = std::stod(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("trailing");
            const std::string rest = line.substr(comma + 1);
            y = std::stod(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw InputFormatError(path + ":" + std::to_string(lineno) + ": malformed number");
        }
        s.xs.push_back(x);
        s.ys.push_back(y);
    }
    if (s.xs.empty())
        throw InputFormatError(path + ": no data rows after header");
    s.validate();
    return s;
}

struct EstimatorConfig {
    QKernel kernel;
    double h = 0.1;   // bandwidth
    double b = 0.1;   // density floor; denominator of r_hat is >= b/2
    std::vector<double> grid;

    void validate() const {
        if (!(h > 0.0)) throw ParameterError("EstimatorConfig: h must be > 0");
        if (!(b > 0.0)) throw ParameterError("EstimatorConfig: b must be > 0");
        if (grid.empty()) throw ParameterError("EstimatorConfig: empty grid");
        if (!std::is_sorted(grid.begin(), grid.end()))
            throw ParameterError("EstimatorConfig: grid must be sorted");
    }
};

// Defaults mirrored by the CLI: h = n^{-1/5}, b = max(1e-3, n^{-1/10}).
inline double default_bandwidth(std::size_t n) {
    return std::pow(static_cast<double>(n), -0.2);
}

inline double default_floor(std::size_t n) {
    return std::max(1e-3, std::pow(static_cast<double>(n), -0.1));
}

struct EstimateSet {
    std::vector<double> f_hat;
    std::vector<double> g_hat;
    std::vector<double> r_hat;
    std::vector<std::uint8_t> floored_mask;
};

namespace detail {

inline double pow_int(double y, int k) {
    double acc = 1.0;
    for (int j = 0; j < k; ++j) acc *= y;
    return acc;
}

}  // namespace detail

constexpr int kMaxMomentOrder = 8;

// Moment sum at a single point: (1/(nh)) sum_i Y_i^k K((x - X_i)/h).
inline double estimate_gamma_point(const Sample& sample, const QKernel& kernel, double h,
                                   double x, int k) {
    const double inv_h = 1.0 / h;
    double acc = 0.0;
    for (std::size_t i = 0; i < sample.xs.size(); ++i) {
        const double kv = kernel((x - sample.xs[i]) * inv_h);
        if (kv != 0.0) acc += detail::pow_int(sample.ys[i], k) * kv;
    }
    return acc * inv_h / static_cast<double>(sample.n());
}

// Grid version of the k-th moment sum; k = 0 is the density estimate, k = 1
// the regression numerator.
inline std::vector<double> estimate_gamma(const Sample& sample, const EstimatorConfig& cfg,
                                          int k) {
    sample.validate();
    cfg.validate();
    if (k < 0 || k > kMaxMomentOrder)
        throw ParameterError("estimate_gamma: k must lie in [0, " +
                             std::to_string(kMaxMomentOrder) + "]");
    std::vector<double> out(cfg.grid.size());
    for (std::size_t j = 0; j < cfg.grid.size(); ++j)
        out[j] = estimate_gamma_point(sample, cfg.kernel, cfg.h, cfg.grid[j], k);
    return out;
}

// Ratio estimate r_hat = g_hat / max(f_hat, b/2) with the floor recorded.
inline EstimateSet estimate_regression(const Sample& sample, const EstimatorConfig& cfg) {
    sample.validate();
    cfg.validate();
    EstimateSet e;
    const std::size_t m = cfg.grid.size();
    e.f_hat.resize(m);
    e.g_hat.resize(m);
    e.r_hat.resize(m);
    e.floored_mask.resize(m);
    const double inv_h = 1.0 / cfg.h;
    const double inv_nh = inv_h / static_cast<double>(sample.n());
    for (std::size_t j = 0; j < m; ++j) {
        double w = 0.0, yw = 0.0;
        for (std::size_t i = 0; i < sample.xs.size(); ++i) {
            const double kv = cfg.kernel((cfg.grid[j] - sample.xs[i]) * inv_h);
            if (kv != 0.0) {
                w += kv;
                yw += sample.ys[i] * kv;
            }
        }
        e.f_hat[j] = w * inv_nh;
        e.g_hat[j] = yw * inv_nh;
        const bool floored = e.f_hat[j] < 0.5 * cfg.b;
        e.floored_mask[j] = floored ? 1 : 0;
        e.r_hat[j] = e.g_hat[j] / (floored ? 0.5 * cfg.b : e.f_hat[j]);
    }
    return e;
}

// Largest absolute grid deviation from a reference curve.
template <class F>
double sup_error(const std::vector<double>& estimate, F&& truth,
                 const std::vector<double>& grid) {
    if (estimate.size() != grid.size())
        throw ParameterError("sup_error: estimate and grid differ in length");
    double m = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        m = std::max(m, std::abs(estimate[i] - truth(grid[i])));
    return m;
}

}  // namespace qsmooth
