#pragma once

// Theoretical predictions for the q-kernel regression estimator: leading bias
// term, limiting CLT mean/variance, almost-sure rate ingredients, the
// q-Bernstein tail bound, a q-Markov check, and the Lyapunov-condition ratio.
// Everything here is a pure evaluation that Monte Carlo output is compared
// against. Asymptotic remainder terms are evaluated as 0; tolerances on the
// comparison side absorb them.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qsmooth/estimators.hpp"
#include "qsmooth/jackson.hpp"
#include "qsmooth/kernels.hpp"
#include "qsmooth/qarith.hpp"
#include "qsmooth/stats.hpp"

namespace qsmooth {

namespace detail {

// Iterated q-derivative of a model function. The q-difference scheme needs
// nodes q^j x and collapses at x = 0; there D_q^s tends to ([s]_q!/s!) f^(s),
// so a classical central difference supplies the limit value.
template <class F>
double model_q_derivative(F&& fn, double x, int s, const QParam& qp) {
    if (s < 0 || s > 3) throw ParameterError("model derivative order must be in [0, 3]");
    if (s == 0) return fn(x);
    if (x != 0.0) return q_derivative_iter(fn, x, s, qp);
    const double d = 1e-4;
    double classical = 0.0;
    switch (s) {
        case 1:
            classical = (fn(d) - fn(-d)) / (2.0 * d);
            break;
        case 2:
            classical = (fn(d) - 2.0 * fn(0.0) + fn(-d)) / (d * d);
            break;
        default:
            classical = (fn(2.0 * d) - 2.0 * fn(d) + 2.0 * fn(-d) - fn(-2.0 * d)) /
                        (2.0 * d * d * d);
            break;
    }
    double scale = 1.0;
    for (int j = 2; j <= s; ++j) scale *= q_number(j, qp) / static_cast<double>(j);
    return scale * classical;
}

}  // namespace detail

// True data-generating mechanism: design density f, regression r, conditional
// noise variance, and the induced g = r * f with q-derivative accessors.
struct TargetModel {
    std::function<double(double)> f;
    std::function<double(double)> r;
    std::function<double(double)> noise_cond_var;
    double x_lo = -3.0;
    double x_hi = 3.0;
    double noise_halfwidth = 0.0;

    double g(double x) const { return r(x) * f(x); }

    double d_f(double x, int s, const QParam& qp) const {
        return detail::model_q_derivative(f, x, s, qp);
    }
    double d_g(double x, int s, const QParam& qp) const {
        auto gx = [this](double u) { return r(u) * f(u); };
        return detail::model_q_derivative(gx, x, s, qp);
    }

    // sup|f| over a fixed evaluation grid; stands in for the L^inf norm.
    // Odd point count so a symmetric range includes its midpoint.
    double sup_f(int grid_points = 513) const {
        if (grid_points < 2) throw ParameterError("sup_f: need at least 2 grid points");
        double best = 0.0;
        for (int i = 0; i < grid_points; ++i) {
            const double x =
                x_lo + (x_hi - x_lo) * static_cast<double>(i) / (grid_points - 1);
            best = std::max(best, std::abs(f(x)));
        }
        return best;
    }
};

// Bell-shaped density truncated to [-3, 3], r(x) = 2x + sin(x), and uniform
// noise on [-0.5, 0.5]. Smooth, bounded, with nonconstant second derivatives
// so the bias term is exercised.
inline TargetModel make_default_model() {
    const double mass = std::erf(3.0 / std::sqrt(2.0));
    const double norm = mass * std::sqrt(2.0 * std::acos(-1.0));
    TargetModel m;
    m.f = [norm](double x) {
        if (std::abs(x) > 3.0) return 0.0;
        return std::exp(-0.5 * x * x) / norm;
    };
    m.r = [](double x) { return 2.0 * x + std::sin(x); };
    m.noise_cond_var = [](double) { return 1.0 / 12.0; };
    m.noise_halfwidth = 0.5;
    return m;
}

// Same design density, constant regression, no noise.
inline TargetModel make_constant_model(double level) {
    TargetModel m = make_default_model();
    m.r = [level](double) { return level; };
    m.noise_cond_var = [](double) { return 0.0; };
    m.noise_halfwidth = 0.0;
    return m;
}

inline TargetModel make_model(const std::string& name) {
    if (name == "default") return make_default_model();
    if (name == "constant") return make_constant_model(1.0);
    throw ParameterError("unknown model name: " + name);
}

// Leading bias term of the regression estimator at x:
//   q h^2 / ([2]_q f(x)) * (D_q^2 g - r D_q^2 f)(x) * \int u^2 K du.
inline double bias_rn(const TargetModel& model, const QKernel& kernel, double h, double x) {
    const QParam qp = kernel.qparam();
    const double fx = model.f(x);
    if (fx <= 0.0) throw DomainError("bias_rn: f(x) must be positive");
    const double curv = model.d_g(x, 2, qp) - model.r(x) * model.d_f(x, 2, qp);
    return qp.q * h * h / (q_number(2, qp) * fx) * curv * kernel.moment2;
}

struct CltParams {
    double script_E = 0.0;
    double script_V = 0.0;
};

// Limiting mean and variance of sqrt(nh) (r_hat - r) when sqrt(n h^5) -> c.
inline CltParams clt_params(const TargetModel& model, const QKernel& kernel,
                            const QParam& qp, double c, double x) {
    const double fx = model.f(x);
    if (fx <= 0.0) throw DomainError("clt_params: f(x) must be positive");
    const double curv = model.d_g(x, 2, qp) - model.r(x) * model.d_f(x, 2, qp);
    CltParams out;
    out.script_E = qp.q * c / (q_number(2, qp) * fx) * curv * kernel.moment2;
    out.script_V = model.noise_cond_var(x) * kernel.square_integral / fx;
    return out;
}

struct RateTerms {
    double v_nk = 0.0;
    double w_term = 0.0;
    double rate = 0.0;
};

// Ingredients of the almost-sure rate q w h^2 + sqrt(v_{(n,k)} ln_q n).
// The deformed logarithm grows polynomially, not logarithmically; it is used
// verbatim because the stated rates are in terms of ln_q.
inline RateTerms rate_terms(const TargetModel& model, const QKernel& kernel,
                            const QParam& qp, std::size_t n, double h, int k,
                            double c0 = 1.0, double L = 2.0) {
    if (n < 1) throw ParameterError("rate_terms: n must be >= 1");
    if (h <= 0.0) throw ParameterError("rate_terms: h must be positive");
    if (k < 0) throw ParameterError("rate_terms: k must be >= 0");
    if (c0 <= 0.0) throw ParameterError("rate_terms: c0 must be positive");
    const double two_q = q_number(2, qp);
    if (L <= std::sqrt(2.0 * two_q))
        throw ParameterError("rate_terms: L must exceed sqrt(2 [2]_q)");
    const double lnq_n = tsallis_ln(static_cast<double>(n), qp.q);
    RateTerms out;
    out.v_nk = std::pow(c0 * lnq_n, 0.5 * k) * model.sup_f() * kernel.square_integral /
               (static_cast<double>(n) * h);
    out.w_term = (L / two_q) * kernel.moment2;
    out.rate = qp.q * out.w_term * h * h + std::sqrt(out.v_nk * lnq_n);
    return out;
}

// Tail bound exp_q(-t^2 / ([2]_q (v + c t))).
inline double bernstein_bound(double t, double v, double c, const QParam& qp) {
    if (t < 0.0) throw ParameterError("bernstein_bound: t must be >= 0");
    if (v <= 0.0 || c <= 0.0)
        throw ParameterError("bernstein_bound: v and c must be positive");
    const double arg = -t * t / (q_number(2, qp) * (v + c * t));
    return tsallis_exp(arg, qp.q);
}

// The scale constant multiplying t in the concentration denominator:
//   M (c0 ln_q n)^{k/2} sup|f| [2]_q / ([3]_q! n h), with M the kernel sup bound.
inline double bernstein_scale(const TargetModel& model, const QKernel& kernel,
                              const QParam& qp, std::size_t n, double h, int k,
                              double c0 = 1.0) {
    if (n < 1 || h <= 0.0) throw ParameterError("bernstein_scale: need n >= 1, h > 0");
    const double lnq_n = tsallis_ln(static_cast<double>(n), qp.q);
    const double envelope = std::pow(c0 * lnq_n, 0.5 * k) * model.sup_f();
    return kernel.sup_bound * envelope * q_number(2, qp) /
           (q_factorial(3, qp) * static_cast<double>(n) * h);
}

// Largest t for which the bound argument stays inside the exp_q domain, with a
// 5% safety margin; solves t^2 = [2]_q y (v + c t) for y = 0.95/(1-q).
inline double bernstein_t_cap(double v, double c, const QParam& qp) {
    if (qp.classical()) return 6.0 * std::sqrt(v);
    const double y = 0.95 / (1.0 - qp.q);
    const double two_q = q_number(2, qp);
    const double b = two_q * y * c;
    return 0.5 * (b + std::sqrt(b * b + 4.0 * two_q * y * v));
}

struct MarkovCheck {
    double empirical_prob = 0.0;
    double bound = 0.0;
};

// Empirical exceedance frequency P(X >= a) next to the Markov bound E(X)/a.
inline MarkovCheck markov_check(const std::vector<double>& samples, double a) {
    if (samples.empty()) throw ParameterError("markov_check: empty sample");
    if (a <= 0.0) throw ParameterError("markov_check: a must be positive");
    double sum = 0.0;
    std::size_t exceed = 0;
    for (double x : samples) {
        if (x < 0.0) throw ParameterError("markov_check: samples must be nonnegative");
        sum += x;
        if (x >= a) ++exceed;
    }
    MarkovCheck out;
    out.empirical_prob = static_cast<double>(exceed) / static_cast<double>(samples.size());
    out.bound = sum / static_cast<double>(samples.size()) / a;
    return out;
}

// Lyapunov-condition diagnostic with delta = 1 for the summands
// Z_i = (1/(nh)) (Y_i - r(x)) K((x - X_i)/h): sum |Z - mean|^3 / (sum (Z - mean)^2)^{3/2}.
// Uses r_hat(x) unless a true regression value is supplied.
inline double lyapunov_ratio(const Sample& sample, const EstimatorConfig& cfg, double x,
                             std::optional<double> true_r = std::nullopt) {
    sample.validate();
    const std::size_t n = sample.n();
    const double h = cfg.h;
    double r_at_x = 0.0;
    if (true_r) {
        r_at_x = *true_r;
    } else {
        const double f_hat = estimate_gamma_point(sample, cfg.kernel, h, x, 0);
        const double g_hat = estimate_gamma_point(sample, cfg.kernel, h, x, 1);
        r_at_x = g_hat / std::max(f_hat, 0.5 * cfg.b);
    }
    std::vector<double> z(n);
    const double scale = 1.0 / (static_cast<double>(n) * h);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = scale * (sample.ys[i] - r_at_x) * cfg.kernel((x - sample.xs[i]) / h);
    const double zbar = stats::mean(z);
    double sum2 = 0.0, sum3 = 0.0;
    for (double zi : z) {
        const double d = std::abs(zi - zbar);
        sum2 += d * d;
        sum3 += d * d * d;
    }
    const double denom = std::pow(sum2, 1.5);
    if (!(denom > 0.0) || !std::isfinite(denom))
        throw DegenerateVariance("lyapunov_ratio: variance term vanished");
    return sum3 / denom;
}

// Bundle of every prediction for one (model, kernel, n, h, k) configuration.
struct TheoryReport {
    std::vector<double> grid;
    std::vector<double> bias_leading;
    std::vector<double> script_E;
    std::vector<double> script_V;
    double v_nk = 0.0;
    double w_term = 0.0;
    double rate = 0.0;
    std::vector<std::pair<double, double>> bernstein_curve;
    double lyapunov_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct TheoryRequest {
    TargetModel model;
    QKernel kernel;
    std::vector<double> grid;
    std::size_t n = 4096;
    double h = 0.0;  // 0 means use the default bandwidth rule
    int k = 0;
    double c0 = 1.0;
    double L = 2.0;
    int bernstein_points = 20;
};

inline TheoryReport make_theory_report(const TheoryRequest& req) {
    if (req.grid.empty()) throw ParameterError("make_theory_report: empty grid");
    if (req.bernstein_points < 2)
        throw ParameterError("make_theory_report: need at least 2 bernstein points");
    const QParam qp = req.kernel.qparam();
    const double h = req.h > 0.0 ? req.h : default_bandwidth(req.n);
    const double c = std::sqrt(static_cast<double>(req.n) * std::pow(h, 5.0));

    TheoryReport rep;
    rep.grid = req.grid;
    rep.bias_leading.reserve(req.grid.size());
    rep.script_E.reserve(req.grid.size());
    rep.script_V.reserve(req.grid.size());
    for (double x : req.grid) {
        rep.bias_leading.push_back(bias_rn(req.model, req.kernel, h, x));
        const CltParams cp = clt_params(req.model, req.kernel, qp, c, x);
        rep.script_E.push_back(cp.script_E);
        rep.script_V.push_back(cp.script_V);
    }

    const RateTerms rt = rate_terms(req.model, req.kernel, qp, req.n, h, req.k, req.c0, req.L);
    rep.v_nk = rt.v_nk;
    rep.w_term = rt.w_term;
    rep.rate = rt.rate;

    const double scale = bernstein_scale(req.model, req.kernel, qp, req.n, h, req.k, req.c0);
    const double t_cap = bernstein_t_cap(rt.v_nk, scale, qp);
    rep.bernstein_curve.reserve(req.bernstein_points);
    for (int i = 1; i <= req.bernstein_points; ++i) {
        const double t = t_cap * static_cast<double>(i) / req.bernstein_points;
        rep.bernstein_curve.emplace_back(t, bernstein_bound(t, rt.v_nk, scale, qp));
    }
    return rep;
}

inline nlohmann::ordered_json to_json(const TheoryReport& rep) {
    nlohmann::ordered_json j;
    j["grid"] = rep.grid;
    j["bias_leading"] = rep.bias_leading;
    j["script_E"] = rep.script_E;
    j["script_V"] = rep.script_V;
    j["v_nk"] = rep.v_nk;
    j["w_term"] = rep.w_term;
    j["rate"] = rep.rate;
    auto curve = nlohmann::ordered_json::array();
    for (const auto& [t, bound] : rep.bernstein_curve)
        curve.push_back({t, bound});
    j["bernstein_curve"] = curve;
    if (std::isnan(rep.lyapunov_ratio))
        j["lyapunov_ratio"] = nullptr;
    else
        j["lyapunov_ratio"] = rep.lyapunov_ratio;
    return j;
}

}  // namespace qsmooth
