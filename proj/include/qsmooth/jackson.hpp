#pragma once

// Jackson integration on [a,b] and on the natural symmetric domain
// [-nu, nu], discrete q-derivatives, and q-Taylor expansion.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "qsmooth/qarith.hpp"

namespace qsmooth {

struct JacksonIntegralResult {
    double value = 0.0;
    int terms_used = 0;
    bool truncation_complete = true;
    // Geometric tail estimate |last term|/(1-q); below policy.tol whenever
    // truncation_complete.
    double tail_bound_estimate = 0.0;
};

// int_a^b f d_q x = (1-q) sum_{k>=0} q^k [ b f(q^k b) - a f(q^k a) ].
//
// Stops once the tail estimate stays below policy.tol for a run of consecutive
// terms; a single small term is not enough, since integrands supported away
// from the endpoints produce interior zeros before the sum has converged.
//
// Until a significant term has been seen, quiet runs prove nothing: when b
// lies far outside the integrand's support, every leading node q^k b misses
// it (e.g. a density on [-3,3] integrated over [-nu,nu] with nu >> 3). Before
// first mass, completion additionally waits for the abscissa scale q^k to
// drop below tol. A gap of more than the quiet-run length strictly between
// two support regions can still truncate early; no local rule can see across
// it.
template <class F>
JacksonIntegralResult jackson_integral(F&& f, double a, double b, const QParam& q,
                                       const SeriesPolicy& policy = {}) {
    policy.validate();
    if (a == b) return {0.0, 0, true, 0.0};

    constexpr int kQuietRun = 40;
    const int k_floor = static_cast<int>(std::min<double>(
        policy.max_terms, std::ceil(std::log(policy.tol) / std::log(q.q))));
    const double one_minus_q = 1.0 - q.q;
    double sum = 0.0;
    double qk = 1.0;
    double tail = 0.0;
    int quiet = 0;
    bool significant = false;
    for (int k = 0; k < policy.max_terms; ++k) {
        const double fb = (b != 0.0) ? f(qk * b) : 0.0;
        const double fa = (a != 0.0) ? f(qk * a) : 0.0;
        if (!std::isfinite(fb) || !std::isfinite(fa))
            throw NonFiniteEvaluation("jackson_integral: integrand not finite at scale q^" +
                                      std::to_string(k));
        const double term = one_minus_q * qk * (b * fb - a * fa);
        sum += term;
        tail = std::abs(term) / one_minus_q;
        if (tail < policy.tol) {
            ++quiet;
        } else {
            quiet = 0;
            significant = true;
        }
        qk *= q.q;
        if (quiet >= kQuietRun && (significant || k + 1 >= k_floor))
            return {sum, k + 1, true, tail};
    }
    return {sum, policy.max_terms, false, tail};
}

// Improper integral over the whole line collapses to the proper integral on
// [-nu, nu]: outside that interval the q-Gaussian weight vanishes and the
// Jackson nodes q^k b already fill the interval densely near 0.
template <class F>
JacksonIntegralResult jackson_integral_improper(F&& f, const QParam& q,
                                                const SeriesPolicy& policy = {}) {
    return jackson_integral(std::forward<F>(f), -q.nu, q.nu, q, policy);
}

// D_q f(x) = (f(qx) - f(x)) / ((q-1)x).
//
// At x = 0 the quotient is 0/0; a symmetric difference quotient stands in
// (matching the q->1 limit of the operator). Set used_limit_fallback to
// observe when that happened.
template <class F>
double q_derivative(F&& f, double x, const QParam& q, bool* used_limit_fallback = nullptr) {
    if (used_limit_fallback) *used_limit_fallback = false;
    if (x == 0.0) {
        if (used_limit_fallback) *used_limit_fallback = true;
        const double hstep = 1e-6;
        const double d = (f(hstep) - f(-hstep)) / (2.0 * hstep);
        if (!std::isfinite(d))
            throw DomainError("q_derivative: no finite limit at x = 0");
        return d;
    }
    const double num = f(q.q * x) - f(x);
    const double den = (q.q - 1.0) * x;
    const double d = num / den;
    if (!std::isfinite(d))
        throw NonFiniteEvaluation("q_derivative: non-finite quotient");
    return d;
}

// s-fold q-derivative via the divided-difference triangle on the geometric
// nodes x, qx, ..., q^s x: s+1 evaluations of f, O(s^2) arithmetic.
template <class F>
double q_derivative_iter(F&& f, double x, int s, const QParam& q) {
    if (s < 0) throw ParameterError("q_derivative_iter: order must be >= 0");
    if (s == 0) return f(x);
    if (x == 0.0)
        throw DomainError("q_derivative_iter: nested nodes hit x = 0");

    std::vector<double> row(s + 1);
    double node = x;
    for (int j = 0; j <= s; ++j) {
        row[j] = f(node);
        if (!std::isfinite(row[j]))
            throw NonFiniteEvaluation("q_derivative_iter: integrand not finite");
        node *= q.q;
    }
    for (int level = 1; level <= s; ++level) {
        double qj = 1.0;
        for (int j = 0; j + level <= s; ++j) {
            row[j] = (row[j + 1] - row[j]) / ((q.q - 1.0) * qj * x);
            qj *= q.q;
        }
    }
    return row[0];
}

// Truncated q-Taylor expansion around a:
//   f(b) ~ sum_{k=0}^order coefficients[k] * (b - a)^k_q
// with coefficients[k] = (D_q^k f)(a) / [k]_q!.
struct QTaylorExpansion {
    double center = 0.0;
    int order = 0;
    std::vector<double> coefficients;
    // |f(b) - partial sum| at the last probed b; NaN until probed.
    double remainder_estimate = std::numeric_limits<double>::quiet_NaN();
};

template <class F>
QTaylorExpansion q_taylor(F&& f, double a, int order, const QParam& q) {
    if (order < 0) throw ParameterError("q_taylor: order must be >= 0");
    QTaylorExpansion e;
    e.center = a;
    e.order = order;
    e.coefficients.resize(order + 1);
    for (int k = 0; k <= order; ++k)
        e.coefficients[k] = q_derivative_iter(f, a, k, q) / q_factorial(k, q);
    return e;
}

inline double q_taylor_eval(const QTaylorExpansion& e, double b, const QParam& q) {
    double sum = 0.0;
    for (int k = 0; k <= e.order; ++k)
        sum += e.coefficients[k] * q_pochhammer(b, e.center, k, q);
    return sum;
}

// Residual |f(b) - partial sum|, recorded on the expansion.
template <class F>
double q_taylor_residual(F&& f, QTaylorExpansion& e, double b, const QParam& q) {
    const double r = std::abs(f(b) - q_taylor_eval(e, b, q));
    e.remainder_estimate = r;
    return r;
}

}  // namespace qsmooth
