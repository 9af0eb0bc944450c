#pragma once

// The two q-kernel families: the q-Gaussian profile normalized by its
// q-analog of sqrt(2*pi), and the polynomial family (1-q^2 u^2)^p/c_q that
// deforms the uniform/Epanechnikov/biweight/triweight kernels.

#include <cmath>
#include <string>

#include "qsmooth/jackson.hpp"
#include "qsmooth/qarith.hpp"

namespace qsmooth {

enum class KernelKind { Gaussian, Polynomial };

// Immutable after construction via make_q_gaussian / make_q_poly.
// All moment caches are Jackson integrals over the support under the
// construction policy.
struct QKernel {
    KernelKind kind = KernelKind::Polynomial;
    int p = 1;  // polynomial degree; ignored for Gaussian
    double q = 0.5;
    double one_limit_epsilon = 1e-8;
    SeriesPolicy policy{};
    double support_halfwidth = 1.0;
    double norm_const = 2.0;      // c(q) or c_q
    double sup_bound = 0.5;       // M = sup K
    double moment2 = 0.0;         // int u^2 K d_q u
    double square_integral = 0.0; // int K^2 d_q u
    double cube_integral = 0.0;   // int K^3 d_q u

    QParam qparam() const { return QParam(q, one_limit_epsilon); }

    double operator()(double u) const {
        if (std::abs(u) > support_halfwidth) return 0.0;
        if (kind == KernelKind::Polynomial) {
            if (p == 0) return 1.0 / norm_const;
            const double t = 1.0 - q * q * u * u;
            if (t <= 0.0) return 0.0;
            double v = t;
            for (int j = 1; j < p; ++j) v *= t;
            return v / norm_const;
        }
        return q_gauss_series(u, qparam(), policy) / norm_const;
    }
};

namespace detail {

inline double binomial_coeff(int n, int k) {
    double acc = 1.0;
    for (int j = 1; j <= k; ++j) acc = acc * (n - k + j) / j;
    return acc;
}

inline void validate_kernel_shape(QKernel& k) {
    // 1001-point scan of the support: positivity and location of the sup.
    const int pts = 1001;
    double maxv = 0.0;
    for (int i = 0; i < pts; ++i) {
        const double u = -k.support_halfwidth +
                         2.0 * k.support_halfwidth * i / (pts - 1);
        const double v = k(u);
        if (v < 0.0)
            throw PositivityViolation("kernel negative at u = " + std::to_string(u));
        maxv = std::max(maxv, v);
    }
    if (maxv > k.sup_bound * (1.0 + 1e-12))
        throw QError("kernel sup on validation grid exceeds recorded bound");
}

}  // namespace detail

// Jackson integral of u^{u_power} K^{k_power} over the kernel support.
inline double kernel_moment(const QKernel& kernel, int u_power, int k_power,
                            const SeriesPolicy& policy = {}) {
    if (u_power < 0) throw ParameterError("kernel_moment: u_power must be >= 0");
    if (k_power < 1) throw ParameterError("kernel_moment: k_power must be >= 1");
    auto integrand = [&](double u) {
        double acc = 1.0;
        for (int j = 0; j < u_power; ++j) acc *= u;
        double kv = kernel(u);
        double kp = 1.0;
        for (int j = 0; j < k_power; ++j) kp *= kv;
        return acc * kp;
    };
    JacksonIntegralResult r =
        jackson_integral(integrand, -kernel.support_halfwidth, kernel.support_halfwidth,
                         kernel.qparam(), policy);
    if (!r.truncation_complete)
        throw TruncationIncomplete("kernel_moment: Jackson sum hit max_terms");
    return r.value;
}

// Gaussian-family kernel K(u) = E_{q2}^{-q2 u2/[2]_q} / c(q) on [-nu, nu],
// c(q) = 2(1-q) nu sum_k q^k E_{q2}^{-q2 (q^k nu)2/[2]_q}.
//
// The node values E(q^k nu) are shared between the normalizer and the moment
// caches, since each is the same Jackson sum with a different weight. At q
// close to 1 the sum needs far more than the default max_terms; pass a policy
// sized for roughly log(tol*(1-q))/log(q) terms.
inline QKernel make_q_gaussian(const QParam& q, const SeriesPolicy& policy = {}) {
    policy.validate();
    QKernel k;
    k.kind = KernelKind::Gaussian;
    k.p = 0;
    k.q = q.q;
    k.one_limit_epsilon = q.one_limit_epsilon;
    k.policy = policy;
    k.support_halfwidth = q.nu;

    const double scale = std::max(1.0, q.nu * q.nu);
    constexpr int kQuietRun = 40;
    double c_raw = 0.0, m2_raw = 0.0, sq_raw = 0.0, cu_raw = 0.0;
    double qk = 1.0;
    int quiet = 0;
    bool complete = false;
    for (int kk = 0; kk < policy.max_terms; ++kk) {
        const double x = qk * q.nu;
        const double e = q_gauss_series(x, q, policy);
        const double w = 2.0 * (1.0 - q.q) * q.nu * qk;
        c_raw += w * e;
        m2_raw += w * x * x * e;
        sq_raw += w * e * e;
        cu_raw += w * e * e * e;
        const double tail = w * e * scale / (1.0 - q.q);
        quiet = (tail < policy.tol) ? quiet + 1 : 0;
        qk *= q.q;
        if (quiet >= kQuietRun) {
            complete = true;
            break;
        }
    }
    if (!complete)
        throw TruncationIncomplete("make_q_gaussian: normalizer needs more terms than policy allows");

    k.norm_const = c_raw;
    k.sup_bound = 1.0 / c_raw;  // series maximum sits at u = 0
    k.moment2 = m2_raw / c_raw;
    k.square_integral = sq_raw / (c_raw * c_raw);
    k.cube_integral = cu_raw / (c_raw * c_raw * c_raw);
    detail::validate_kernel_shape(k);
    return k;
}

// Polynomial family K(u) = (1-q^2 u^2)^p / c_q on [-1,1], with the closed-form
// normalizer c_q = 2 sum_l (-1)^l C(p,l) q^{2l} / [2l+1]_q. p = 0 is the
// rectangular kernel.
inline QKernel make_q_poly(int p, const QParam& q, const SeriesPolicy& policy = {}) {
    if (p < 0) throw ParameterError("make_q_poly: p must be >= 0");
    policy.validate();
    QKernel k;
    k.kind = KernelKind::Polynomial;
    k.p = p;
    k.q = q.q;
    k.one_limit_epsilon = q.one_limit_epsilon;
    k.policy = policy;
    k.support_halfwidth = 1.0;

    double c = 0.0;
    double q2l = 1.0;
    for (int l = 0; l <= p; ++l) {
        const double sgn = (l % 2 == 0) ? 1.0 : -1.0;
        c += sgn * detail::binomial_coeff(p, l) * q2l / q_number(2 * l + 1, q);
        q2l *= q.q * q.q;
    }
    c *= 2.0;

    k.norm_const = c;
    k.sup_bound = 1.0 / c;
    k.moment2 = kernel_moment(k, 2, 1, policy);
    k.square_integral = kernel_moment(k, 0, 2, policy);
    k.cube_integral = kernel_moment(k, 0, 3, policy);
    detail::validate_kernel_shape(k);
    return k;
}

}  // namespace qsmooth
