#pragma once

// Monte Carlo harness: sampling from q-densities (discrete Jackson measure or
// a continuous classical-limit law), replicated experiments checking the
// theoretical predictions, and CSV/JSON report output. Replicates use
// counter-derived RNG streams and results merge in replicate order, so reports
// are bit-identical for a fixed config regardless of scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qsmooth/estimators.hpp"
#include "qsmooth/jackson.hpp"
#include "qsmooth/kernels.hpp"
#include "qsmooth/qarith.hpp"
#include "qsmooth/stats.hpp"
#include "qsmooth/theory.hpp"

namespace qsmooth {

// Categorical sampler on the Jackson grid {±q^k ν}: the q-integral's own
// discrete measure, with masses (1-q) q^k ν f(±q^k ν) renormalized to 1.
struct QSampler {
    std::function<double(double)> density;
    QParam q;
    std::vector<double> grid_points;
    std::vector<double> masses;
    std::vector<double> cumulative;
    double renorm_constant = 0.0;  // pre-normalization mass sum
    std::uint64_t rng_seed = 0;

    explicit QSampler(const QParam& qp) : q(qp), rng_(0) {}

    double draw(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double u = unif(rng);
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const std::size_t idx =
            std::min(static_cast<std::size_t>(it - cumulative.begin()),
                     grid_points.size() - 1);
        return grid_points[idx];
    }

    double draw() { return draw(rng_); }

    void reset_stream() { rng_.seed(rng_seed); }

private:
    std::mt19937_64 rng_;
    friend QSampler build_sampler(std::function<double(double)>, const QParam&,
                                  const SeriesPolicy&, std::uint64_t);
};

inline QSampler build_sampler(std::function<double(double)> f, const QParam& qp,
                              const SeriesPolicy& policy = {}, std::uint64_t seed = 0) {
    policy.validate();
    QSampler s(qp);
    s.density = f;
    s.rng_seed = seed;
    s.rng_.seed(seed);

    const double nu = qp.nu;
    const int k_floor = static_cast<int>(std::min<double>(
        policy.max_terms, std::ceil(std::log(policy.tol) / std::log(qp.q))));
    double qpow = 1.0;
    double sum = 0.0;
    int quiet = 0;
    bool significant = false;
    bool complete = false;
    for (int k = 0; k < policy.max_terms; ++k) {
        const double x = qpow * nu;
        const double w = (1.0 - qp.q) * x;
        const double fp = f(x);
        const double fm = f(-x);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NonFiniteEvaluation("build_sampler: density evaluation not finite");
        if (fp < 0.0 || fm < 0.0)
            throw InvalidDensity("build_sampler: density is negative on the grid");
        s.grid_points.push_back(x);
        s.masses.push_back(w * fp);
        s.grid_points.push_back(-x);
        s.masses.push_back(w * fm);
        sum += w * (fp + fm);

        // same quiet-run tail rule as the Jackson integral, including the
        // before-first-mass horizon for densities supported well inside
        // [-nu, nu]
        if (w * (fp + fm) / (1.0 - qp.q) < policy.tol) {
            if (++quiet >= 40 && (significant || k + 1 >= k_floor)) {
                complete = true;
                break;
            }
        } else {
            quiet = 0;
            significant = true;
        }
        qpow *= qp.q;
    }
    if (!complete)
        throw TruncationIncomplete("build_sampler: mass series did not converge");
    if (std::abs(sum - 1.0) > 0.01)
        throw InvalidDensity("build_sampler: density mass " + std::to_string(sum) +
                             " deviates from 1 by more than 0.01");

    s.renorm_constant = sum;
    s.cumulative.resize(s.masses.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < s.masses.size(); ++i) {
        s.masses[i] /= sum;
        acc += s.masses[i];
        s.cumulative[i] = acc;
    }
    s.cumulative.back() = 1.0;
    return s;
}

// Continuous rejection sampler under a flat envelope; the classical-limit
// reading of "X is distributed with density f".
struct ClassicalSampler {
    std::function<double(double)> density;
    double lo = -1.0;
    double hi = 1.0;
    double bound = 1.0;

    double draw(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> ux(lo, hi);
        std::uniform_real_distribution<double> uy(0.0, bound);
        for (int tries = 0; tries < 1000000; ++tries) {
            const double x = ux(rng);
            if (uy(rng) <= density(x)) return x;
        }
        throw QError("ClassicalSampler: rejection loop stalled");
    }
};

inline ClassicalSampler make_classical_sampler(const TargetModel& model) {
    ClassicalSampler s;
    s.density = model.f;
    s.lo = model.x_lo;
    s.hi = model.x_hi;
    s.bound = model.sup_f() * 1.0001;
    return s;
}

// Named bandwidth rules: "default" or "n^-<e>" with <e> a decimal or a/b.
inline double rule_exponent(const std::string& rule) {
    if (rule.rfind("n^-", 0) != 0)
        throw InputFormatError("bandwidth rule must be \"default\" or \"n^-<exponent>\": " +
                               rule);
    const std::string body = rule.substr(3);
    const auto slash = body.find('/');
    try {
        std::size_t used = 0;
        if (slash == std::string::npos) {
            const double e = std::stod(body, &used);
            if (used != body.size()) throw std::invalid_argument(body);
            return e;
        }
        const std::string a = body.substr(0, slash), b = body.substr(slash + 1);
        const double num = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        const double den = std::stod(b, &used);
        if (used != b.size() || den == 0.0) throw std::invalid_argument(b);
        return num / den;
    } catch (const std::logic_error&) {
        throw InputFormatError("cannot parse bandwidth rule exponent: " + rule);
    }
}

inline double bandwidth_from_rule(const std::string& rule, std::size_t n) {
    if (rule == "default") return default_bandwidth(n);
    return std::pow(static_cast<double>(n), -rule_exponent(rule));
}

inline double floor_from_rule(const std::string& rule, std::size_t n) {
    if (rule == "default") return default_floor(n);
    return std::max(1e-3, std::pow(static_cast<double>(n), -rule_exponent(rule)));
}

struct ExperimentConfig {
    std::string model = "default";
    std::string mode = "classical-limit";  // or "q-native"
    double q = 0.99;
    KernelKind kernel_kind = KernelKind::Polynomial;
    int kernel_p = 1;
    std::vector<std::size_t> n_values;
    int replicates = 1;
    std::string h_rule = "default";
    std::string b_rule = "default";
    std::vector<double> h_values;  // bias task only; empty means built-in grid
    double grid_lo = -0.5;
    double grid_hi = 0.5;
    int grid_count = 21;
    double x_eval = 0.0;
    std::uint64_t seed = 1;
    double c0 = 1.0;
    double L = 2.0;
    std::vector<int> k_values = {0, 1};
    int bernstein_points = 20;
    std::vector<std::string> tasks;
    SeriesPolicy policy{1e-12, 300000};  // construction accuracy; not serialized

    void validate() const {
        QParam qp(q);  // range check
        (void)qp;
        make_model(model);  // name check
        if (mode != "classical-limit" && mode != "q-native")
            throw ParameterError("mode must be classical-limit or q-native: " + mode);
        if (kernel_p < 0) throw ParameterError("kernel p must be >= 0");
        if (n_values.empty()) throw ParameterError("n_values must be nonempty");
        for (std::size_t i = 1; i < n_values.size(); ++i)
            if (n_values[i] <= n_values[i - 1])
                throw ParameterError("n_values must be strictly increasing");
        if (n_values.front() < 8) throw ParameterError("n values must be >= 8");
        if (replicates < 1) throw ParameterError("replicates must be >= 1");
        (void)bandwidth_from_rule(h_rule, n_values.front());
        (void)floor_from_rule(b_rule, n_values.front());
        for (double h : h_values)
            if (!(h > 0.0)) throw ParameterError("h_values must be positive");
        if (grid_count < 1) throw ParameterError("grid count must be >= 1");
        if (grid_lo > grid_hi) throw ParameterError("grid lo must be <= hi");
        if (!(x_eval >= grid_lo - 10.0 && x_eval <= grid_hi + 10.0) ||
            !std::isfinite(x_eval))
            throw ParameterError("x_eval must be finite");
        if (c0 <= 0.0) throw ParameterError("c0 must be positive");
        if (L <= 0.0) throw ParameterError("L must be positive");
        if (k_values.empty()) throw ParameterError("k_values must be nonempty");
        for (int k : k_values)
            if (k < 0 || k > kMaxMomentOrder)
                throw ParameterError("k_values entries must be in [0, 8]");
        if (bernstein_points < 2) throw ParameterError("bernstein t grid needs >= 2 points");
        if (tasks.empty()) throw ParameterError("tasks must be nonempty");
        for (const std::string& t : tasks)
            if (t != "normality" && t != "bias" && t != "rate" && t != "bernstein" &&
                t != "markov" && t != "lyapunov")
                throw ParameterError("unknown task: " + t);
    }

    std::vector<double> grid() const {
        std::vector<double> g(grid_count);
        for (int i = 0; i < grid_count; ++i)
            g[i] = grid_count == 1
                       ? grid_lo
                       : grid_lo + (grid_hi - grid_lo) * i / (grid_count - 1);
        return g;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["model"] = model;
        j["mode"] = mode;
        j["q"] = q;
        j["kernel"] = {{"kind", kernel_kind == KernelKind::Gaussian ? "gaussian" : "poly"},
                       {"p", kernel_p}};
        j["n_values"] = n_values;
        j["replicates"] = replicates;
        j["h_rule"] = h_rule;
        j["b_rule"] = b_rule;
        j["h_values"] = h_values;
        j["grid"] = {{"lo", grid_lo}, {"hi", grid_hi}, {"count", grid_count}};
        j["x_eval"] = x_eval;
        j["seed"] = seed;
        j["rate"] = {{"c0", c0}, {"L", L}, {"k_values", k_values}};
        j["bernstein"] = {{"t_points", bernstein_points}};
        j["tasks"] = tasks;
        return j;
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        try {
            for (const auto& [key, value] : j.items()) {
                if (key == "model") cfg.model = value.get<std::string>();
                else if (key == "mode") cfg.mode = value.get<std::string>();
                else if (key == "q") cfg.q = value.get<double>();
                else if (key == "kernel") {
                    for (const auto& [kk, kv] : value.items()) {
                        if (kk == "kind") {
                            const std::string kind = kv.get<std::string>();
                            if (kind == "gaussian") cfg.kernel_kind = KernelKind::Gaussian;
                            else if (kind == "poly") cfg.kernel_kind = KernelKind::Polynomial;
                            else throw InputFormatError("config: unknown kernel kind " + kind);
                        } else if (kk == "p") cfg.kernel_p = kv.get<int>();
                        else throw InputFormatError("config: unknown kernel key " + kk);
                    }
                } else if (key == "n_values")
                    cfg.n_values = value.get<std::vector<std::size_t>>();
                else if (key == "replicates") cfg.replicates = value.get<int>();
                else if (key == "h_rule") cfg.h_rule = value.get<std::string>();
                else if (key == "b_rule") cfg.b_rule = value.get<std::string>();
                else if (key == "h_values") cfg.h_values = value.get<std::vector<double>>();
                else if (key == "grid") {
                    for (const auto& [gk, gv] : value.items()) {
                        if (gk == "lo") cfg.grid_lo = gv.get<double>();
                        else if (gk == "hi") cfg.grid_hi = gv.get<double>();
                        else if (gk == "count") cfg.grid_count = gv.get<int>();
                        else throw InputFormatError("config: unknown grid key " + gk);
                    }
                } else if (key == "x_eval") cfg.x_eval = value.get<double>();
                else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
                else if (key == "rate") {
                    for (const auto& [rk, rv] : value.items()) {
                        if (rk == "c0") cfg.c0 = rv.get<double>();
                        else if (rk == "L") cfg.L = rv.get<double>();
                        else if (rk == "k_values") cfg.k_values = rv.get<std::vector<int>>();
                        else throw InputFormatError("config: unknown rate key " + rk);
                    }
                } else if (key == "bernstein") {
                    for (const auto& [bk, bv] : value.items()) {
                        if (bk == "t_points") cfg.bernstein_points = bv.get<int>();
                        else throw InputFormatError("config: unknown bernstein key " + bk);
                    }
                } else if (key == "tasks")
                    cfg.tasks = value.get<std::vector<std::string>>();
                else
                    throw InputFormatError("config: unknown key " + key);
            }
        } catch (const nlohmann::json::exception& e) {
            throw InputFormatError(std::string("config: ") + e.what());
        }
        cfg.validate();
        return cfg;
    }
};

// FNV-1a over the canonical serialized config; tags report filenames.
inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = cfg.to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::string hash;

    struct NormalityRow {
        std::size_t n = 0;
        double h = 0, x = 0, script_E = 0, script_V = 0;
        double empirical_bias = 0, empirical_sd = 0, var_ratio = 0;
        double ks_stat = 0, p_value = 0;
    };
    struct NormalityRep {
        int rep = 0;
        double r_hat = 0, standardized = 0;
    };
    std::vector<NormalityRow> normality;
    std::vector<std::vector<NormalityRep>> normality_reps;  // parallel to normality

    struct BiasRow {
        std::size_t n = 0;
        double h = 0, empirical_bias = 0, predicted_bias = 0, ratio = 0;
    };
    std::vector<BiasRow> bias;
    double bias_slope = std::numeric_limits<double>::quiet_NaN();

    struct RateRow {
        std::size_t n = 0;
        double h = 0;
        std::string target;  // "f", "g", "r"
        double sup_error = 0, rate = 0, ratio = 0;
    };
    std::vector<RateRow> rate;

    struct BernsteinRow {
        std::size_t n = 0;
        int k = 0;
        double t = 0, empirical = 0, bound = 0, se = 0;
        bool pass = false;
    };
    std::vector<BernsteinRow> bernstein;

    struct MarkovRow {
        std::string dist;
        double a = 0, empirical = 0, bound = 0;
        bool pass = false;
    };
    std::vector<MarkovRow> markov;

    struct LyapunovRow {
        std::size_t n = 0;
        double h = 0, ratio = 0;
    };
    std::vector<LyapunovRow> lyapunov;
    double lyapunov_slope = std::numeric_limits<double>::quiet_NaN();

    int failed_replicates = 0;
    std::vector<std::string> failures;
};

namespace detail {

// Stream ids keep every (task, size index, replicate) triple on its own
// deterministic RNG stream, independent of execution order.
inline std::uint64_t stream_id(std::uint64_t task_salt, std::uint64_t idx,
                               std::uint64_t rep) {
    return (task_salt << 48) ^ (idx << 32) ^ rep;
}

struct Runner {
    const ExperimentConfig& cfg;
    TargetModel model;         // as configured (r, noise)
    TargetModel theory_model;  // with the mode's effective design density
    QKernel kernel;
    QParam qp;
    bool q_native = false;
    std::optional<QSampler> sampler;
    ClassicalSampler continuous;

    explicit Runner(const ExperimentConfig& c)
        : cfg(c),
          model(make_model(c.model)),
          theory_model(model),
          kernel(c.kernel_kind == KernelKind::Gaussian
                     ? make_q_gaussian(QParam(c.q), c.policy)
                     : make_q_poly(c.kernel_p, QParam(c.q), c.policy)),
          qp(c.q) {
        q_native = cfg.mode == "q-native";
        if (q_native) {
            // the q-world density is f normalized by its Jackson mass
            const double z =
                jackson_integral_improper(model.f, qp, cfg.policy).value;
            auto base = model.f;
            theory_model.f = [base, z](double x) { return base(x) / z; };
            sampler = build_sampler(theory_model.f, qp, cfg.policy, cfg.seed);
        } else {
            continuous = make_classical_sampler(model);
        }
    }

    Sample draw(std::size_t n, std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        Sample s;
        s.xs.reserve(n);
        s.ys.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = q_native ? sampler->draw(rng) : continuous.draw(rng);
            const double eps =
                model.noise_halfwidth > 0.0 ? model.noise_halfwidth * unif(rng) : 0.0;
            s.xs.push_back(x);
            s.ys.push_back(model.r(x) + eps);
        }
        return s;
    }

    std::mt19937_64 stream(std::uint64_t salt, std::uint64_t idx, std::uint64_t rep) const {
        return std::mt19937_64(stats::derive_seed(cfg.seed, stream_id(salt, idx, rep)));
    }
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport rep;
    rep.config = cfg;
    rep.hash = config_hash(cfg);
    const detail::Runner run(cfg);
    const std::vector<double> grid = cfg.grid();
    const int R = cfg.replicates;

    auto record_failure = [&rep](const std::string& where, const std::exception& e) {
        ++rep.failed_replicates;
        rep.failures.push_back(where + ": " + e.what());
    };

    auto has_task = [&cfg](const char* t) {
        return std::find(cfg.tasks.begin(), cfg.tasks.end(), t) != cfg.tasks.end();
    };

    if (has_task("normality")) {
        for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
            const std::size_t n = cfg.n_values[ni];
            const double h = bandwidth_from_rule(cfg.h_rule, n);
            const double b = floor_from_rule(cfg.b_rule, n);
            const double x = cfg.x_eval;
            const double c = std::sqrt(static_cast<double>(n) * std::pow(h, 5.0));
            const CltParams cp = clt_params(run.theory_model, run.kernel, run.qp, c, x);
            if (!(cp.script_V > 0.0)) {
                rep.failures.push_back("normality: script_V is zero at x_eval");
                continue;
            }
            std::vector<std::optional<double>> r_hats(R);
            for (int r = 0; r < R; ++r) {
                try {
                    auto rng = run.stream(1, ni, r);
                    const Sample s = run.draw(n, rng);
                    const double f_hat = estimate_gamma_point(s, run.kernel, h, x, 0);
                    const double g_hat = estimate_gamma_point(s, run.kernel, h, x, 1);
                    r_hats[r] = g_hat / std::max(f_hat, 0.5 * b);
                } catch (const std::exception& e) {
                    record_failure("normality n=" + std::to_string(n) +
                                       " rep=" + std::to_string(r),
                                   e);
                }
            }
            std::vector<ExperimentReport::NormalityRep> reps;
            std::vector<double> values, standardized;
            const double scale = std::sqrt(static_cast<double>(n) * h);
            for (int r = 0; r < R; ++r) {
                if (!r_hats[r]) continue;
                const double stat =
                    (scale * (*r_hats[r] - run.model.r(x)) - cp.script_E) /
                    std::sqrt(cp.script_V);
                reps.push_back({r, *r_hats[r], stat});
                values.push_back(*r_hats[r]);
                standardized.push_back(stat);
            }
            if (values.size() < 8) {
                rep.failures.push_back("normality n=" + std::to_string(n) +
                                       ": too few successful replicates");
                continue;
            }
            ExperimentReport::NormalityRow row;
            row.n = n;
            row.h = h;
            row.x = x;
            row.script_E = cp.script_E;
            row.script_V = cp.script_V;
            row.empirical_bias = stats::mean(values) - run.model.r(x);
            row.empirical_sd = std::sqrt(stats::variance(values));
            row.var_ratio =
                stats::variance(values) * static_cast<double>(n) * h / cp.script_V;
            const stats::KsResult ks = stats::ks_test_standard_normal(standardized);
            row.ks_stat = ks.statistic;
            row.p_value = ks.p_value;
            rep.normality.push_back(row);
            rep.normality_reps.push_back(std::move(reps));
        }
    }

    if (has_task("bias")) {
        const std::size_t n = cfg.n_values.back();
        const double b = floor_from_rule(cfg.b_rule, n);
        const double x = cfg.x_eval;
        std::vector<double> hs = cfg.h_values;
        if (hs.empty())
            hs = {0.1, 0.1 * std::sqrt(2.0), 0.2, 0.2 * std::sqrt(2.0), 0.4};
        std::vector<double> log_h, log_bias;
        for (std::size_t hi = 0; hi < hs.size(); ++hi) {
            const double h = hs[hi];
            std::vector<std::optional<double>> r_hats(R);
            for (int r = 0; r < R; ++r) {
                try {
                    auto rng = run.stream(2, hi, r);
                    const Sample s = run.draw(n, rng);
                    const double f_hat = estimate_gamma_point(s, run.kernel, h, x, 0);
                    const double g_hat = estimate_gamma_point(s, run.kernel, h, x, 1);
                    r_hats[r] = g_hat / std::max(f_hat, 0.5 * b);
                } catch (const std::exception& e) {
                    record_failure("bias h=" + detail::fmt(h) + " rep=" + std::to_string(r),
                                   e);
                }
            }
            double sum = 0.0;
            std::size_t count = 0;
            for (int r = 0; r < R; ++r)
                if (r_hats[r]) {
                    sum += *r_hats[r];
                    ++count;
                }
            if (count == 0) {
                rep.failures.push_back("bias h=" + detail::fmt(h) + ": no replicates");
                continue;
            }
            ExperimentReport::BiasRow row;
            row.n = n;
            row.h = h;
            row.empirical_bias = sum / count - run.model.r(x);
            row.predicted_bias = bias_rn(run.theory_model, run.kernel, h, x);
            row.ratio = row.predicted_bias != 0.0 ? row.empirical_bias / row.predicted_bias
                                                  : std::numeric_limits<double>::quiet_NaN();
            rep.bias.push_back(row);
            if (row.empirical_bias != 0.0) {
                log_h.push_back(std::log(h));
                log_bias.push_back(std::log(std::abs(row.empirical_bias)));
            }
        }
        if (log_h.size() >= 2) rep.bias_slope = stats::ols_slope(log_h, log_bias);
    }

    if (has_task("rate")) {
        for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
            const std::size_t n = cfg.n_values[ni];
            const double h = bandwidth_from_rule(cfg.h_rule, n);
            EstimatorConfig est;
            est.kernel = run.kernel;
            est.h = h;
            est.b = floor_from_rule(cfg.b_rule, n);
            est.grid = grid;
            struct Sup {
                double f = 0, g = 0, r = 0;
            };
            std::vector<std::optional<Sup>> sups(R);
            for (int r = 0; r < R; ++r) {
                try {
                    auto rng = run.stream(3, ni, r);
                    const Sample s = run.draw(n, rng);
                    const EstimateSet es = estimate_regression(s, est);
                    Sup sup;
                    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                        const double x = grid[gi];
                        sup.f = std::max(sup.f,
                                         std::abs(es.f_hat[gi] - run.theory_model.f(x)));
                        sup.g = std::max(sup.g,
                                         std::abs(es.g_hat[gi] - run.theory_model.g(x)));
                        sup.r = std::max(sup.r, std::abs(es.r_hat[gi] - run.model.r(x)));
                    }
                    sups[r] = sup;
                } catch (const std::exception& e) {
                    record_failure("rate n=" + std::to_string(n) + " rep=" + std::to_string(r),
                                   e);
                }
            }
            double sf = 0, sg = 0, sr = 0;
            std::size_t count = 0;
            for (int r = 0; r < R; ++r)
                if (sups[r]) {
                    sf += sups[r]->f;
                    sg += sups[r]->g;
                    sr += sups[r]->r;
                    ++count;
                }
            if (count == 0) {
                rep.failures.push_back("rate n=" + std::to_string(n) + ": no replicates");
                continue;
            }
            sf /= count;
            sg /= count;
            sr /= count;
            const RateTerms rt0 =
                rate_terms(run.theory_model, run.kernel, run.qp, n, h, 0, cfg.c0, cfg.L);
            const RateTerms rt1 =
                rate_terms(run.theory_model, run.kernel, run.qp, n, h, 1, cfg.c0, cfg.L);
            rep.rate.push_back({n, h, "f", sf, rt0.rate, sf / rt0.rate});
            rep.rate.push_back({n, h, "g", sg, rt1.rate, sg / rt1.rate});
            rep.rate.push_back({n, h, "r", sr, rt1.rate, sr / rt1.rate});
        }
    }

    if (has_task("bernstein")) {
        for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
            const std::size_t n = cfg.n_values[ni];
            const double h = bandwidth_from_rule(cfg.h_rule, n);
            const double x = cfg.x_eval;
            std::vector<std::vector<std::optional<double>>> gammas(
                cfg.k_values.size(), std::vector<std::optional<double>>(R));
            for (int r = 0; r < R; ++r) {
                try {
                    auto rng = run.stream(4, ni, r);
                    const Sample s = run.draw(n, rng);
                    for (std::size_t ki = 0; ki < cfg.k_values.size(); ++ki)
                        gammas[ki][r] =
                            estimate_gamma_point(s, run.kernel, h, x, cfg.k_values[ki]);
                } catch (const std::exception& e) {
                    record_failure(
                        "bernstein n=" + std::to_string(n) + " rep=" + std::to_string(r), e);
                }
            }
            for (std::size_t ki = 0; ki < cfg.k_values.size(); ++ki) {
                const int k = cfg.k_values[ki];
                std::vector<double> vals;
                for (int r = 0; r < R; ++r)
                    if (gammas[ki][r]) vals.push_back(*gammas[ki][r]);
                if (vals.size() < 8) {
                    rep.failures.push_back("bernstein n=" + std::to_string(n) +
                                           " k=" + std::to_string(k) +
                                           ": too few successful replicates");
                    continue;
                }
                const double center = stats::mean(vals);
                std::vector<double> devs(vals.size());
                double max_dev = 0.0;
                for (std::size_t i = 0; i < vals.size(); ++i) {
                    devs[i] = std::abs(vals[i] - center);
                    max_dev = std::max(max_dev, devs[i]);
                }
                const double v =
                    rate_terms(run.theory_model, run.kernel, run.qp, n, h, k, cfg.c0, cfg.L)
                        .v_nk;
                const double scale =
                    bernstein_scale(run.theory_model, run.kernel, run.qp, n, h, k, cfg.c0);
                const double cap = bernstein_t_cap(v, scale, run.qp);
                const double t_hi = std::min(1.25 * max_dev, 0.999 * cap);
                if (!(t_hi > 0.0)) {
                    rep.failures.push_back("bernstein n=" + std::to_string(n) +
                                           " k=" + std::to_string(k) +
                                           ": degenerate deviation scale");
                    continue;
                }
                for (int ti = 1; ti <= cfg.bernstein_points; ++ti) {
                    const double t = t_hi * ti / cfg.bernstein_points;
                    std::size_t exceed = 0;
                    for (double d : devs)
                        if (d >= t) ++exceed;
                    ExperimentReport::BernsteinRow row;
                    row.n = n;
                    row.k = k;
                    row.t = t;
                    row.empirical = static_cast<double>(exceed) / vals.size();
                    row.bound = bernstein_bound(t, v, scale, run.qp);
                    row.se = stats::binomial_se(row.empirical, vals.size());
                    row.pass = row.empirical <= row.bound + 3.0 * row.se;
                    rep.bernstein.push_back(row);
                }
            }
        }
    }

    if (has_task("markov")) {
        const std::size_t draws = 100000;
        {
            auto rng = run.stream(5, 0, 0);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::vector<double> xs(draws);
            for (double& v : xs) v = unif(rng);
            const MarkovCheck mc = markov_check(xs, 0.9);
            const double slack = 3.0 * stats::binomial_se(mc.empirical_prob, draws);
            rep.markov.push_back(
                {"uniform", 0.9, mc.empirical_prob, mc.bound,
                 mc.empirical_prob <= mc.bound + slack});
        }
        {
            auto rng = run.stream(5, 1, 0);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::vector<double> xs(draws);
            for (double& v : xs) v = -std::log(1.0 - unif(rng));
            const MarkovCheck mc = markov_check(xs, 2.0);
            const double slack = 3.0 * stats::binomial_se(mc.empirical_prob, draws);
            rep.markov.push_back(
                {"exponential", 2.0, mc.empirical_prob, mc.bound,
                 mc.empirical_prob <= mc.bound + slack});
        }
    }

    if (has_task("lyapunov")) {
        std::vector<double> log_n, log_ratio;
        for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
            const std::size_t n = cfg.n_values[ni];
            const double h = bandwidth_from_rule(cfg.h_rule, n);
            EstimatorConfig est;
            est.kernel = run.kernel;
            est.h = h;
            est.b = floor_from_rule(cfg.b_rule, n);
            est.grid = {cfg.x_eval};
            std::vector<std::optional<double>> ratios(R);
            for (int r = 0; r < R; ++r) {
                try {
                    auto rng = run.stream(6, ni, r);
                    const Sample s = run.draw(n, rng);
                    ratios[r] = lyapunov_ratio(s, est, cfg.x_eval);
                } catch (const std::exception& e) {
                    record_failure(
                        "lyapunov n=" + std::to_string(n) + " rep=" + std::to_string(r), e);
                }
            }
            std::vector<double> ok;
            for (int r = 0; r < R; ++r)
                if (ratios[r]) ok.push_back(*ratios[r]);
            if (ok.empty()) {
                rep.failures.push_back("lyapunov n=" + std::to_string(n) + ": no replicates");
                continue;
            }
            const double med = stats::median(ok);
            rep.lyapunov.push_back({n, h, med});
            log_n.push_back(std::log(static_cast<double>(n)));
            log_ratio.push_back(std::log(med));
        }
        if (log_n.size() >= 2) rep.lyapunov_slope = stats::ols_slope(log_n, log_ratio);
    }

    return rep;
}

// PASS/FAIL digest of a report, one entry per acceptance-style check.
inline std::vector<CheckResult> evaluate_checks(const ExperimentReport& rep) {
    std::vector<CheckResult> out;
    for (const auto& row : rep.normality) {
        CheckResult c;
        c.name = "normality n=" + std::to_string(row.n);
        c.pass = row.p_value >= 0.01 && std::abs(row.var_ratio - 1.0) <= 0.2;
        c.detail = "p=" + detail::fmt(row.p_value) +
                   " var_ratio=" + detail::fmt(row.var_ratio);
        out.push_back(c);
    }
    if (!rep.bias.empty()) {
        CheckResult c;
        c.name = "bias slope";
        c.pass = std::isfinite(rep.bias_slope) && std::abs(rep.bias_slope - 2.0) <= 0.3;
        c.detail = "slope=" + detail::fmt(rep.bias_slope);
        out.push_back(c);
        for (const auto& row : rep.bias) {
            if (row.h < 0.1 || row.h > 0.3) continue;
            CheckResult p;
            p.name = "bias pointwise h=" + detail::fmt(row.h);
            p.pass = std::abs(row.empirical_bias - row.predicted_bias) <=
                     0.25 * std::abs(row.predicted_bias);
            p.detail = "empirical=" + detail::fmt(row.empirical_bias) +
                       " predicted=" + detail::fmt(row.predicted_bias);
            out.push_back(p);
        }
    }
    if (!rep.rate.empty()) {
        for (const std::string target : {"f", "g", "r"}) {
            std::vector<double> idx, ratios;
            double worst = 0.0;
            for (const auto& row : rep.rate) {
                if (row.target != target) continue;
                worst = std::max(worst, row.ratio);
                idx.push_back(std::log2(static_cast<double>(row.n)));
                ratios.push_back(row.ratio);
            }
            if (ratios.empty()) continue;
            CheckResult c;
            c.name = "rate bounded " + target;
            c.pass = worst <= 10.0;
            c.detail = "max_ratio=" + detail::fmt(worst);
            out.push_back(c);
            if (ratios.size() >= 2) {
                const double slope = stats::ols_slope(idx, ratios);
                CheckResult tcheck;
                tcheck.name = "rate trend " + target;
                tcheck.pass = slope <= 0.05;
                tcheck.detail = "slope=" + detail::fmt(slope);
                out.push_back(tcheck);
            }
        }
    }
    if (!rep.bernstein.empty()) {
        // one check per (n, k) block
        std::vector<std::pair<std::size_t, int>> seen;
        for (const auto& row : rep.bernstein) {
            const std::pair<std::size_t, int> key{row.n, row.k};
            if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
            seen.push_back(key);
            bool all = true;
            double worst = 0.0;
            for (const auto& r2 : rep.bernstein)
                if (r2.n == row.n && r2.k == row.k) {
                    all = all && r2.pass;
                    worst = std::max(worst, r2.empirical - r2.bound);
                }
            CheckResult c;
            c.name = "bernstein n=" + std::to_string(row.n) + " k=" + std::to_string(row.k);
            c.pass = all;
            c.detail = "max_excess=" + detail::fmt(worst);
            out.push_back(c);
        }
    }
    for (const auto& row : rep.markov) {
        CheckResult c;
        c.name = "markov " + row.dist;
        c.pass = row.pass;
        c.detail = "empirical=" + detail::fmt(row.empirical) +
                   " bound=" + detail::fmt(row.bound);
        out.push_back(c);
    }
    if (!rep.lyapunov.empty()) {
        CheckResult c;
        c.name = "lyapunov trend";
        c.pass = std::isfinite(rep.lyapunov_slope) && rep.lyapunov_slope <= -0.1;
        c.detail = "slope=" + detail::fmt(rep.lyapunov_slope);
        out.push_back(c);
    }
    return out;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw QError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw QError("write failed: " + path.string());
}

}  // namespace detail

// One CSV per populated table plus a JSON summary; names carry the config hash.
inline std::vector<std::filesystem::path> write_report(const ExperimentReport& rep,
                                                       const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    const std::string tag = rep.hash;
    using detail::fmt;

    if (!rep.normality.empty()) {
        std::string csv =
            "n,h,x,script_E,script_V,empirical_bias,empirical_sd,var_ratio,ks_stat,p_value\n";
        for (const auto& r : rep.normality)
            csv += std::to_string(r.n) + "," + fmt(r.h) + "," + fmt(r.x) + "," +
                   fmt(r.script_E) + "," + fmt(r.script_V) + "," + fmt(r.empirical_bias) +
                   "," + fmt(r.empirical_sd) + "," + fmt(r.var_ratio) + "," +
                   fmt(r.ks_stat) + "," + fmt(r.p_value) + "\n";
        const fs::path p = out_dir / ("normality_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);

        std::string stats_csv = "n,rep,r_hat,standardized\n";
        for (std::size_t i = 0; i < rep.normality.size(); ++i)
            for (const auto& s : rep.normality_reps[i])
                stats_csv += std::to_string(rep.normality[i].n) + "," +
                             std::to_string(s.rep) + "," + fmt(s.r_hat) + "," +
                             fmt(s.standardized) + "\n";
        const fs::path ps = out_dir / ("normality_stats_" + tag + ".csv");
        detail::write_text(ps, stats_csv);
        written.push_back(ps);
    }
    if (!rep.bias.empty()) {
        std::string csv = "n,h,empirical_bias,predicted_bias,ratio\n";
        for (const auto& r : rep.bias)
            csv += std::to_string(r.n) + "," + fmt(r.h) + "," + fmt(r.empirical_bias) +
                   "," + fmt(r.predicted_bias) + "," + fmt(r.ratio) + "\n";
        const fs::path p = out_dir / ("bias_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);
    }
    if (!rep.rate.empty()) {
        std::string csv = "n,h,target,sup_error,rate,ratio\n";
        for (const auto& r : rep.rate)
            csv += std::to_string(r.n) + "," + fmt(r.h) + "," + r.target + "," +
                   fmt(r.sup_error) + "," + fmt(r.rate) + "," + fmt(r.ratio) + "\n";
        const fs::path p = out_dir / ("rate_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);
    }
    if (!rep.bernstein.empty()) {
        std::string csv = "n,k,t,empirical,bound,se,pass\n";
        for (const auto& r : rep.bernstein)
            csv += std::to_string(r.n) + "," + std::to_string(r.k) + "," + fmt(r.t) + "," +
                   fmt(r.empirical) + "," + fmt(r.bound) + "," + fmt(r.se) + "," +
                   (r.pass ? "1" : "0") + "\n";
        const fs::path p = out_dir / ("bernstein_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);
    }
    if (!rep.markov.empty()) {
        std::string csv = "dist,a,empirical,bound,pass\n";
        for (const auto& r : rep.markov)
            csv += r.dist + "," + fmt(r.a) + "," + fmt(r.empirical) + "," + fmt(r.bound) +
                   "," + (r.pass ? "1" : "0") + "\n";
        const fs::path p = out_dir / ("markov_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);
    }
    if (!rep.lyapunov.empty()) {
        std::string csv = "n,h,ratio\n";
        for (const auto& r : rep.lyapunov)
            csv += std::to_string(r.n) + "," + fmt(r.h) + "," + fmt(r.ratio) + "\n";
        const fs::path p = out_dir / ("lyapunov_" + tag + ".csv");
        detail::write_text(p, csv);
        written.push_back(p);
    }

    nlohmann::ordered_json summary;
    summary["config_hash"] = rep.hash;
    summary["config"] = rep.config.to_json();
    auto checks = nlohmann::ordered_json::array();
    for (const CheckResult& c : evaluate_checks(rep))
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    summary["checks"] = checks;
    if (!rep.normality.empty()) {
        auto rows = nlohmann::ordered_json::array();
        for (const auto& r : rep.normality)
            rows.push_back({{"n", r.n},
                            {"p_value", r.p_value},
                            {"var_ratio", r.var_ratio},
                            {"empirical_bias", r.empirical_bias}});
        summary["normality"] = rows;
    }
    if (!rep.bias.empty()) summary["bias_slope"] = rep.bias_slope;
    if (!rep.lyapunov.empty()) summary["lyapunov_slope"] = rep.lyapunov_slope;
    summary["failed_replicates"] = rep.failed_replicates;
    summary["failures"] = rep.failures;
    const std::filesystem::path sp = out_dir / ("summary_" + tag + ".json");
    detail::write_text(sp, summary.dump(2) + "\n");
    written.push_back(sp);
    return written;
}

}  // namespace qsmooth
