// Command-line front end: Jackson integration of built-in test functions,
// kernel identity checks, regression estimation over CSV data, theory
// reports, and the Monte Carlo experiment driver.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage / config validation.

#include "CLI11.hpp"
#include "json.hpp"

#include "qsmooth/sim.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

using namespace qsmooth;

const std::map<std::string, std::function<double(double)>>& expr_registry() {
    static const std::map<std::string, std::function<double(double)>> reg = {
        {"x", [](double x) { return x; }},
        {"x2", [](double x) { return x * x; }},
        {"x3", [](double x) { return x * x * x; }},
        {"sin", [](double x) { return std::sin(x); }},
        {"const1", [](double) { return 1.0; }},
    };
    return reg;
}

std::string registry_names() {
    std::string out;
    for (const auto& [name, fn] : expr_registry()) {
        (void)fn;
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

// "lo:hi:count" -> evenly spaced grid, endpoints included.
std::vector<double> parse_grid(const std::string& spec) {
    const auto c1 = spec.find(':');
    const auto c2 = c1 == std::string::npos ? std::string::npos : spec.find(':', c1 + 1);
    if (c2 == std::string::npos)
        throw InputFormatError("grid must be lo:hi:count, got " + spec);
    double lo, hi;
    long count;
    try {
        std::size_t used = 0;
        const std::string a = spec.substr(0, c1);
        const std::string b = spec.substr(c1 + 1, c2 - c1 - 1);
        const std::string c = spec.substr(c2 + 1);
        lo = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        hi = std::stod(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
        count = std::stol(c, &used);
        if (used != c.size()) throw std::invalid_argument(c);
    } catch (const std::logic_error&) {
        throw InputFormatError("grid must be lo:hi:count, got " + spec);
    }
    if (count < 1) throw InputFormatError("grid count must be >= 1");
    if (lo > hi) throw InputFormatError("grid lo must be <= hi");
    std::vector<double> g(count);
    for (long i = 0; i < count; ++i)
        g[i] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    return g;
}

QKernel build_kernel(const std::string& kind, int p, double q, double tol) {
    const SeriesPolicy policy{tol, 300000};
    if (kind == "gaussian") return make_q_gaussian(QParam(q), policy);
    if (kind == "poly") return make_q_poly(p, QParam(q), policy);
    throw ParameterError("kernel must be gaussian or poly: " + kind);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct IntegrateArgs {
    std::string expr;
    double a = 0.0, b = 1.0, q = 0.9, tol = 1e-12;
};

int run_integrate(const IntegrateArgs& args) {
    const auto& reg = expr_registry();
    const auto it = reg.find(args.expr);
    if (it == reg.end()) {
        std::cerr << "unknown function `" << args.expr << "`; available: " << registry_names()
                  << "\n";
        return 2;
    }
    try {
        const auto res = jackson_integral(it->second, args.a, args.b, QParam(args.q),
                                          SeriesPolicy{args.tol, 300000});
        std::printf("%.15g terms=%d %s\n", res.value, res.terms_used,
                    res.truncation_complete ? "complete" : "incomplete");
        return res.truncation_complete ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "integrate failed: " << e.what() << "\n";
        return 1;
    }
}

struct KernelCheckArgs {
    double q = 0.9, tol = 1e-12;
};

int run_kernel_check(const KernelCheckArgs& args) {
    bool all_pass = true;
    auto report = [&all_pass](const std::string& kernel, const std::string& what,
                              double err, double limit) {
        const bool ok = std::isfinite(err) && std::abs(err) < limit;
        all_pass = all_pass && ok;
        std::printf("%s %s %s err=%s\n", ok ? "PASS" : "FAIL", kernel.c_str(),
                    what.c_str(), fmt(err).c_str());
    };
    try {
        const SeriesPolicy policy{args.tol, 300000};
        const QParam qp(args.q);
        struct Named {
            std::string name;
            QKernel kernel;
        };
        std::vector<Named> kernels;
        kernels.push_back({"gaussian", make_q_gaussian(qp, policy)});
        for (int p = 0; p <= 3; ++p)
            kernels.push_back({"poly-p" + std::to_string(p), make_q_poly(p, qp, policy)});

        for (const auto& [name, k] : kernels) {
            report(name, "unit-mass", kernel_moment(k, 0, 1, policy) - 1.0, 1e-8);
            for (int m = 1; m <= 3; ++m)
                report(name, "odd-moment-m" + std::to_string(m),
                       kernel_moment(k, 1, m, policy), 1e-10);

            // cached even moments must be finite and positive
            const bool finite_ok = std::isfinite(k.moment2) && k.moment2 > 0.0 &&
                                   std::isfinite(k.cube_integral) && k.cube_integral > 0.0;
            all_pass = all_pass && finite_ok;
            std::printf("%s %s even-moments moment2=%s cube=%s\n",
                        finite_ok ? "PASS" : "FAIL", name.c_str(), fmt(k.moment2).c_str(),
                        fmt(k.cube_integral).c_str());

            // closed-form normalizer against brute-force integration of the
            // raw (unnormalized) profile
            const QKernel& kk = k;
            const auto raw = [&kk](double u) { return kk(u) * kk.norm_const; };
            const double brute =
                jackson_integral(raw, -k.support_halfwidth, k.support_halfwidth,
                                 k.qparam(), policy)
                    .value;
            report(name, "normalizer", brute - k.norm_const, 1e-10 * k.norm_const);
        }
    } catch (const std::exception& e) {
        std::cerr << "kernel-check failed: " << e.what() << "\n";
        return 1;
    }
    std::printf("%s\n", all_pass ? "PASS all kernel identities" : "FAIL kernel identities");
    return all_pass ? 0 : 1;
}

struct EstimateArgs {
    std::string input;
    std::string kernel = "poly";
    int p = 1;
    double q = 0.9, h = 0.0, b = 0.0, tol = 1e-12;
    std::string grid = "-1:1:21";
    std::string out;
};

int run_estimate(const EstimateArgs& args) {
    std::vector<double> grid;
    try {
        grid = parse_grid(args.grid);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        const Sample sample = load_sample_csv(args.input);
        EstimatorConfig cfg;
        cfg.kernel = build_kernel(args.kernel, args.p, args.q, args.tol);
        cfg.h = args.h > 0.0 ? args.h : default_bandwidth(sample.n());
        cfg.b = args.b > 0.0 ? args.b : default_floor(sample.n());
        cfg.grid = grid;
        const EstimateSet es = estimate_regression(sample, cfg);

        std::string csv = "x,f_hat,g_hat,r_hat,floored\n";
        for (std::size_t i = 0; i < grid.size(); ++i)
            csv += fmt(grid[i]) + "," + fmt(es.f_hat[i]) + "," + fmt(es.g_hat[i]) + "," +
                   fmt(es.r_hat[i]) + "," + (es.floored_mask[i] ? "1" : "0") + "\n";
        std::ofstream out(args.out, std::ios::binary);
        if (!out) throw QError("cannot open for writing: " + args.out);
        out << csv;
        if (!out) throw QError("write failed: " + args.out);
        std::printf("wrote %s (%zu rows, h=%s, b=%s)\n", args.out.c_str(), grid.size(),
                    fmt(cfg.h).c_str(), fmt(cfg.b).c_str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "estimate failed: " << e.what() << "\n";
        return 1;
    }
}

struct TheoryArgs {
    std::string model = "default";
    std::string kernel = "poly";
    int p = 1;
    double q = 0.9, h = 0.0, tol = 1e-12;
    std::size_t n = 4096;
    int k = 0;
    std::string grid = "-1:1:21";
    std::string out;
};

int run_theory(const TheoryArgs& args) {
    std::vector<double> grid;
    try {
        grid = parse_grid(args.grid);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        TheoryRequest req;
        req.model = make_model(args.model);
        req.kernel = build_kernel(args.kernel, args.p, args.q, args.tol);
        req.grid = grid;
        req.n = args.n;
        req.h = args.h;
        req.k = args.k;
        const TheoryReport rep = make_theory_report(req);
        const std::string text = to_json(rep).dump(2) + "\n";
        if (args.out.empty()) {
            std::cout << text;
        } else {
            std::ofstream out(args.out, std::ios::binary);
            if (!out) throw QError("cannot open for writing: " + args.out);
            out << text;
            if (!out) throw QError("write failed: " + args.out);
            std::printf("wrote %s\n", args.out.c_str());
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "theory failed: " << e.what() << "\n";
        return 1;
    }
}

struct ExperimentArgs {
    std::string config;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_experiment_cmd(const ExperimentArgs& args) {
    ExperimentConfig cfg;
    try {
        std::ifstream in(args.config);
        if (!in) throw InputFormatError("cannot open config: " + args.config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InputFormatError(args.config + ": " + e.what());
        }
        cfg = ExperimentConfig::from_json(j);
        if (args.seed_set) cfg.seed = args.seed;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        const ExperimentReport rep = run_experiment(cfg);
        const auto written = write_report(rep, args.out_dir);
        for (const CheckResult& c : evaluate_checks(rep))
            std::printf("%s %s (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                        c.detail.c_str());
        if (rep.failed_replicates > 0)
            std::printf("failed replicates: %d\n", rep.failed_replicates);
        for (const auto& p : written) std::printf("wrote %s\n", p.string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "experiment failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"q-deformed kernel smoothing toolkit"};
    // --h is a real option (bandwidth), so help is --help only
    app.set_help_flag("--help", "print help and exit");
    app.require_subcommand(1);
    auto sub = [&app](const std::string& name, const std::string& desc) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->set_help_flag("--help", "print help and exit");
        return s;
    };

    IntegrateArgs ia;
    CLI::App* integrate = sub("integrate", "Jackson q-integral of a built-in function");
    integrate->add_option("expr", ia.expr, "function name: " + registry_names())
        ->required();
    integrate->add_option("a", ia.a, "lower endpoint")->required();
    integrate->add_option("b", ia.b, "upper endpoint")->required();
    integrate->add_option("q", ia.q, "deformation parameter in (0,1)")
        ->capture_default_str();
    integrate->add_option("--tol", ia.tol, "series tail tolerance")->capture_default_str();

    KernelCheckArgs ka;
    CLI::App* kcheck = sub("kernel-check",
                           "verify kernel identities (unit mass, odd moments, normalizer)");
    kcheck->add_option("--q", ka.q, "deformation parameter in (0,1)")->capture_default_str();
    kcheck->add_option("--tol", ka.tol, "series tail tolerance")->capture_default_str();

    EstimateArgs ea;
    CLI::App* estimate = sub("estimate", "kernel regression estimates over a CSV sample");
    estimate->add_option("input", ea.input, "CSV file with header x,y")->required();
    estimate->add_option("--kernel", ea.kernel, "kernel family: gaussian or poly")
        ->capture_default_str();
    estimate->add_option("--p", ea.p, "polynomial kernel degree")->capture_default_str();
    estimate->add_option("--q", ea.q, "deformation parameter in (0,1)")
        ->capture_default_str();
    estimate->add_option("--h", ea.h, "bandwidth; 0 means n^-1/5")->capture_default_str();
    estimate->add_option("--b", ea.b, "density floor; 0 means max(1e-3, n^-1/10)")
        ->capture_default_str();
    estimate->add_option("--grid", ea.grid, "evaluation grid lo:hi:count")
        ->capture_default_str();
    estimate->add_option("--tol", ea.tol, "series tail tolerance")->capture_default_str();
    estimate->add_option("--out", ea.out, "output CSV path")->required();

    TheoryArgs ta;
    CLI::App* theory = sub("theory",
                           "asymptotic predictions (bias, CLT constants, rates, tail bounds)");
    theory->add_option("--model", ta.model, "target model: default or constant")
        ->capture_default_str();
    theory->add_option("--kernel", ta.kernel, "kernel family: gaussian or poly")
        ->capture_default_str();
    theory->add_option("--p", ta.p, "polynomial kernel degree")->capture_default_str();
    theory->add_option("--q", ta.q, "deformation parameter in (0,1)")
        ->capture_default_str();
    theory->add_option("--h", ta.h, "bandwidth; 0 means n^-1/5")->capture_default_str();
    theory->add_option("--n", ta.n, "sample size the predictions refer to")
        ->capture_default_str();
    theory->add_option("--k", ta.k, "moment order for the rate terms")
        ->capture_default_str();
    theory->add_option("--grid", ta.grid, "evaluation grid lo:hi:count")
        ->capture_default_str();
    theory->add_option("--tol", ta.tol, "series tail tolerance")->capture_default_str();
    theory->add_option("--out", ta.out, "output JSON path; stdout when omitted");

    ExperimentArgs xa;
    CLI::App* experiment = sub("experiment", "run a Monte Carlo experiment from a JSON config");
    experiment->add_option("config", xa.config, "experiment config JSON")->required();
    experiment->add_option("out_dir", xa.out_dir, "report output directory")
        ->capture_default_str();
    CLI::Option* seed_opt =
        experiment->add_option("--seed", xa.seed, "override the config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    xa.seed_set = seed_opt->count() > 0;

    if (*integrate) return run_integrate(ia);
    if (*kcheck) return run_kernel_check(ka);
    if (*estimate) return run_estimate(ea);
    if (*theory) return run_theory(ta);
    if (*experiment) return run_experiment_cmd(xa);
    return 2;
}
