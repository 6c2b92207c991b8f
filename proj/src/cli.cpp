#include "sfcausal/cli.hpp"

#include "sfcausal/did_sfa.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/simulate.hpp"
#include "sfcausal/staggered.hpp"
#include "sfcausal/study.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace sfcausal {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Raised for problems with the command line itself (exit 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string input;
    std::string design;
    std::uint64_t seed = 1;
    std::size_t n = 0;
    std::vector<std::string> sets;
    std::string model;
    std::string out;
    unsigned workers = 1;
    std::size_t reps = 100;

    std::vector<std::string> inputs, endogenous, instruments;
    double cutoff = 0.0;
    std::string bandwidth = "inf";
    std::string control = "never";
    std::string restriction = "none";
};

Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

fs::path resolve_output(const std::string& path) {
    fs::path p(path);
    if (p.is_relative()) {
        if (const char* dir = std::getenv("SFCAUSAL_OUTPUT_DIR"); dir && *dir) p = fs::path(dir) / p;
    }
    return p;
}

SimDesign build_design(const RunConfig& c) {
    DesignKind kind;
    try {
        kind = parse_design_kind(c.design);
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
    SimDesign d = default_design(kind, c.seed, c.n);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects name=value, got '" + s + "'");
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(s.substr(eq + 1), &used);
            if (used != s.size() - eq - 1) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
            throw UsageError("--set value for '" + s.substr(0, eq) + "' is not a number");
        }
        try {
            d.set(s.substr(0, eq), v);
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
    }
    try {
        validate_design(d);
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
    return d;
}

Json design_json(const SimDesign& d) {
    Json j;
    j["kind"] = std::string(to_string(d.kind));
    j["seed"] = d.seed;
    j["n"] = d.n;
    Json p = Json::object();
    for (const auto& [k, v] : d.params) p[k] = json_number(v);
    j["params"] = p;
    return j;
}

EstimatorOptions estimator_options(const RunConfig& c) {
    EstimatorOptions o;
    o.inputs = c.inputs;
    o.endogenous = c.endogenous;
    o.instruments = c.instruments;
    o.cutoff = c.cutoff;
    if (c.bandwidth == "auto") {
        o.auto_bandwidth = true;
    } else {
        try {
            o.bandwidth = std::stod(c.bandwidth);
        } catch (const std::exception&) {
            throw UsageError("--bandwidth expects a positive number, 'inf' or 'auto'");
        }
        if (!(o.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");
    }
    if (c.control == "never") {
        o.control = ControlGroup::never_treated;
    } else if (c.control == "last") {
        o.control = ControlGroup::last_treated;
    } else {
        throw UsageError("--control must be 'never' or 'last'");
    }
    if (c.restriction == "none") {
        o.restriction = GammaRestriction::none;
    } else if (c.restriction == "gamma3") {
        o.restriction = GammaRestriction::gamma3_only;
    } else if (c.restriction == "all") {
        o.restriction = GammaRestriction::all_gammas;
    } else {
        throw UsageError("--restriction must be 'none', 'gamma3' or 'all'");
    }
    return o;
}

Json options_json(const RunConfig& c) {
    Json j;
    j["inputs"] = c.inputs;
    j["endogenous"] = c.endogenous;
    j["instruments"] = c.instruments;
    j["cutoff"] = c.cutoff;
    j["bandwidth"] = c.bandwidth;
    j["control"] = c.control;
    j["restriction"] = c.restriction;
    return j;
}

// Resolved configuration embedded in every JSON result. Worker counts are left out because
// they never change results.
Json config_json(const std::string& subcommand, const RunConfig& c, const std::optional<SimDesign>& design) {
    Json j;
    j["subcommand"] = subcommand;
    if (!c.model.empty()) j["model"] = c.model;
    if (design) {
        j["design"] = design_json(*design);
        j["seed"] = design->seed;
    } else {
        j["input"] = c.input;
        j["seed"] = nullptr;
    }
    j["options"] = options_json(c);
    return j;
}

struct Loaded {
    Dataset data;
    std::optional<SimDesign> design;
};

Loaded load_input(const RunConfig& c) {
    if (c.input.empty() == c.design.empty()) throw UsageError("give exactly one of --in or --design");
    if (!c.input.empty()) return {Dataset::read_csv(fs::path(c.input)), std::nullopt};
    auto d = build_design(c);
    return {generate(d, c.workers), d};
}

Json fit_json(const FitOutput& f) {
    Json j;
    j["estimator"] = f.estimator;
    Json est = Json::object(), se = Json::object();
    for (std::size_t i = 0; i < f.table.size(); ++i) {
        est[f.table.names[i]] = json_number(f.table.values[i]);
        se[f.table.names[i]] = json_number(f.table.se[i]);
    }
    j["estimates"] = est;
    j["std_errors"] = se;
    j["flags"] = f.flags.names();
    if (f.decomposition) {
        j["decomposition"] = {{"total", json_number(f.decomposition->total)},
                              {"direct", json_number(f.decomposition->direct)},
                              {"indirect", json_number(f.decomposition->indirect)}};
    } else {
        j["decomposition"] = nullptr;
    }
    j["loglik"] = json_number(f.loglik);
    j["converged"] = f.converged;
    j["n"] = {{"in", f.n_in}, {"used", f.n_used}, {"excluded", f.n_in - f.n_used}};
    return j;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    const auto p = resolve_output(path);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InputError("cannot write '" + p.string() + "'");
    f << text;
}

void check_model(const std::string& model) {
    try {
        (void)find_estimator(model);
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
    if (c.design.empty()) throw UsageError("simulate needs --design");
    const auto d = build_design(c);
    std::ostringstream s;
    generate(d, c.workers).write_csv(s);
    emit(c.out, s.str(), out);
    return kExitOk;
}

int cmd_fit(const RunConfig& c, std::ostream& out) {
    check_model(c.model);
    const auto opts = estimator_options(c);
    auto loaded = load_input(c);
    const auto f = run_estimator(c.model, loaded.data, opts);
    Json j = fit_json(f);
    j["config"] = config_json("fit", c, loaded.design);
    emit(c.out, j.dump(2) + "\n", out);
    return f.converged ? kExitOk : kExitNotConverged;
}

int cmd_test(const RunConfig& c, std::ostream& out) {
    auto opts = estimator_options(c);
    if (opts.restriction == GammaRestriction::none) opts.restriction = GammaRestriction::all_gammas;
    auto loaded = load_input(c);
    DidSpec spec;
    spec.covariate_cols = opts.inputs.empty() ? loaded.data.role_columns("x") : opts.inputs;
    const auto lr = lr_test_indirect(loaded.data, spec, opts.restriction, opts.optim);
    Json j;
    j["test"] = "lr_indirect";
    j["statistic"] = lr.statistic;
    j["df"] = lr.df;
    j["pvalue"] = lr.pvalue;
    j["loglik_unrestricted"] = lr.loglik_unrestricted;
    j["loglik_restricted"] = lr.loglik_restricted;
    j["n"] = loaded.data.rows();
    j["config"] = config_json("test", c, loaded.design);
    emit(c.out, j.dump(2) + "\n", out);
    return kExitOk;
}

int cmd_audit(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.design.empty()) throw UsageError("audit needs --design");
    const auto d = build_design(c);
    const auto opts = estimator_options(c);
    std::ostringstream s;
    if (c.model.empty()) {
        if (d.kind != DesignKind::staggered) throw UsageError("audit without --model needs the staggered design");
        write_audit_csv(s, confounding_audit(d, c.reps, c.workers, opts.control));
    } else {
        check_model(c.model);
        const auto summary = replicate_study(d, c.reps, c.model, opts, c.workers);
        write_study_csv(s, summary);
        if (summary.failures > 0) {
            err << summary.failures << " of " << summary.reps << " replicates failed\n";
            for (const auto& m : summary.failure_messages) err << "  " << m << '\n';
        }
    }
    emit(c.out, s.str(), out);
    return kExitOk;
}

DesignKind infer_kind(const Dataset& data) {
    if (data.has("cohort")) return DesignKind::staggered;
    if (data.has("z")) {
        const auto& z = data.column("z");
        const auto& d = data.column("d");
        for (std::size_t i = 0; i < z.size(); ++i) {
            if ((z[i] >= 0.0) != (d[i] == 1.0)) return DesignKind::rdd_fuzzy;
        }
        return DesignKind::rdd_sharp;
    }
    if (data.has("t")) return DesignKind::did_2x2;
    if (!data.role_columns("w").empty()) return DesignKind::endogenous;
    if (data.has("d")) return DesignKind::two_group;
    return DesignKind::cross_section_random;
}

int cmd_bench(const RunConfig& c, std::ostream& out) {
    const auto opts = estimator_options(c);
    auto loaded = load_input(c);
    const auto kind = loaded.design ? loaded.design->kind : infer_kind(loaded.data);
    std::vector<std::string> models;
    switch (kind) {
        case DesignKind::cross_section_random: models = {"cols", "sfa-mle"}; break;
        case DesignKind::two_group: models = {"naive-mean", "two-group-cols", "two-group"}; break;
        case DesignKind::did_2x2: models = {"naive-did", "two-step", "did-sfa"}; break;
        case DesignKind::staggered: models = {"catt-iw"}; break;
        case DesignKind::rdd_sharp: models = {"srd-ll", "srd-sfa"}; break;
        case DesignKind::rdd_fuzzy: models = {"frd-wald"}; break;
        case DesignKind::endogenous: models = {"cols", "sfa-mle", "c2sls", "aps-mle", "gmm"}; break;
    }
    Json j;
    j["design_kind"] = std::string(to_string(kind));
    if (loaded.design) {
        Json t = Json::object();
        for (const auto& [k, v] : design_truth(*loaded.design)) t[k] = json_number(v);
        j["truth"] = t;
    }
    Json results = Json::array();
    for (const auto& m : models) {
        try {
            results.push_back(fit_json(run_estimator(m, loaded.data, opts)));
        } catch (const Error& e) {
            results.push_back({{"estimator", m}, {"error", e.what()}});
        }
    }
    j["results"] = results;
    j["config"] = config_json("bench", c, loaded.design);
    emit(c.out, j.dump(2) + "\n", out);
    return kExitOk;
}

void add_source_options(CLI::App* app, RunConfig& c) {
    app->add_option("--in", c.input, "input CSV");
    app->add_option("--design", c.design, "simulate the input from a design: " + [] {
        std::string s;
        for (const auto& n : design_kind_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }());
    app->add_option("--seed", c.seed, "design seed");
    app->add_option("--n", c.n, "design size (0 keeps the default)");
    app->add_option("--set", c.sets, "design parameter override name=value (repeatable)");
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::Range(1u, 256u));
}

void add_estimator_options(CLI::App* app, RunConfig& c) {
    app->add_option("--inputs", c.inputs, "frontier inputs (default: x columns)")->delimiter(',');
    app->add_option("--endogenous", c.endogenous, "endogenous inputs (default: last x column)")->delimiter(',');
    app->add_option("--instruments", c.instruments, "instruments (default: w columns)")->delimiter(',');
    app->add_option("--cutoff", c.cutoff, "RDD cutoff");
    app->add_option("--bandwidth", c.bandwidth, "RDD bandwidth: number, inf or auto");
    app->add_option("--control", c.control, "staggered control group: never or last");
    app->add_option("--restriction", c.restriction, "gamma restriction: none, gamma3 or all");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Causal effects in stochastic frontier models", "sfcausal"};
    app.require_subcommand(1);
    RunConfig c;

    auto* sim = app.add_subcommand("simulate", "write a simulated dataset as CSV");
    add_source_options(sim, c);
    sim->add_option("--out", c.out, "output CSV (default stdout)");

    auto* fit = app.add_subcommand("fit", "fit an estimator and write JSON");
    add_source_options(fit, c);
    add_estimator_options(fit, c);
    fit->add_option("--model", c.model, [] {
        std::string s = "estimator:";
        for (const auto& n : estimator_names()) s += " " + n;
        return s;
    }())->required();
    fit->add_option("--out", c.out, "output JSON (default stdout)");

    auto* test = app.add_subcommand("test", "likelihood-ratio test for the DiD indirect channel");
    add_source_options(test, c);
    add_estimator_options(test, c);
    test->add_option("--out", c.out, "output JSON (default stdout)");

    auto* audit = app.add_subcommand("audit", "Monte Carlo audit or replicate study, CSV output");
    add_source_options(audit, c);
    add_estimator_options(audit, c);
    audit->add_option("--model", c.model, "estimator for a replicate study (omit for the staggered audit)");
    audit->add_option("--reps", c.reps, "replicates")->check(CLI::PositiveNumber);
    audit->add_option("--out", c.out, "output CSV (default stdout)");

    auto* bench = app.add_subcommand("bench", "compare flawed benchmarks with the frontier estimators");
    add_source_options(bench, c);
    add_estimator_options(bench, c);
    bench->add_option("--out", c.out, "output JSON (default stdout)");

    std::vector<std::string> argv_store{"sfcausal"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(c, out);
        if (fit->parsed()) return cmd_fit(c, out);
        if (test->parsed()) return cmd_test(c, out);
        if (audit->parsed()) return cmd_audit(c, out, err);
        return cmd_bench(c, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const OptimizationError& e) {
        err << "not converged: " << e.what() << '\n';
        return kExitNotConverged;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace sfcausal
