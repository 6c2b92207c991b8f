#include "sfcausal/study.hpp"

#include "sfcausal/endogeneity.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/parallel.hpp"
#include "sfcausal/random_assignment.hpp"
#include "sfcausal/rng.hpp"
#include "sfcausal/sfa.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <regex>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> inputs_of(const Dataset& data, const EstimatorOptions& o) {
    return o.inputs.empty() ? data.role_columns("x") : o.inputs;
}

EndoSpec endo_spec_of(const Dataset& data, const EstimatorOptions& o) {
    EndoSpec s;
    auto xs = inputs_of(data, o);
    if (o.endogenous.empty()) {
        if (xs.empty()) throw InputError("no x columns to treat as endogenous");
        s.endogenous_cols = {xs.back()};
        xs.pop_back();
    } else {
        s.endogenous_cols = o.endogenous;
        std::erase_if(xs, [&](const std::string& c) {
            return std::find(o.endogenous.begin(), o.endogenous.end(), c) != o.endogenous.end();
        });
    }
    s.exogenous_cols = xs;
    s.instrument_cols = o.instruments.empty() ? data.role_columns("w") : o.instruments;
    return s;
}

RddSpec rdd_spec_of(const Dataset& data, const EstimatorOptions& o) {
    RddSpec s;
    s.cutoff = o.cutoff;
    s.bandwidth = o.bandwidth;
    s.auto_bandwidth = o.auto_bandwidth;
    s.covariate_cols = o.inputs.empty() ? data.role_columns("x") : o.inputs;
    return s;
}

FitOutput from_sfa(const SfaFit& fit, std::size_t n_in) {
    FitOutput out;
    const Vector se = fit.se ? *fit.se : Vector::Constant(fit.beta.size() + 2, kNaN);
    out.table.add("beta0", fit.beta[0], se[0]);
    for (std::size_t j = 0; j < fit.spec.input_cols.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(j + 1);
        out.table.add("beta_" + fit.spec.input_cols[j], fit.beta[i], se[i]);
    }
    const auto k = fit.beta.size();
    out.table.add("sigma_v", fit.params.sigma_v, se[k]);
    out.table.add("sigma_u", fit.params.sigma_u, se[k + 1]);
    out.flags = fit.flags;
    out.converged = fit.converged;
    out.loglik = fit.loglik;
    out.n_in = n_in;
    out.n_used = fit.n;
    return out;
}

FitOutput sfa_estimator(const Dataset& data, const EstimatorOptions& o, bool mle) {
    const FrontierSpec spec{"y", inputs_of(data, o), true, false};
    return from_sfa(mle ? fit_sfa_mle(data, spec, o.optim) : fit_sfa_cols(data, spec), data.rows());
}

FitOutput two_group_estimator(const Dataset& data, const EstimatorOptions& o, TwoGroupMethod method) {
    TwoGroupSpec spec;
    spec.input_cols = inputs_of(data, o);
    const auto fit = fit_two_group(data, spec, method, o.optim);
    FitOutput out;
    out.table = fit.table;
    out.decomposition = fit.decomposition;
    out.flags = fit.flags;
    out.converged = fit.converged;
    out.loglik = fit.loglik;
    out.n_in = data.rows();
    out.n_used = fit.n0 + fit.n1;
    return out;
}

DidSpec did_spec_of(const Dataset& data, const EstimatorOptions& o) {
    DidSpec s;
    s.covariate_cols = inputs_of(data, o);
    return s;
}

FitOutput did_sfa_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto fit = fit_did_sfa(data, did_spec_of(data, o), o.restriction, o.optim);
    FitOutput out;
    out.table = fit.table;
    out.decomposition = fit.decomposition;
    out.flags = fit.flags;
    out.converged = fit.converged;
    out.loglik = fit.loglik;
    out.n_in = data.rows();
    for (const auto& row : fit.cell_n) {
        for (const auto n : row) out.n_used += n;
    }
    return out;
}

FitOutput did_lr_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto r = o.restriction == GammaRestriction::none ? GammaRestriction::all_gammas : o.restriction;
    const auto lr = lr_test_indirect(data, did_spec_of(data, o), r, o.optim);
    FitOutput out;
    out.table.add("lr_statistic", lr.statistic);
    out.table.add("lr_df", lr.df);
    out.table.add("lr_pvalue", lr.pvalue);
    out.table.add("reject_5pct", lr.pvalue < 0.05 ? 1.0 : 0.0);
    out.table.add("loglik_restricted", lr.loglik_restricted);
    out.loglik = lr.loglik_unrestricted;
    out.n_in = out.n_used = data.rows();
    return out;
}

FitOutput naive_did_estimator(const Dataset& data, const EstimatorOptions&) {
    const auto r = naive_did(data, DidSpec{});
    FitOutput out;
    out.table.add("naive_did", r.estimate, r.ols_se);
    for (int d = 0; d < 2; ++d) {
        for (int t = 0; t < 2; ++t) {
            out.table.add("mean_d" + std::to_string(d) + "_t" + std::to_string(t), r.cell_means[d][t]);
        }
    }
    out.n_in = out.n_used = data.rows();
    return out;
}

FitOutput two_step_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto r = two_step_benchmark(data, did_spec_of(data, o));
    FitOutput out;
    out.table.add("did_on_scores", r.did_on_scores, r.did_on_scores_se);
    out.table.add("outcome_did_t", r.outcome_did_t);
    out.flags = r.flags;
    out.n_in = out.n_used = data.rows();
    return out;
}

std::string catt_name(double cohort, int rel) {
    return "catt_e" + format_double(cohort) + "_l" + std::to_string(rel);
}

FitOutput catt_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto panel = CohortPanel::from_dataset(data);
    const auto r = catt_iw(panel, o.control);
    FitOutput out;
    for (const auto& e : r.estimates) out.table.add(catt_name(e.cohort, e.rel), e.estimate);
    if (!r.skipped.empty()) out.flags.set("skipped_cells");
    out.n_in = out.n_used = data.rows();
    return out;
}

FitOutput srd_ll_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto r = srd_local_linear(data, rdd_spec_of(data, o));
    FitOutput out;
    out.table.add("jump", r.jump, r.se);
    out.table.add("bandwidth", r.bandwidth);
    out.n_in = data.rows();
    out.n_used = r.n;
    return out;
}

FitOutput srd_sfa_estimator(const Dataset& data, const EstimatorOptions& o, SrdMethod method) {
    const auto fit = fit_srd_sfa(data, rdd_spec_of(data, o), method, std::nullopt, o.optim);
    FitOutput out;
    out.table = fit.table;
    out.table.add("bandwidth", fit.bandwidth);
    out.decomposition = fit.decomposition;
    out.flags = fit.flags;
    out.converged = fit.converged;
    if (method == SrdMethod::mle) out.loglik = fit.objective;
    out.n_in = data.rows();
    out.n_used = fit.n;
    return out;
}

FitOutput frd_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto r = frd_wald(data, rdd_spec_of(data, o));
    FitOutput out;
    out.table.add("wald", r.wald);
    out.table.add("outcome_jump", r.outcome_jump);
    out.table.add("treatment_jump", r.treatment_jump);
    out.table.add("bandwidth", r.bandwidth);
    out.n_in = data.rows();
    out.n_used = r.n;
    return out;
}

FitOutput c2sls_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto fit = c2sls_fit(data, endo_spec_of(data, o));
    auto out = from_sfa(fit.sfa, data.rows());
    for (std::size_t j = 0; j < fit.first_stage_partial_r2.size(); ++j) {
        out.table.add("partial_r2_" + fit.sfa.spec.input_cols[fit.sfa.spec.input_cols.size() -
                                                              fit.first_stage_partial_r2.size() + j],
                      fit.first_stage_partial_r2[j]);
    }
    return out;
}

FitOutput aps_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto fit = fit_aps_mle(data, endo_spec_of(data, o), o.optim);
    FitOutput out;
    out.table = fit.table;
    out.flags = fit.flags;
    out.converged = fit.converged;
    out.loglik = fit.loglik;
    out.n_in = out.n_used = data.rows();
    return out;
}

FitOutput gmm_estimator(const Dataset& data, const EstimatorOptions& o) {
    const auto fit = gmm_fit(data, endo_spec_of(data, o), o.optim);
    auto out = from_sfa(fit.sfa, data.rows());
    out.table.add("j_statistic", fit.objective);
    out.table.add("overid_df", fit.overid_df);
    return out;
}

std::vector<Estimator> build_registry() {
    using K = DesignKind;
    return {
        {"cols", "corrected OLS frontier on the x columns", {K::cross_section_random, K::endogenous},
         [](const Dataset& d, const EstimatorOptions& o) { return sfa_estimator(d, o, false); }},
        {"sfa-mle", "normal/half-normal frontier MLE on the x columns", {K::cross_section_random, K::endogenous},
         [](const Dataset& d, const EstimatorOptions& o) { return sfa_estimator(d, o, true); }},
        {"naive-mean", "treated minus control mean of y", {K::two_group},
         [](const Dataset& d, const EstimatorOptions&) {
             FitOutput out;
             out.table.add("naive_mean_difference", naive_mean_difference(d));
             out.n_in = out.n_used = d.rows();
             return out;
         }},
        {"two-group", "two-group frontier MLE with a scaled inefficiency", {K::two_group},
         [](const Dataset& d, const EstimatorOptions& o) { return two_group_estimator(d, o, TwoGroupMethod::mle); }},
        {"two-group-cols", "two-group corrected OLS", {K::two_group},
         [](const Dataset& d, const EstimatorOptions& o) { return two_group_estimator(d, o, TwoGroupMethod::cols); }},
        {"naive-did", "2x2 difference in cell means", {K::did_2x2}, naive_did_estimator},
        {"did-sfa", "DiD frontier MLE with cell-specific inefficiency scaling", {K::did_2x2}, did_sfa_estimator},
        {"did-lr", "likelihood-ratio test for the indirect channel", {K::did_2x2}, did_lr_estimator},
        {"two-step", "DiD on first-stage efficiency scores", {K::did_2x2}, two_step_estimator},
        {"catt-iw", "interaction-weighted cohort effects", {K::staggered}, catt_estimator},
        {"srd-ll", "sharp RDD local linear jump", {K::rdd_sharp}, srd_ll_estimator},
        {"srd-sfa", "sharp RDD frontier MLE", {K::rdd_sharp},
         [](const Dataset& d, const EstimatorOptions& o) { return srd_sfa_estimator(d, o, SrdMethod::mle); }},
        {"srd-sfa-nls", "sharp RDD frontier by nonlinear least squares", {K::rdd_sharp},
         [](const Dataset& d, const EstimatorOptions& o) { return srd_sfa_estimator(d, o, SrdMethod::nls); }},
        {"frd-wald", "fuzzy RDD Wald ratio", {K::rdd_fuzzy, K::rdd_sharp}, frd_estimator},
        {"c2sls", "corrected two-stage least squares", {K::endogenous}, c2sls_estimator},
        {"aps-mle", "joint frontier and first-stage MLE", {K::endogenous}, aps_estimator},
        {"gmm", "two-step GMM on the frontier score moments", {K::endogenous}, gmm_estimator},
    };
}

}  // namespace

const std::vector<Estimator>& estimator_registry() {
    static const std::vector<Estimator> registry = build_registry();
    return registry;
}

std::vector<std::string> estimator_names() {
    std::vector<std::string> out;
    for (const auto& e : estimator_registry()) out.push_back(e.name);
    return out;
}

const Estimator& find_estimator(const std::string& name) {
    for (const auto& e : estimator_registry()) {
        if (e.name == name) return e;
    }
    std::string msg = "unknown estimator '" + name + "'; valid estimators:";
    for (const auto& n : estimator_names()) msg += " " + n;
    throw InputError(msg);
}

FitOutput run_estimator(const std::string& name, const Dataset& data, const EstimatorOptions& options) {
    auto out = find_estimator(name).fit(data, options);
    out.estimator = name;
    if (!out.converged) out.flags.set("not_converged");
    return out;
}

double design_truth_for(const SimDesign& design, const std::string& name, const EstimatorOptions& options) {
    const auto truth = design_truth(design);
    if (const auto it = truth.find(name); it != truth.end()) return it->second;
    if (design.kind == DesignKind::staggered) {
        static const std::regex pattern(R"(catt_e([0-9.]+)_l(-?[0-9]+))");
        std::smatch m;
        if (std::regex_match(name, m, pattern)) {
            const double cohort = std::stod(m[1].str());
            const int rel = std::stoi(m[2].str());
            double control = kNeverTreated;
            if (options.control == ControlGroup::last_treated) {
                control = design.param("T");
                if (cohort >= control) return kNaN;
            }
            const auto c = staggered_cell_truth(design, cohort, rel, control);
            return c.tech - c.indirect;
        }
    }
    return kNaN;
}

const ParamSummary& StudySummary::param(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) return p;
    }
    throw InputError("study has no parameter '" + name + "'");
}

StudySummary replicate_study(const SimDesign& design, std::size_t reps, const std::string& estimator,
                             const EstimatorOptions& options, unsigned workers) {
    validate_design(design);
    const auto& est = find_estimator(estimator);
    if (std::find(est.designs.begin(), est.designs.end(), design.kind) == est.designs.end()) {
        throw InputError("estimator '" + estimator + "' does not apply to design '" + std::string(to_string(design.kind)) + "'");
    }
    if (reps == 0) throw InputError("reps must be positive");

    StudySummary s;
    s.estimator = estimator;
    s.design = design;
    s.reps = reps;
    s.fits.resize(reps);
    std::vector<std::string> errors(reps);
    std::vector<char> ok(reps, 0);
    parallel_for_each(reps, workers, [&](std::size_t r) {
        SimDesign d = design;
        d.seed = replicate_seed(design.seed, r);
        try {
            s.fits[r] = run_estimator(estimator, generate(d), options);
            if (s.fits[r].converged) {
                ok[r] = 1;
            } else {
                errors[r] = "did not converge";
            }
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });

    for (std::size_t r = 0; r < reps; ++r) {
        if (ok[r]) continue;
        ++s.failures;
        if (s.failure_messages.size() < 5) s.failure_messages.push_back("rep " + std::to_string(r) + ": " + errors[r]);
    }
    if (static_cast<double>(s.failures) > 0.2 * static_cast<double>(reps)) {
        std::string msg = std::to_string(s.failures) + " of " + std::to_string(reps) + " replicates failed";
        if (!s.failure_messages.empty()) msg += " (" + s.failure_messages.front() + ")";
        throw OptimizationError(msg);
    }

    // Parameter order follows the first successful replicate.
    for (std::size_t r = 0; r < reps; ++r) {
        if (!ok[r]) continue;
        for (const auto& name : s.fits[r].table.names) {
            ParamSummary p;
            p.name = name;
            p.truth = design_truth_for(design, name, options);
            s.params.push_back(p);
        }
        break;
    }
    for (auto& p : s.params) {
        double sum = 0.0;
        std::vector<double> values;
        for (std::size_t r = 0; r < reps; ++r) {
            if (!ok[r] || !s.fits[r].table.has(p.name)) continue;
            const double v = s.fits[r].table.get(p.name);
            if (!std::isfinite(v)) continue;
            values.push_back(v);
            sum += v;
        }
        p.reps_used = values.size();
        if (values.empty()) {
            p.mean = kNaN;
            continue;
        }
        p.mean = sum / static_cast<double>(values.size());
        if (values.size() > 1) {
            double ss = 0.0;
            for (const double v : values) ss += (v - p.mean) * (v - p.mean);
            p.mc_sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
            p.mc_se = p.mc_sd / std::sqrt(static_cast<double>(values.size()));
        }
        p.bias = p.mean - p.truth;
    }
    return s;
}

void write_study_csv(std::ostream& out, const StudySummary& summary) {
    out << "param,truth,mean,mc_sd,mc_se,bias,reps_used\n";
    for (const auto& p : summary.params) {
        out << p.name << ',' << format_double(p.truth) << ',' << format_double(p.mean) << ',' << format_double(p.mc_sd)
            << ',' << format_double(p.mc_se) << ',' << format_double(p.bias) << ',' << p.reps_used << '\n';
    }
}

}  // namespace sfcausal
