#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/did_sfa.hpp"
#include "sfcausal/optimizer.hpp"
#include "sfcausal/rdd.hpp"
#include "sfcausal/report.hpp"
#include "sfcausal/simulate.hpp"
#include "sfcausal/staggered.hpp"

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sfcausal {

// Options shared by the named estimators. Empty column lists fall back to the role schema:
// inputs are every x<k> column; for the IV estimators the last x column is endogenous and
// the instruments are every w<k> column.
struct EstimatorOptions {
    std::vector<std::string> inputs;
    std::vector<std::string> endogenous;
    std::vector<std::string> instruments;
    double cutoff = 0.0;
    double bandwidth = std::numeric_limits<double>::infinity();
    bool auto_bandwidth = false;
    ControlGroup control = ControlGroup::never_treated;
    GammaRestriction restriction = GammaRestriction::none;
    OptimOptions optim;
};

struct FitOutput {
    std::string estimator;
    EstimateTable table;
    std::optional<Decomposition> decomposition;
    Flags flags;
    bool converged = true;
    double loglik = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_in = 0;
    std::size_t n_used = 0;
};

struct Estimator {
    std::string name;
    std::string description;
    std::vector<DesignKind> designs;  // design kinds whose data the estimator accepts
    std::function<FitOutput(const Dataset&, const EstimatorOptions&)> fit;
};

const std::vector<Estimator>& estimator_registry();
std::vector<std::string> estimator_names();
// Throws InputError listing the valid names.
const Estimator& find_estimator(const std::string& name);

FitOutput run_estimator(const std::string& name, const Dataset& data, const EstimatorOptions& options = {});

// Population value of an estimator output under a design; NaN when none is defined.
double design_truth_for(const SimDesign& design, const std::string& name, const EstimatorOptions& options = {});

struct ParamSummary {
    std::string name;
    double truth = std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    double mc_sd = std::numeric_limits<double>::quiet_NaN();
    double mc_se = std::numeric_limits<double>::quiet_NaN();
    double bias = std::numeric_limits<double>::quiet_NaN();
    std::size_t reps_used = 0;
};

struct StudySummary {
    std::string estimator;
    SimDesign design;
    std::size_t reps = 0;
    std::size_t failures = 0;
    std::vector<std::string> failure_messages;  // first few, "rep <i>: <message>"
    std::vector<ParamSummary> params;
    std::vector<FitOutput> fits;                 // per replicate, failures left default

    const ParamSummary& param(const std::string& name) const;
};

// Replicate r fits `estimator` on generate(design with seed replicate_seed(design.seed, r)).
// A replicate fails when the fit throws or does not converge; failures are excluded from the
// summaries, and more than 20% failures throws OptimizationError.
StudySummary replicate_study(const SimDesign& design, std::size_t reps, const std::string& estimator,
                             const EstimatorOptions& options = {}, unsigned workers = 1);

void write_study_csv(std::ostream& out, const StudySummary& summary);

}  // namespace sfcausal
