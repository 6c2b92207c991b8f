#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/optimizer.hpp"
#include "sfcausal/report.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sfcausal {

struct TwoGroupSpec {
    std::string output_col = "y";
    std::string treatment_col = "d";
    std::vector<std::string> input_cols;
    // Factor non-neutral policy: separate input coefficients for the treated group.
    bool group_specific_beta = false;
};

struct TwoGroupParams {
    double alpha = 0.0;
    double tau = 0.0;
    double sigma_v = 1.0;
    double sigma_u0 = 0.0;
    double gamma1 = 0.0;
    Vector beta0;  // control-group input coefficients (also the common vector when factor neutral)
    Vector beta1;  // treated-group input coefficients; equals beta0 when factor neutral

    double sigma_u1() const { return sigma_u0 * std::exp(gamma1); }
};

enum class TwoGroupMethod { mle, cols };

struct TwoGroupFit {
    TwoGroupParams params;
    Decomposition decomposition;
    double loglik = 0.0;
    EstimateTable table;
    Flags flags;
    bool converged = true;
    std::size_t n0 = 0;
    std::size_t n1 = 0;
};

double two_group_loglik(const Dataset& data, const TwoGroupSpec& spec, const TwoGroupParams& p);

TwoGroupFit fit_two_group(const Dataset& data, const TwoGroupSpec& spec, TwoGroupMethod method,
                          const OptimOptions& options = {});

double naive_mean_difference(const Dataset& data, const std::string& output_col = "y",
                             const std::string& treatment_col = "d");

// Rows of each group; throws InputError for a non-binary treatment and
// IdentificationError naming an empty group.
struct GroupSplit {
    std::vector<std::size_t> control;
    std::vector<std::size_t> treated;
};
GroupSplit split_groups(const Dataset& data, const std::string& treatment_col);

}  // namespace sfcausal
