#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/optimizer.hpp"
#include "sfcausal/report.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace sfcausal {

struct DidSpec {
    std::string output_col = "y";
    std::string group_col = "d";
    std::string period_col = "t";
    // Time-invariant covariates entering the frontier linearly.
    std::vector<std::string> covariate_cols;
};

// y = b0 + D b1 + T b2 + DT b3 + x'beta_x + v - u0 exp(D g1 + T g2 + DT g3), u0 ~ N+(0, sigma_u^2).
struct DidSfaParams {
    double beta0 = 0.0, beta1 = 0.0, beta2 = 0.0, beta3 = 0.0;
    double gamma1 = 0.0, gamma2 = 0.0, gamma3 = 0.0;
    double sigma_u = 1.0;
    double sigma_v = 1.0;
    Vector beta_x;

    double cell_scale(int d, int t) const { return sigma_u * std::exp(d * gamma1 + t * gamma2 + d * t * gamma3); }
    double indirect() const;
};

struct CellStats {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
};

// Indexed [d][t].
struct CellMoments {
    std::array<std::array<CellStats, 2>, 2> cell{};
};

// Rows per cell; InputError for non-binary columns, IdentificationError naming an empty cell.
std::array<std::array<std::vector<std::size_t>, 2>, 2> did_cells(const Dataset& data, const DidSpec& spec);

CellMoments cell_moments(const Dataset& data, const DidSpec& spec);

// Population moments implied by the parameters (covariates ignored).
CellMoments analytic_cell_moments(const DidSfaParams& p, std::size_t n_per_cell = 1);

struct NaiveDid {
    double estimate = 0.0;          // (Y11 - Y10) - (Y01 - Y00)
    double ols_interaction = 0.0;   // saturated-regression coefficient on DT
    double ols_se = 0.0;
    std::array<std::array<double, 2>, 2> cell_means{};
};

NaiveDid naive_did(const Dataset& data, const DidSpec& spec = {});

struct DidIdentification {
    DidSfaParams params;
    Flags flags;
};

DidIdentification identify_did_moments(const CellMoments& cm);

double did_sfa_loglik(const Dataset& data, const DidSpec& spec, const DidSfaParams& p);

enum class GammaRestriction { none, gamma3_only, all_gammas };

struct DidFit {
    DidSfaParams params;
    DidSfaParams start;
    Decomposition decomposition;
    double loglik = 0.0;
    EstimateTable table;
    Flags flags;
    bool converged = true;
    std::array<std::array<std::size_t, 2>, 2> cell_n{};
};

DidFit fit_did_sfa(const Dataset& data, const DidSpec& spec = {}, GammaRestriction restriction = GammaRestriction::none,
                   const OptimOptions& options = {});

struct LrTest {
    double statistic = 0.0;
    int df = 0;
    double pvalue = 1.0;
    double loglik_unrestricted = 0.0;
    double loglik_restricted = 0.0;
};

// restriction must be gamma3_only (df 1) or all_gammas (df 3).
LrTest lr_test_indirect(const Dataset& data, const DidSpec& spec, GammaRestriction restriction,
                        const OptimOptions& options = {});

double chi_square_upper_tail(double x, double df);

struct TwoStepReport {
    double did_on_scores = 0.0;
    double did_on_scores_se = 0.0;
    // Population DiD of E[exp(-u)] when the truth is supplied, else NaN.
    double oracle = 0.0;
    double bias = 0.0;
    double ratio = 0.0;
    double outcome_did_t = 0.0;
    Flags flags;
};

TwoStepReport two_step_benchmark(const Dataset& data, const DidSpec& spec = {},
                                 const std::optional<DidSfaParams>& truth = std::nullopt);

// E[exp(-s |Z|)] for Z ~ N(0, 1).
double mean_half_normal_efficiency(double scale);
// DiD over cells of E[exp(-u)].
double did_efficiency_oracle(const DidSfaParams& p);

}  // namespace sfcausal
