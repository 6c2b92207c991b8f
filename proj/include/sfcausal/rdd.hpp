#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/distributions.hpp"
#include "sfcausal/optimizer.hpp"
#include "sfcausal/report.hpp"

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sfcausal {

struct RddSpec {
    double cutoff = 0.0;
    // Rows with |z - cutoff| <= bandwidth are used; infinity keeps every row.
    double bandwidth = std::numeric_limits<double>::infinity();
    // Choose the bandwidth with bandwidth_select before fitting.
    bool auto_bandwidth = false;
    std::string running_col = "z";
    std::string outcome_col = "y";
    std::string treatment_col = "d";
    std::vector<std::string> covariate_cols;
};

struct SideFit {
    double intercept = 0.0;  // at z = cutoff
    double slope = 0.0;
    std::size_t n = 0;
};

struct SrdResult {
    double jump = 0.0;
    double se = 0.0;
    SideFit left;
    SideFit right;
    double bandwidth = 0.0;
    std::size_t n = 0;
};

// Local linear regression y = a + D b1 + (z-c) b2 + D (z-c) b3 [+ covariates] on the window.
// If the treatment column exists it must equal 1{z >= c} on the window.
SrdResult srd_local_linear(const Dataset& data, const RddSpec& spec);

struct FrdResult {
    double wald = 0.0;
    double outcome_jump = 0.0;
    double treatment_jump = 0.0;
    double bandwidth = 0.0;
    std::size_t n = 0;
};

// Throws IdentificationError (carrying both jumps) when |treatment jump| < 0.05.
FrdResult frd_wald(const Dataset& data, const RddSpec& spec);

// g(S, rho) = exp(rho0 + D rho1 + (z-c) rho2 + D (z-c) rho3).
struct ScalingSpec {
    double rho0 = 0.0, rho1 = 0.0, rho2 = 0.0, rho3 = 0.0;

    double g(double d, double zc) const { return std::exp(rho0 + d * rho1 + zc * rho2 + d * zc * rho3); }
};

enum class SrdMethod { mle, nls };

struct SrdSfaFit {
    Vector frontier;  // alpha, beta1, beta2, beta3, covariates
    ScalingSpec scaling;
    // sigma_u is the baseline u* scale, fixed at 1 (absorbed in exp(rho0)).
    ComposedErrorParams params{1.0, 1.0};
    Decomposition decomposition;
    double objective = 0.0;  // loglik (mle) or -SSE/2 (nls)
    EstimateTable table;
    Flags flags;
    bool converged = true;
    double fallback_jump = std::numeric_limits<double>::quiet_NaN();
    double bandwidth = 0.0;
    std::size_t n = 0;
};

SrdSfaFit fit_srd_sfa(const Dataset& data, const RddSpec& spec, SrdMethod method = SrdMethod::mle,
                      const std::optional<ScalingSpec>& start = std::nullopt, const OptimOptions& options = {});

// Log-likelihood of the SFA-RDD model on the window. theta layout as the fit:
// frontier..., log sigma_v, rho0..rho3.
double srd_sfa_loglik(const Dataset& data, const RddSpec& spec, const Vector& frontier, double sigma_v,
                      const ScalingSpec& scaling);

// Cross-validation criterion per grid bandwidth, in increasing bandwidth order.
std::vector<std::pair<double, double>> bandwidth_cv_curve(const Dataset& data, const RddSpec& spec);

// Grid bandwidth minimizing the one-sided leave-one-out criterion; ties go to the larger h.
double bandwidth_select(const Dataset& data, const RddSpec& spec);

}  // namespace sfcausal
