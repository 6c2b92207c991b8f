#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/distributions.hpp"
#include "sfcausal/optimizer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sfcausal {

struct FrontierSpec {
    std::string output_col = "y";
    std::vector<std::string> input_cols;
    bool intercept = true;
    // Cost frontier: y = x'beta + v + u. Handled by negating residuals.
    bool cost_frontier = false;

    // Throws SchemaError / InputError when the columns are missing or repeated.
    void validate(const Dataset& data) const;
    std::vector<std::string> coef_names() const;
};

struct SfaFit {
    FrontierSpec spec;
    Vector beta;
    ComposedErrorParams params;
    double loglik = 0.0;
    // Order: beta..., sigma_v, sigma_u. Natural scale (delta method for the sigmas).
    std::optional<Vector> se;
    std::size_t n = 0;
    bool converged = true;
    int iterations = 0;
    Flags flags;
};

double sfa_loglik(const Dataset& data, const FrontierSpec& spec, const Vector& beta,
                  const ComposedErrorParams& p);

SfaFit fit_sfa_cols(const Dataset& data, const FrontierSpec& spec);
SfaFit fit_sfa_mle(const Dataset& data, const FrontierSpec& spec, const OptimOptions& options = {});

// Method-of-moments inversion shared by the COLS estimators.
struct ColsMoments {
    double sigma_u = 0.0;
    double sigma_v2 = 0.0;
    bool wrong_skew = false;
    bool sigma_v_floored = false;
};
ColsMoments invert_cols_moments(double m2, double m3);

// E[u | eps] for each residual, by quadrature. Production sign convention.
Vector conditional_mean_u(const Vector& eps, const ComposedErrorParams& p);

// exp(-E[u | eps]) per row.
Vector efficiency_scores(const SfaFit& fit, const Dataset& data);

// Residuals y - X beta (sign flipped for cost frontiers).
Vector frontier_residuals(const Dataset& data, const FrontierSpec& spec, const Vector& beta);

}  // namespace sfcausal
