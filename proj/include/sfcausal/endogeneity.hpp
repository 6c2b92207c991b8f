#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/dataset.hpp"
#include "sfcausal/optimizer.hpp"
#include "sfcausal/report.hpp"
#include "sfcausal/sfa.hpp"

#include <string>
#include <vector>

namespace sfcausal {

// y = b0 + X1 b1 + X2 b2 + v - u,  X2 = [1, X1, W] Pi + eta.
// The first-stage coefficient matrix Pi has one column per endogenous variable and rows
// ordered (constant, X1..., W...).
struct EndoSpec {
    std::string output_col = "y";
    std::vector<std::string> exogenous_cols;
    std::vector<std::string> endogenous_cols;
    std::vector<std::string> instrument_cols;

    // Throws SchemaError / InputError for missing or repeated columns, IdentificationError
    // when there are fewer instruments than endogenous columns.
    void validate(const Dataset& data) const;
    std::vector<std::string> coef_names() const;  // beta0, beta_<x1>..., beta_<x2>...
    std::vector<std::string> first_stage_rows() const;  // const, <x1>..., <w>...
};

struct ApsParams {
    Vector beta;
    double sigma_v = 1.0;
    double sigma_u = 1.0;
    Matrix Pi;             // (1 + k1 + l) x k2
    Vector Sigma_veta;     // k2
    Matrix Sigma_etaeta;   // k2 x k2

    double sigma_c2() const;
};

struct C2slsFit {
    SfaFit sfa;  // se holds slope standard errors only; intercept and scale entries are NaN
    std::vector<double> first_stage_partial_r2;
};

C2slsFit c2sls_fit(const Dataset& data, const EndoSpec& spec);

// lnL1 + lnL2: conditional composed-error density of y given eta plus the Gaussian first stage.
double aps_loglik(const Dataset& data, const EndoSpec& spec, const ApsParams& p);

struct ApsFit {
    ApsParams params;
    double loglik = 0.0;
    EstimateTable table;
    Flags flags;
    bool converged = true;
    Vector fallback_beta;  // C2SLS estimate, kept when the MLE does not converge
};

ApsFit fit_aps_mle(const Dataset& data, const EndoSpec& spec, const OptimOptions& options = {});

// Internal parameter vector of the APS likelihood: [beta, log sigma_c, log sigma_u, vec(Pi),
// a = Sigma_etaeta^{-1} Sigma_etav, log-Cholesky of Sigma_etaeta].
class ApsLikelihood {
public:
    ApsLikelihood(const Dataset& data, const EndoSpec& spec);

    Eigen::Index num_params() const;
    double loglik(const Vector& theta) const;
    double loglik_grad(const Vector& theta, Vector& grad) const;
    Objective objective() const;
    Vector pack(const ApsParams& p) const;
    ApsParams unpack(const Vector& theta) const;

private:
    Matrix X_;   // [1, X1, X2]
    Matrix X2_;
    Matrix Wt_;  // [1, X1, W]
    Vector y_;
    Eigen::Index k2_ = 0;
};

// Sample means of [eps^2/sigma^2 - 1, eps m / ..., W eps / sigma + lambda W m] with
// m = phi(lambda eps / sigma) / (1 - Phi(lambda eps / sigma)) and W = [1, X1, instruments].
Vector gmm_moments(const Dataset& data, const EndoSpec& spec, const Vector& beta, const ComposedErrorParams& p);

// Jacobian of gmm_moments in (beta, log sigma, t), sigma_u^2 / sigma^2 = (1 + tanh t) / 2.
Matrix gmm_jacobian(const Dataset& data, const EndoSpec& spec, const Vector& beta, const ComposedErrorParams& p);

struct GmmFit {
    SfaFit sfa;
    double objective = 0.0;  // n * gbar' W gbar at the second step
    int overid_df = 0;
    Vector moments;
};

// Two-step GMM over (beta, log sigma, t) with sigma_u^2 / sigma^2 = (1 + tanh t) / 2.
GmmFit gmm_fit(const Dataset& data, const EndoSpec& spec, const OptimOptions& options = {});

}  // namespace sfcausal
