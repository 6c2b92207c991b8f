#pragma once

#include "sfcausal/common.hpp"

namespace sfcausal {

// Normal / Half-Normal composed error eps = v - u.
struct ComposedErrorParams {
    double sigma_v = 1.0;
    double sigma_u = 0.0;

    double sigma() const { return std::sqrt(sigma_v * sigma_v + sigma_u * sigma_u); }
    double lambda() const { return sigma_u / sigma_v; }
    // Throws DomainError unless sigma_v > 0 and sigma_u >= 0, both finite.
    void validate() const;
};

// Conditional law of u given eta when (u*, eta) are jointly Gaussian and u = |u*|.
struct FoldedNormalCondParams {
    double sigma_u = 1.0;
    Vector cross_cov;  // Sigma_{u eta}
    Matrix eta_cov;    // Sigma_{eta eta}
};

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// log Phi(x), accurate far into the lower tail.
double log_std_normal_cdf(double x);

// phi(x) / Phi(x) (inverse Mills ratio), stable for very negative x.
double normal_mills(double x);

// Inverse of std_normal_cdf on (0, 1).
double std_normal_quantile(double p);

double normal_logpdf(double x, double mean, double sd);

double composed_error_logpdf(double eps, const ComposedErrorParams& p);

struct HalfNormalMoments {
    double mean = 0.0;
    double third_central = 0.0;
};

HalfNormalMoments halfnormal_moments(double sigma_u);

double folded_normal_cond_pdf(double u, const Vector& eta, const FoldedNormalCondParams& p);

}  // namespace sfcausal
