#include "sfcausal/distributions.hpp"

#include "sfcausal/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>

namespace sfcausal {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTailSwitch = 8.0;

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite input");
}

// Phi(-t) / phi(t) for t >= 8 by backward evaluation of the continued fraction
// 1/(t + 1/(t + 2/(t + 3/(t + ...)))).
double upper_mills_ratio(double t) {
    double acc = t;
    for (int k = 60; k >= 1; --k) acc = t + k / acc;
    return 1.0 / acc;
}

// Acklam's rational approximation, relative error about 1e-9.
double acklam_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

void ComposedErrorParams::validate() const {
    if (!std::isfinite(sigma_v) || !std::isfinite(sigma_u)) {
        throw DomainError("composed error: non-finite scale");
    }
    if (sigma_v <= 0.0) throw DomainError("composed error: sigma_v must be positive");
    if (sigma_u < 0.0) throw DomainError("composed error: sigma_u must be non-negative");
}

double std_normal_pdf(double x) {
    require_finite(x, "std_normal_pdf");
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
    require_finite(x, "std_normal_cdf");
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double log_std_normal_cdf(double x) {
    require_finite(x, "log_std_normal_cdf");
    if (x < -kTailSwitch) {
        return -0.5 * x * x - kLogSqrt2Pi + std::log(upper_mills_ratio(-x));
    }
    if (x <= 0.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
}

double normal_mills(double x) {
    require_finite(x, "normal_mills");
    if (x < -kTailSwitch) return 1.0 / upper_mills_ratio(-x);
    return std::exp(-0.5 * x * x - kLogSqrt2Pi - log_std_normal_cdf(x));
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_quantile: p must lie in (0, 1)");
    if (p > 0.5) return -std_normal_quantile(1.0 - p);
    double x = acklam_quantile(p);
    // Halley refinement on Phi(x) - p; lower half only, so Phi(x) carries full relative precision.
    for (int it = 0; it < 3; ++it) {
        const double err = std_normal_cdf(x) - p;
        const double u = err / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double normal_logpdf(double x, double mean, double sd) {
    if (!(sd > 0.0)) throw DomainError("normal_logpdf: sd must be positive");
    const double z = (x - mean) / sd;
    return -0.5 * z * z - kLogSqrt2Pi - std::log(sd);
}

double composed_error_logpdf(double eps, const ComposedErrorParams& p) {
    p.validate();
    require_finite(eps, "composed_error_logpdf");
    if (p.sigma_u == 0.0) return normal_logpdf(eps, 0.0, p.sigma_v);
    const double s = p.sigma();
    const double z = eps / s;
    return std::numbers::ln2 - std::log(s) - 0.5 * z * z - kLogSqrt2Pi +
           log_std_normal_cdf(-p.lambda() * z);
}

HalfNormalMoments halfnormal_moments(double sigma_u) {
    if (!std::isfinite(sigma_u) || sigma_u < 0.0) {
        throw DomainError("halfnormal_moments: sigma_u must be finite and non-negative");
    }
    return {kSqrt2OverPi * sigma_u, kHalfNormalC3 * sigma_u * sigma_u * sigma_u};
}

double folded_normal_cond_pdf(double u, const Vector& eta, const FoldedNormalCondParams& p) {
    if (!std::isfinite(u) || u < 0.0) throw DomainError("folded_normal_cond_pdf: u must be >= 0");
    if (!(p.sigma_u > 0.0) || !std::isfinite(p.sigma_u)) {
        throw DomainError("folded_normal_cond_pdf: sigma_u must be positive");
    }
    const auto k = p.eta_cov.rows();
    if (p.eta_cov.cols() != k || p.cross_cov.size() != k || eta.size() != k) {
        throw DomainError("folded_normal_cond_pdf: dimension mismatch");
    }
    double mu = 0.0;
    double var = p.sigma_u * p.sigma_u;
    if (k > 0) {
        const Eigen::LLT<Matrix> llt(p.eta_cov);
        if (llt.info() != Eigen::Success) {
            throw DomainError("folded_normal_cond_pdf: eta covariance is not positive definite");
        }
        const Vector w = llt.solve(p.cross_cov);
        mu = w.dot(eta);
        var -= w.dot(p.cross_cov);
    }
    if (!(var > 0.0)) {
        throw DomainError("folded_normal_cond_pdf: conditional variance is not positive");
    }
    const double sd = std::sqrt(var);
    const double a = (u - mu) / sd;
    const double b = (u + mu) / sd;
    return kInvSqrt2Pi / sd * (std::exp(-0.5 * a * a) + std::exp(-0.5 * b * b));
}

}  // namespace sfcausal
