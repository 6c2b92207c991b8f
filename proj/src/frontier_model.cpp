#include "sfcausal/frontier_model.hpp"

#include "sfcausal/dataset.hpp"
#include "sfcausal/distributions.hpp"
#include "sfcausal/error.hpp"

#include <cmath>
#include <numbers>

namespace sfcausal {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

ScaledFrontierLikelihood::ScaledFrontierLikelihood(Matrix X, Vector y, Matrix Z, bool cost_frontier)
    : sign_(cost_frontier ? -1.0 : 1.0) {
    const auto n = y.size();
    if (X.rows() != n || Z.rows() != n) throw InputError("frontier likelihood: row count mismatch");
    Matrix all(n, 1 + X.cols() + Z.cols());
    all << y, X, Z;
    const auto order = canonical_row_order(all);
    X_.resize(n, X.cols());
    y_.resize(n);
    Z_.resize(n, Z.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
        X_.row(i) = X.row(r);
        y_[i] = y[r];
        Z_.row(i) = Z.row(r);
    }
}

double ScaledFrontierLikelihood::loglik(const Vector& theta) const {
    Vector g;
    return loglik_grad(theta, g);
}

Vector ScaledFrontierLikelihood::contributions(const Vector& theta) const {
    if (theta.size() != num_params()) throw InputError("frontier likelihood: wrong parameter count");
    const Vector beta = theta.head(kx());
    const double sv = std::exp(theta[kx()]);
    const Vector delta = theta.tail(kz());
    const Vector eps = sign_ * (y_ - X_ * beta);
    const Vector zd = Z_ * delta;
    Vector out(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
        out[i] = composed_error_logpdf(eps[i], ComposedErrorParams{sv, std::exp(zd[i])});
    }
    return out;
}

double ScaledFrontierLikelihood::loglik_grad(const Vector& theta, Vector& grad) const {
    if (theta.size() != num_params()) throw InputError("frontier likelihood: wrong parameter count");
    const Vector beta = theta.head(kx());
    const double sv = std::exp(theta[kx()]);
    const Vector delta = theta.tail(kz());
    const Vector eps = sign_ * (y_ - X_ * beta);
    const Vector zd = Z_ * delta;
    const double sv2 = sv * sv;

    Vector d_eps(n());
    Vector d_log_su(n());
    double d_log_sv = 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n(); ++i) {
        const double su = std::exp(zd[i]);
        const double e = eps[i];
        const double s2 = sv2 + su * su;
        const double s = std::sqrt(s2);
        const double lam = su / sv;
        const double a = -lam * e / s;
        total += std::numbers::ln2 - std::log(s) - 0.5 * e * e / s2 - kLogSqrt2Pi + log_std_normal_cdf(a);
        const double h = normal_mills(a);
        const double s3 = s2 * s;
        const double s4 = s2 * s2;
        d_eps[i] = -e / s2 - h * lam / s;
        const double da_dsv = e * su * (1.0 / (sv2 * s) + 1.0 / s3);
        const double da_dsu = -e * sv / s3;
        const double dsv = -sv / s2 + e * e * sv / s4 + h * da_dsv;
        const double dsu = -su / s2 + e * e * su / s4 + h * da_dsu;
        d_log_sv += sv * dsv;
        d_log_su[i] = su * dsu;
    }
    grad.resize(num_params());
    // d eps / d beta = -sign * x
    grad.head(kx()) = -sign_ * (X_.transpose() * d_eps);
    grad[kx()] = d_log_sv;
    grad.tail(kz()) = Z_.transpose() * d_log_su;
    return total;
}

Objective ScaledFrontierLikelihood::objective() const {
    return Objective{[this](const Vector& t) { return loglik(t); },
                     [this](const Vector& t, Vector& g) { return loglik_grad(t, g); }};
}

}  // namespace sfcausal
