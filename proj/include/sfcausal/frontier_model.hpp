#pragma once

#include "sfcausal/common.hpp"
#include "sfcausal/optimizer.hpp"

namespace sfcausal {

// y = X beta + v - u with v ~ N(0, sigma_v^2) and u ~ N+(0, sigma_u(z)^2),
// sigma_u(z) = exp(z' delta). Parameter vector: [beta, log sigma_v, delta].
//
// Rows are stored in a canonical order so that sums do not depend on the input row order.
class ScaledFrontierLikelihood {
public:
    ScaledFrontierLikelihood(Matrix X, Vector y, Matrix Z, bool cost_frontier = false);

    Eigen::Index n() const { return y_.size(); }
    Eigen::Index kx() const { return X_.cols(); }
    Eigen::Index kz() const { return Z_.cols(); }
    Eigen::Index num_params() const { return kx() + 1 + kz(); }

    double loglik(const Vector& theta) const;
    double loglik_grad(const Vector& theta, Vector& grad) const;
    Vector contributions(const Vector& theta) const;
    Objective objective() const;

    const Matrix& X() const { return X_; }
    const Matrix& Z() const { return Z_; }
    const Vector& y() const { return y_; }

private:
    Matrix X_;
    Vector y_;
    Matrix Z_;
    double sign_ = 1.0;
};

}  // namespace sfcausal
