#pragma once

#include "sfcausal/common.hpp"

#include <string>
#include <vector>

namespace sfcausal {

struct OlsResult {
    Vector coef;
    Vector resid;
};

// Least squares via column-pivoted QR. Throws LinAlgError listing the collinear
// columns (by name when names are given) if X is rank deficient.
OlsResult ols(const Matrix& X, const Vector& y, const std::vector<std::string>& names = {});

// Two-stage least squares. X = [exogenous | endogenous], instruments = [exogenous | excluded].
// Residuals use the structural X, not the fitted values.
OlsResult two_sls(const Matrix& X, const Matrix& instruments, const Vector& y,
                  const std::vector<std::string>& names = {});

void require_full_rank(const Matrix& X, const std::vector<std::string>& names);

struct CentralMoments {
    double mean = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
};

CentralMoments central_moments(const Vector& x);

}  // namespace sfcausal
