#include "sfcausal/linalg.hpp"

#include "sfcausal/error.hpp"

#include <Eigen/QR>

#include <algorithm>

namespace sfcausal {

namespace {

std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
    if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
    return "column " + std::to_string(j);
}

}  // namespace

void require_full_rank(const Matrix& X, const std::vector<std::string>& names) {
    if (X.rows() < X.cols()) {
        throw LinAlgError("design has " + std::to_string(X.rows()) + " rows for " +
                          std::to_string(X.cols()) + " columns");
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank == X.cols()) return;
    std::vector<Eigen::Index> dropped;
    for (Eigen::Index i = rank; i < X.cols(); ++i) dropped.push_back(qr.colsPermutation().indices()[i]);
    std::sort(dropped.begin(), dropped.end());
    std::string msg = "design matrix is rank deficient; collinear columns:";
    for (const auto j : dropped) msg += " " + column_label(names, j);
    throw LinAlgError(msg);
}

OlsResult ols(const Matrix& X, const Vector& y, const std::vector<std::string>& names) {
    require_full_rank(X, names);
    OlsResult out;
    out.coef = X.colPivHouseholderQr().solve(y);
    out.resid = y - X * out.coef;
    return out;
}

OlsResult two_sls(const Matrix& X, const Matrix& instruments, const Vector& y,
                  const std::vector<std::string>& names) {
    require_full_rank(instruments, {});
    const auto qr = instruments.colPivHouseholderQr();
    Matrix Xhat(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) Xhat.col(j) = instruments * qr.solve(X.col(j));
    require_full_rank(Xhat, names);
    OlsResult out;
    out.coef = Xhat.colPivHouseholderQr().solve(y);
    out.resid = y - X * out.coef;
    return out;
}

CentralMoments central_moments(const Vector& x) {
    CentralMoments m;
    const auto n = static_cast<double>(x.size());
    if (x.size() == 0) return m;
    m.mean = x.sum() / n;
    const Vector c = x.array() - m.mean;
    m.m2 = c.squaredNorm() / n;
    m.m3 = c.array().cube().sum() / n;
    return m;
}

}  // namespace sfcausal
