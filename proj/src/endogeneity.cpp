#include "sfcausal/endogeneity.hpp"

#include "sfcausal/distributions.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/linalg.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct EndoData {
    Vector y;
    Matrix X1;
    Matrix X2;
    Matrix W;
};

// Rows in canonical order so fits do not depend on the input row order.
EndoData load(const Dataset& data, const EndoSpec& spec) {
    spec.validate(data);
    std::vector<std::string> cols{spec.output_col};
    cols.insert(cols.end(), spec.exogenous_cols.begin(), spec.exogenous_cols.end());
    cols.insert(cols.end(), spec.endogenous_cols.begin(), spec.endogenous_cols.end());
    cols.insert(cols.end(), spec.instrument_cols.begin(), spec.instrument_cols.end());
    const Matrix all = design_matrix(data, cols, false);
    const auto order = canonical_row_order(all);
    Matrix s(all.rows(), all.cols());
    for (Eigen::Index i = 0; i < all.rows(); ++i) s.row(i) = all.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]));
    const auto k1 = static_cast<Eigen::Index>(spec.exogenous_cols.size());
    const auto k2 = static_cast<Eigen::Index>(spec.endogenous_cols.size());
    const auto l = static_cast<Eigen::Index>(spec.instrument_cols.size());
    return {s.col(0), s.middleCols(1, k1), s.middleCols(1 + k1, k2), s.middleCols(1 + k1 + k2, l)};
}

Matrix with_constant(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), 1 + a.cols() + b.cols());
    out.col(0).setOnes();
    out.middleCols(1, a.cols()) = a;
    out.rightCols(b.cols()) = b;
    return out;
}

// log f(e) of the composed error and its derivatives in (e, log sigma_c, log sigma_u).
struct ComposedDerivs {
    double d_e;
    double d_logsc;
    double d_logsu;
};

ComposedDerivs composed_derivs(double e, double sc, double su) {
    const double s2 = sc * sc + su * su;
    const double s = std::sqrt(s2);
    const double a = -e * su / (sc * s);
    const double h = normal_mills(a);
    const double d_e = -e / s2 - h * su / (sc * s);
    const double d_sc = -sc / s2 + e * e * sc / (s2 * s2) + h * e * su * (s2 + sc * sc) / (sc * sc * s2 * s);
    const double d_su = -su / s2 + e * e * su / (s2 * s2) - h * e * sc / (s2 * s);
    return {d_e, d_sc * sc, d_su * su};
}

double partial_r2(const Matrix& restricted, const Matrix& full, const Vector& x) {
    const double ssr_r = ols(restricted, x).resid.squaredNorm();
    const double ssr_f = ols(full, x).resid.squaredNorm();
    return ssr_r > 0.0 ? (ssr_r - ssr_f) / ssr_r : 1.0;
}

Matrix delta_cov(const std::function<Vector(const Vector&)>& g, const Vector& theta, const Matrix& cov) {
    const Matrix J = numeric_jacobian(g, theta);
    return J * cov * J.transpose();
}

}  // namespace

void EndoSpec::validate(const Dataset& data) const {
    (void)data.column(output_col);
    std::set<std::string> seen{output_col};
    for (const auto* group : {&exogenous_cols, &endogenous_cols}) {
        for (const auto& c : *group) {
            (void)data.column(c);
            if (!seen.insert(c).second) throw InputError("column '" + c + "' listed twice");
        }
    }
    std::set<std::string> inst;
    for (const auto& c : instrument_cols) {
        (void)data.column(c);
        if (!inst.insert(c).second) throw InputError("instrument '" + c + "' listed twice");
        if (c == output_col) throw InputError("the output column cannot be an instrument");
        for (const auto& x : exogenous_cols) {
            if (x == c) throw InputError("instrument '" + c + "' is already an exogenous regressor");
        }
    }
    if (instrument_cols.size() < endogenous_cols.size()) {
        throw IdentificationError("need at least as many instruments (" + std::to_string(instrument_cols.size()) +
                                  ") as endogenous columns (" + std::to_string(endogenous_cols.size()) + ")");
    }
}

std::vector<std::string> EndoSpec::coef_names() const {
    std::vector<std::string> names{"beta0"};
    for (const auto& c : exogenous_cols) names.push_back("beta_" + c);
    for (const auto& c : endogenous_cols) names.push_back("beta_" + c);
    return names;
}

std::vector<std::string> EndoSpec::first_stage_rows() const {
    std::vector<std::string> names{"const"};
    names.insert(names.end(), exogenous_cols.begin(), exogenous_cols.end());
    names.insert(names.end(), instrument_cols.begin(), instrument_cols.end());
    return names;
}

double ApsParams::sigma_c2() const {
    const Eigen::LLT<Matrix> llt(Sigma_etaeta);
    if (llt.info() != Eigen::Success) throw DomainError("Sigma_etaeta is not positive definite");
    return sigma_v * sigma_v - Sigma_veta.dot(llt.solve(Sigma_veta));
}

C2slsFit c2sls_fit(const Dataset& data, const EndoSpec& spec) {
    const EndoData d = load(data, spec);
    const auto n = d.y.size();
    const Matrix X = with_constant(d.X1, d.X2);
    const Matrix Z = with_constant(d.X1, d.W);
    if (n < X.cols() + 3) throw InputError("need at least " + std::to_string(X.cols() + 3) + " rows");
    const auto names = spec.coef_names();
    const auto fit = two_sls(X, Z, d.y, names);
    const auto m = central_moments(fit.resid);
    const auto inv = invert_cols_moments(m.m2, m.m3);

    C2slsFit out;
    SfaFit& s = out.sfa;
    s.spec = FrontierSpec{spec.output_col, {}, true, false};
    s.spec.input_cols = spec.exogenous_cols;
    s.spec.input_cols.insert(s.spec.input_cols.end(), spec.endogenous_cols.begin(), spec.endogenous_cols.end());
    s.n = static_cast<std::size_t>(n);
    s.beta = fit.coef;
    s.beta[0] += kSqrt2OverPi * inv.sigma_u;
    s.params = {std::sqrt(inv.sigma_v2), inv.sigma_u};
    if (inv.wrong_skew) s.flags.set("wrong_skew");
    if (inv.sigma_v_floored) s.flags.set("sigma_v_floored");
    s.loglik = sfa_loglik(data, s.spec, s.beta, s.params);

    // Slope standard errors from the projected design; none for the intercept or scales.
    const Matrix Xhat = Z * Z.colPivHouseholderQr().solve(X);
    const Matrix cov = m.m2 * (Xhat.transpose() * Xhat).inverse();
    Vector se = Vector::Constant(X.cols() + 2, kNaN);
    for (Eigen::Index j = 1; j < X.cols(); ++j) se[j] = std::sqrt(cov(j, j));
    s.se = se;

    const Matrix restricted = with_constant(d.X1, Matrix(n, 0));
    for (Eigen::Index j = 0; j < d.X2.cols(); ++j) {
        const double r2 = partial_r2(restricted, Z, d.X2.col(j));
        out.first_stage_partial_r2.push_back(r2);
        if (r2 < 0.01) s.flags.set("weak_instruments");
    }
    return out;
}

ApsLikelihood::ApsLikelihood(const Dataset& data, const EndoSpec& spec) {
    const EndoData d = load(data, spec);
    X_ = with_constant(d.X1, d.X2);
    X2_ = d.X2;
    Wt_ = with_constant(d.X1, d.W);
    y_ = d.y;
    k2_ = d.X2.cols();
}

Eigen::Index ApsLikelihood::num_params() const {
    return X_.cols() + 2 + Wt_.cols() * k2_ + k2_ + k2_ * (k2_ + 1) / 2;
}

Vector ApsLikelihood::pack(const ApsParams& p) const {
    if (p.beta.size() != X_.cols() || p.Pi.rows() != Wt_.cols() || p.Pi.cols() != k2_ ||
        p.Sigma_veta.size() != k2_ || p.Sigma_etaeta.rows() != k2_ || p.Sigma_etaeta.cols() != k2_) {
        throw InputError("APS parameters have the wrong dimensions");
    }
    const Eigen::LLT<Matrix> llt(p.Sigma_etaeta);
    if (llt.info() != Eigen::Success) throw DomainError("Sigma_etaeta is not positive definite");
    const double sc2 = p.sigma_c2();
    if (!(sc2 > 0.0)) throw DomainError("sigma_c^2 = sigma_v^2 - Sigma_veta Sigma_etaeta^-1 Sigma_etav must be positive");
    if (!(p.sigma_u > 0.0)) throw DomainError("sigma_u must be positive");
    Vector theta(num_params());
    Eigen::Index at = 0;
    theta.segment(at, X_.cols()) = p.beta;
    at += X_.cols();
    theta[at++] = 0.5 * std::log(sc2);
    theta[at++] = std::log(p.sigma_u);
    theta.segment(at, Wt_.cols() * k2_) = Eigen::Map<const Vector>(p.Pi.data(), Wt_.cols() * k2_);
    at += Wt_.cols() * k2_;
    theta.segment(at, k2_) = llt.solve(p.Sigma_veta);
    at += k2_;
    const Matrix L = llt.matrixL();
    for (Eigen::Index j = 0; j < k2_; ++j) {
        for (Eigen::Index c = 0; c <= j; ++c) theta[at++] = c == j ? std::log(L(j, j)) : L(j, c);
    }
    return theta;
}

ApsParams ApsLikelihood::unpack(const Vector& theta) const {
    ApsParams p;
    Eigen::Index at = 0;
    p.beta = theta.segment(at, X_.cols());
    at += X_.cols();
    const double sc = std::exp(theta[at++]);
    p.sigma_u = std::exp(theta[at++]);
    p.Pi = Eigen::Map<const Matrix>(theta.data() + at, Wt_.cols(), k2_);
    at += Wt_.cols() * k2_;
    const Vector a = theta.segment(at, k2_);
    at += k2_;
    Matrix L = Matrix::Zero(k2_, k2_);
    for (Eigen::Index j = 0; j < k2_; ++j) {
        for (Eigen::Index c = 0; c <= j; ++c) L(j, c) = c == j ? std::exp(theta[at++]) : theta[at++];
    }
    p.Sigma_etaeta = L * L.transpose();
    p.Sigma_veta = p.Sigma_etaeta * a;
    p.sigma_v = std::sqrt(sc * sc + a.dot(p.Sigma_veta));
    return p;
}

double ApsLikelihood::loglik(const Vector& theta) const {
    Vector g;
    return loglik_grad(theta, g);
}

double ApsLikelihood::loglik_grad(const Vector& theta, Vector& grad) const {
    if (theta.size() != num_params()) throw InputError("APS parameter vector has the wrong length");
    const auto p = X_.cols();
    const auto r = Wt_.cols();
    const auto n = y_.size();
    Eigen::Index at = 0;
    const Vector beta = theta.segment(at, p);
    at += p;
    const double sc = std::exp(theta[at++]);
    const double su = std::exp(theta[at++]);
    const Eigen::Map<const Matrix> Pi(theta.data() + at, r, k2_);
    at += r * k2_;
    const Vector a = theta.segment(at, k2_);
    at += k2_;
    const Eigen::Index chol_at = at;
    Matrix L = Matrix::Zero(k2_, k2_);
    for (Eigen::Index j = 0; j < k2_; ++j) {
        for (Eigen::Index c = 0; c <= j; ++c) L(j, c) = c == j ? std::exp(theta[at++]) : theta[at++];
    }
    if (!std::isfinite(sc) || !std::isfinite(su) || sc <= 0.0 || su <= 0.0) {
        throw EvaluationError(p, "APS scale parameters out of range");
    }

    const Matrix E = X2_ - Wt_ * Pi;
    const Vector e = y_ - X_ * beta - E * a;
    const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(k2_, k2_));
    const Matrix Sinv = Linv.transpose() * Linv;
    const Matrix Z = E * Linv.transpose();

    double log_det_l = 0.0;
    for (Eigen::Index j = 0; j < k2_; ++j) log_det_l += std::log(L(j, j));
    double ll = -static_cast<double>(n) * (0.5 * static_cast<double>(k2_) * kLog2Pi + log_det_l) -
                0.5 * Z.squaredNorm();

    const ComposedErrorParams cp{sc, su};
    Vector ge(n);
    double g_sc = 0.0, g_su = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        ll += composed_error_logpdf(e[i], cp);
        const auto dv = composed_derivs(e[i], sc, su);
        ge[i] = dv.d_e;
        g_sc += dv.d_logsc;
        g_su += dv.d_logsu;
    }

    grad.resize(theta.size());
    at = 0;
    grad.segment(at, p) = -X_.transpose() * ge;
    at += p;
    grad[at++] = g_sc;
    grad[at++] = g_su;
    const Matrix Q = -ge * a.transpose() - E * Sinv;
    const Matrix gPi = -Wt_.transpose() * Q;
    grad.segment(at, r * k2_) = Eigen::Map<const Vector>(gPi.data(), r * k2_);
    at += r * k2_;
    grad.segment(at, k2_) = -E.transpose() * ge;
    at += k2_;
    const Matrix S = E.transpose() * E;
    const Matrix dL = -static_cast<double>(n) * Linv.transpose() + Sinv * S * Linv.transpose();
    at = chol_at;
    for (Eigen::Index j = 0; j < k2_; ++j) {
        for (Eigen::Index c = 0; c <= j; ++c) grad[at++] = c == j ? dL(j, j) * L(j, j) : dL(j, c);
    }
    return ll;
}

Objective ApsLikelihood::objective() const {
    Objective obj;
    obj.value = [this](const Vector& t) { return loglik(t); };
    obj.value_and_gradient = [this](const Vector& t, Vector& g) { return loglik_grad(t, g); };
    return obj;
}

double aps_loglik(const Dataset& data, const EndoSpec& spec, const ApsParams& p) {
    const ApsLikelihood model(data, spec);
    return model.loglik(model.pack(p));
}

ApsFit fit_aps_mle(const Dataset& data, const EndoSpec& spec, const OptimOptions& options) {
    const ApsLikelihood model(data, spec);
    const EndoData d = load(data, spec);
    const auto n = d.y.size();
    if (n < model.num_params() + 5) {
        throw InputError("need at least " + std::to_string(model.num_params() + 5) + " rows for the APS likelihood");
    }
    const auto c2 = c2sls_fit(data, spec);
    ApsFit fit;
    fit.flags.merge(c2.sfa.flags);
    fit.fallback_beta = c2.sfa.beta;

    // Starts: OLS first stage, C2SLS second stage, sample cross-covariance.
    const Matrix Wt = with_constant(d.X1, d.W);
    const Matrix X = with_constant(d.X1, d.X2);
    ApsParams start;
    start.Pi.resize(Wt.cols(), d.X2.cols());
    Matrix E(n, d.X2.cols());
    for (Eigen::Index j = 0; j < d.X2.cols(); ++j) {
        const auto o = ols(Wt, d.X2.col(j));
        start.Pi.col(j) = o.coef;
        E.col(j) = o.resid;
    }
    start.Sigma_etaeta = E.transpose() * E / static_cast<double>(n);
    const Vector e2 = d.y - X * c2.sfa.beta;
    const Vector e2c = e2.array() - e2.mean();
    start.Sigma_veta = E.transpose() * e2c / static_cast<double>(n);
    start.beta = c2.sfa.beta;
    start.sigma_u = std::max(c2.sfa.params.sigma_u, 1e-3);
    double sv2 = c2.sfa.params.sigma_v * c2.sfa.params.sigma_v;
    const double explained = start.Sigma_veta.dot(start.Sigma_etaeta.llt().solve(start.Sigma_veta));
    if (sv2 - explained < 0.1 * sv2 || sv2 <= 0.0) {
        sv2 = std::max(sv2, 1e-6);
        // Shrink the cross-covariance until sigma_c^2 is a tenth of sigma_v^2.
        start.Sigma_veta *= std::sqrt(0.9 * sv2 / std::max(explained, 1e-300));
    }
    start.sigma_v = std::sqrt(sv2);

    const auto obj = model.objective();
    const auto res = maximize(obj, model.pack(start), options);
    fit.converged = res.converged;
    if (!res.converged) fit.flags.set("not_converged");
    fit.params = model.unpack(res.argmax);
    fit.loglik = res.objective_value;

    // Natural-scale reporting vector and its delta-method covariance.
    const auto k2 = d.X2.cols();
    auto natural = [&](const Vector& t) {
        const auto q = model.unpack(t);
        Vector v(q.beta.size() + 2 + q.Pi.size() + k2 + k2 * (k2 + 1) / 2);
        Eigen::Index at = 0;
        v.segment(at, q.beta.size()) = q.beta;
        at += q.beta.size();
        v[at++] = q.sigma_v;
        v[at++] = q.sigma_u;
        v.segment(at, q.Pi.size()) = Eigen::Map<const Vector>(q.Pi.data(), q.Pi.size());
        at += q.Pi.size();
        v.segment(at, k2) = q.Sigma_veta;
        at += k2;
        for (Eigen::Index j = 0; j < k2; ++j) {
            for (Eigen::Index c = j; c < k2; ++c) v[at++] = q.Sigma_etaeta(j, c);
        }
        return v;
    };
    const Vector values = natural(res.argmax);
    Vector se = Vector::Constant(values.size(), kNaN);
    if (res.converged) {
        const auto h = numeric_hessian_se(obj, res.argmax);
        if (h.pd) {
            se = delta_cov(natural, res.argmax, h.covariance).diagonal().cwiseMax(0.0).cwiseSqrt();
        } else {
            fit.flags.set("hessian_not_pd");
        }
    }
    std::vector<std::string> names = spec.coef_names();
    names.emplace_back("sigma_v");
    names.emplace_back("sigma_u");
    const auto rows = spec.first_stage_rows();
    for (const auto& endo : spec.endogenous_cols) {
        for (const auto& row : rows) names.push_back("fs_" + endo + "_" + row);
    }
    for (const auto& endo : spec.endogenous_cols) names.push_back("cov_v_" + endo);
    for (Eigen::Index j = 0; j < k2; ++j) {
        for (Eigen::Index c = j; c < k2; ++c) {
            names.push_back("cov_eta_" + spec.endogenous_cols[static_cast<std::size_t>(j)] + "_" +
                            spec.endogenous_cols[static_cast<std::size_t>(c)]);
        }
    }
    for (Eigen::Index j = 0; j < values.size(); ++j) fit.table.add(names[static_cast<std::size_t>(j)], values[j], se[j]);
    return fit;
}

namespace {

struct GmmSystem {
    Matrix X;  // [1, X1, X2]
    Matrix W;  // [1, X1, instruments]
    Vector y;

    // Per-row moment contributions, n x (2 + W.cols()).
    Matrix rows(const Vector& beta, double sigma, double lambda) const {
        const Vector eps = y - X * beta;
        const auto n = eps.size();
        Matrix G(n, 2 + W.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = eps[i];
            // phi(z) / (1 - Phi(z)) = phi(-z) / Phi(-z), stable in both tails.
            const double m = normal_mills(-lambda * e / sigma);
            G(i, 0) = e * e / (sigma * sigma) - 1.0;
            G(i, 1) = e * m;
            G.row(i).tail(W.cols()) = W.row(i) * (e / sigma + lambda * m);
        }
        return G;
    }

    // Mean moments and their Jacobian in (beta, log sigma, t), using d lambda / dt = lambda.
    Vector mean_and_jacobian(const Vector& beta, double sigma, double lambda, Matrix& J) const {
        const Vector eps = y - X * beta;
        const auto n = eps.size();
        const auto k = X.cols();
        const auto l = W.cols();
        Vector g = Vector::Zero(2 + l);
        J = Matrix::Zero(2 + l, k + 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = eps[i];
            const double z = lambda * e / sigma;
            const double m = normal_mills(-z);
            const double dm = m * (m - z);
            const double q = e / sigma + lambda * m;
            g[0] += e * e / (sigma * sigma) - 1.0;
            g[1] += e * m;
            g.tail(l) += W.row(i).transpose() * q;

            const auto x = X.row(i);
            J.row(0).head(k) += (-2.0 * e / (sigma * sigma)) * x;
            J(0, k) += -2.0 * e * e / (sigma * sigma);
            J.row(1).head(k) += (-m - e * dm * lambda / sigma) * x;
            J(1, k) += -e * dm * z;
            J(1, k + 1) += e * dm * z;
            const double dq_db = -(1.0 + lambda * lambda * dm) / sigma;
            const double dq_ds = -e / sigma - lambda * dm * z;
            const double dq_dt = lambda * m + lambda * dm * z;
            for (Eigen::Index a = 0; a < l; ++a) {
                const double w = W(i, a);
                J.row(2 + a).head(k) += (w * dq_db) * x;
                J(2 + a, k) += w * dq_ds;
                J(2 + a, k + 1) += w * dq_dt;
            }
        }
        J /= static_cast<double>(n);
        return g / static_cast<double>(n);
    }
};

GmmSystem gmm_system(const Dataset& data, const EndoSpec& spec) {
    const EndoData d = load(data, spec);
    return {with_constant(d.X1, d.X2), with_constant(d.X1, d.W), d.y};
}

struct GmmParams {
    Vector beta;
    double sigma;
    double r;  // sigma_u^2 / sigma^2
};

GmmParams gmm_unpack(const Vector& t, Eigen::Index k) {
    return {t.head(k), std::exp(t[k]), 0.5 * (1.0 + std::tanh(t[k + 1]))};
}

struct GnResult {
    Vector theta;
    int iterations = 0;
    bool converged = false;
};

// Gauss-Newton on n gbar' W gbar with step halving.
GnResult gauss_newton(const GmmSystem& sys, const Matrix& Wt, const Vector& start, double tol) {
    const auto k = sys.X.cols();
    const double n = static_cast<double>(sys.y.size());
    auto eval = [&](const Vector& t, Matrix& J) {
        const auto q = gmm_unpack(t, k);
        return sys.mean_and_jacobian(q.beta, q.sigma, std::sqrt(q.r / (1.0 - q.r)), J);
    };
    GnResult out{start, 0, false};
    Matrix J;
    Vector g = eval(out.theta, J);
    double f = n * g.dot(Wt * g);
    for (; out.iterations < 200; ++out.iterations) {
        const Vector grad = 2.0 * n * J.transpose() * (Wt * g);
        if (!grad.allFinite()) return out;
        if (grad.norm() <= tol * std::max(1.0, f)) {
            out.converged = true;
            return out;
        }
        const Vector step = (J.transpose() * Wt * J).ldlt().solve(-J.transpose() * (Wt * g));
        if (!step.allFinite()) return out;
        // Predicted decrease of the quadratic model; below roundoff the iterate is final.
        if (-n * g.dot(Wt * (J * step)) <= 1e-10 * std::max(1.0, f)) {
            out.converged = true;
            return out;
        }
        double scale = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h, scale *= 0.5) {
            const Vector trial = out.theta + scale * step;
            Matrix Jt;
            Vector gt;
            try {
                gt = eval(trial, Jt);
            } catch (const Error&) {
                continue;
            }
            const double ft = n * gt.dot(Wt * gt);
            if (std::isfinite(ft) && ft <= f) {
                out.theta = trial;
                g = gt;
                J = Jt;
                moved = ft < f;
                f = ft;
                break;
            }
        }
        if (!moved) {
            const Vector grad_now = 2.0 * n * J.transpose() * (Wt * g);
            out.converged = grad_now.norm() <= tol * std::max(1.0, f);
            return out;
        }
    }
    return out;
}

}  // namespace

Vector gmm_moments(const Dataset& data, const EndoSpec& spec, const Vector& beta, const ComposedErrorParams& p) {
    p.validate();
    const auto sys = gmm_system(data, spec);
    if (beta.size() != sys.X.cols()) throw InputError("beta has the wrong length");
    return sys.rows(beta, p.sigma(), p.lambda()).colwise().mean().transpose();
}

Matrix gmm_jacobian(const Dataset& data, const EndoSpec& spec, const Vector& beta, const ComposedErrorParams& p) {
    p.validate();
    const auto sys = gmm_system(data, spec);
    if (beta.size() != sys.X.cols()) throw InputError("beta has the wrong length");
    Matrix J;
    sys.mean_and_jacobian(beta, p.sigma(), p.lambda(), J);
    return J;
}

GmmFit gmm_fit(const Dataset& data, const EndoSpec& spec, const OptimOptions& options) {
    const auto sys = gmm_system(data, spec);
    const auto k = sys.X.cols();
    const auto m = 2 + sys.W.cols();
    if (m < k + 2) throw IdentificationError("fewer moments than parameters");
    const double n = static_cast<double>(sys.y.size());
    const auto c2 = c2sls_fit(data, spec);

    GmmFit out;
    out.sfa.flags.merge(c2.sfa.flags);
    out.sfa.spec = c2.sfa.spec;
    out.sfa.n = c2.sfa.n;
    out.overid_df = static_cast<int>(m - k - 2);

    auto gbar = [&](const Vector& t) {
        const auto q = gmm_unpack(t, k);
        const double lambda = std::sqrt(q.r / (1.0 - q.r));
        return Vector(sys.rows(q.beta, q.sigma, lambda).colwise().mean().transpose());
    };

    Vector start(k + 2);
    start.head(k) = c2.sfa.beta;
    const double s2 = c2.sfa.params.sigma_v * c2.sfa.params.sigma_v + c2.sfa.params.sigma_u * c2.sfa.params.sigma_u;
    const double r0 = std::clamp(c2.sfa.params.sigma_u * c2.sfa.params.sigma_u / s2, 0.05, 0.95);
    start[k] = 0.5 * std::log(s2);
    start[k + 1] = std::atanh(2.0 * r0 - 1.0);

    // Inverse centered moment covariance at theta; ridged (and flagged) when singular.
    auto weight_at = [&](const Vector& t) {
        const auto qw = gmm_unpack(t, k);
        const Matrix G = sys.rows(qw.beta, qw.sigma, std::sqrt(qw.r / (1.0 - qw.r)));
        const Matrix Gc = G.rowwise() - G.colwise().mean();
        Matrix S = Gc.transpose() * Gc / n;
        const Eigen::SelfAdjointEigenSolver<Matrix> es(S);
        if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(es.eigenvalues().maxCoeff(), 1e-300)) {
            S += Matrix::Identity(m, m) * (1e-8 * S.trace() / static_cast<double>(m) + 1e-300);
            out.sfa.flags.set("weight_ridge");
        }
        return Matrix(S.llt().solve(Matrix::Identity(m, m)));
    };
    // Both steps weight by the moment covariance: first at the consistent C2SLS start, then
    // at the first-step estimate.
    Matrix Wt = weight_at(start);
    Objective criterion;
    criterion.value = [&](const Vector& t) {
        const Vector g = gbar(t);
        return -n * g.dot(Wt * g);
    };
    criterion.value_and_gradient = [&](const Vector& t, Vector& grad) {
        const auto q = gmm_unpack(t, k);
        Matrix J;
        const Vector g = sys.mean_and_jacobian(q.beta, q.sigma, std::sqrt(q.r / (1.0 - q.r)), J);
        grad = -2.0 * n * J.transpose() * (Wt * g);
        return -n * g.dot(Wt * g);
    };
    // Gauss-Newton first; BFGS only when it stalls.
    auto minimize = [&](const Vector& from) {
        auto gn = gauss_newton(sys, Wt, from, options.grad_tol);
        if (gn.converged) return gn;
        const auto res = maximize(criterion, gn.theta, options);
        return GnResult{res.argmax, gn.iterations + res.iterations, res.converged};
    };
    const auto step1 = minimize(start);

    Wt = weight_at(step1.theta);
    const auto step2 = minimize(step1.theta);

    const auto q = gmm_unpack(step2.theta, k);
    out.sfa.beta = q.beta;
    out.sfa.params = {q.sigma * std::sqrt(1.0 - q.r), q.sigma * std::sqrt(q.r)};
    out.sfa.converged = step2.converged;
    out.sfa.iterations = step1.iterations + step2.iterations;
    if (!step2.converged) out.sfa.flags.set("not_converged");
    out.moments = gbar(step2.theta);
    out.objective = n * out.moments.dot(Wt * out.moments);
    out.sfa.loglik = sfa_loglik(data, out.sfa.spec, out.sfa.beta, out.sfa.params);

    Matrix J;
    sys.mean_and_jacobian(q.beta, q.sigma, std::sqrt(q.r / (1.0 - q.r)), J);
    const Matrix info = J.transpose() * Wt * J;
    const Eigen::SelfAdjointEigenSolver<Matrix> ei(info);
    if (ei.eigenvalues().minCoeff() > 1e-12 * ei.eigenvalues().maxCoeff()) {
        const Matrix cov = info.inverse() / n;
        auto natural = [&](const Vector& t) {
            const auto p = gmm_unpack(t, k);
            Vector v(k + 2);
            v.head(k) = p.beta;
            v[k] = p.sigma * std::sqrt(1.0 - p.r);
            v[k + 1] = p.sigma * std::sqrt(p.r);
            return v;
        };
        out.sfa.se = Vector(delta_cov(natural, step2.theta, cov).diagonal().cwiseMax(0.0).cwiseSqrt());
    } else {
        out.sfa.flags.set("jacobian_rank_deficient");
    }
    return out;
}

}  // namespace sfcausal
