#include "sfcausal/sfa.hpp"

#include "sfcausal/error.hpp"
#include "sfcausal/frontier_model.hpp"
#include "sfcausal/linalg.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <set>

namespace sfcausal {

namespace {

struct SortedDesign {
    Matrix X;
    Vector y;
};

SortedDesign sorted_design(const Dataset& data, const FrontierSpec& spec) {
    const Matrix X = design_matrix(data, spec.input_cols, spec.intercept);
    const std::string out_col[] = {spec.output_col};
    const Vector y = design_matrix(data, out_col, false).col(0);
    Matrix all(y.size(), 1 + X.cols());
    all << y, X;
    const auto order = canonical_row_order(all);
    SortedDesign s{Matrix(X.rows(), X.cols()), Vector(y.size())};
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
        s.X.row(i) = X.row(r);
        s.y[i] = y[r];
    }
    return s;
}

void require_rows(const Dataset& data, const FrontierSpec& spec) {
    const auto k = spec.input_cols.size() + (spec.intercept ? 1 : 0);
    if (data.rows() < k + 3) {
        throw InputError("need at least " + std::to_string(k + 3) + " rows, got " +
                         std::to_string(data.rows()));
    }
}

}  // namespace

void FrontierSpec::validate(const Dataset& data) const {
    (void)data.column(output_col);
    std::set<std::string> seen;
    for (const auto& c : input_cols) {
        (void)data.column(c);
        if (!seen.insert(c).second) throw InputError("input column '" + c + "' listed twice");
        if (c == output_col) throw InputError("output column '" + c + "' also listed as an input");
    }
}

std::vector<std::string> FrontierSpec::coef_names() const {
    std::vector<std::string> names;
    if (intercept) names.emplace_back("beta0");
    for (const auto& c : input_cols) names.push_back("beta_" + c);
    return names;
}

Vector frontier_residuals(const Dataset& data, const FrontierSpec& spec, const Vector& beta) {
    spec.validate(data);
    const Matrix X = design_matrix(data, spec.input_cols, spec.intercept);
    if (beta.size() != X.cols()) throw InputError("beta has the wrong length");
    const Vector y = data.column_vector(spec.output_col);
    const Vector r = y - X * beta;
    return spec.cost_frontier ? Vector(-r) : r;
}

double sfa_loglik(const Dataset& data, const FrontierSpec& spec, const Vector& beta,
                  const ComposedErrorParams& p) {
    p.validate();
    const Vector eps = frontier_residuals(data, spec, beta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < eps.size(); ++i) total += composed_error_logpdf(eps[i], p);
    return total;
}

ColsMoments invert_cols_moments(double m2, double m3) {
    ColsMoments out;
    if (m3 < 0.0) {
        out.sigma_u = std::cbrt(-m3 / kHalfNormalC3);
    } else {
        out.wrong_skew = true;
    }
    out.sigma_v2 = m2 - kHalfNormalC2 * out.sigma_u * out.sigma_u;
    if (out.sigma_v2 < 1e-12) {
        out.sigma_v2 = 1e-12;
        out.sigma_v_floored = true;
    }
    return out;
}

SfaFit fit_sfa_cols(const Dataset& data, const FrontierSpec& spec) {
    spec.validate(data);
    require_rows(data, spec);
    const auto d = sorted_design(data, spec);
    const auto fit = ols(d.X, d.y, spec.coef_names());
    const double sgn = spec.cost_frontier ? -1.0 : 1.0;
    const auto m = central_moments(sgn * fit.resid);
    const auto inv = invert_cols_moments(m.m2, m.m3);

    SfaFit out;
    out.spec = spec;
    out.n = data.rows();
    out.beta = fit.coef;
    if (spec.intercept) {
        out.beta[0] += sgn * kSqrt2OverPi * inv.sigma_u;
    } else if (inv.sigma_u > 0.0) {
        out.flags.set("no_intercept_correction");
    }
    out.params = ComposedErrorParams{std::sqrt(inv.sigma_v2), inv.sigma_u};
    if (inv.wrong_skew) out.flags.set("wrong_skew");
    if (inv.sigma_v_floored) out.flags.set("sigma_v_floored");
    out.loglik = sfa_loglik(data, spec, out.beta, out.params);
    return out;
}

SfaFit fit_sfa_mle(const Dataset& data, const FrontierSpec& spec, const OptimOptions& options) {
    const SfaFit cols = fit_sfa_cols(data, spec);
    const auto d = sorted_design(data, spec);
    const ScaledFrontierLikelihood model(d.X, d.y, Matrix::Ones(d.y.size(), 1), spec.cost_frontier);

    SfaFit out;
    out.spec = spec;
    out.n = data.rows();
    double su0 = cols.params.sigma_u;
    if (cols.flags.has("wrong_skew") || su0 < 1e-3) {
        su0 = 1e-3;
        out.flags.set("wrong_skew_start");
    }
    const double m2 = cols.params.sigma_v * cols.params.sigma_v + kHalfNormalC2 * su0 * su0;
    const double sv0 = std::max(cols.params.sigma_v, 0.1 * std::sqrt(m2));

    const auto k = d.X.cols();
    Vector start(k + 2);
    start.head(k) = cols.beta;
    start[k] = std::log(sv0);
    start[k + 1] = std::log(su0);

    const auto obj = model.objective();
    const auto res = maximize(obj, start, options);
    out.beta = res.argmax.head(k);
    out.params = ComposedErrorParams{std::exp(res.argmax[k]), std::exp(res.argmax[k + 1])};
    out.loglik = res.objective_value;
    out.converged = res.converged;
    out.iterations = res.iterations;
    if (!res.converged) out.flags.set("not_converged");

    const auto h = numeric_hessian_se(obj, res.argmax);
    if (h.pd) {
        Vector se = h.se;
        se[k] *= out.params.sigma_v;
        se[k + 1] *= out.params.sigma_u;
        out.se = se;
    } else {
        out.flags.set("hessian_not_pd");
    }
    return out;
}

Vector conditional_mean_u(const Vector& eps, const ComposedErrorParams& p) {
    p.validate();
    Vector out = Vector::Zero(eps.size());
    if (p.sigma_u == 0.0) return out;
    const double sv2 = p.sigma_v * p.sigma_v;
    const double su2 = p.sigma_u * p.sigma_u;
    const double s2 = sv2 + su2;
    const double sd_star = p.sigma_u * p.sigma_v / std::sqrt(s2);
    using boost::math::quadrature::gauss;
    constexpr int kPieces = 8;
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        const double e = eps[i];
        const double mode = std::max(0.0, -e * su2 / s2);
        auto log_kernel = [&](double u) { return -0.5 * (e + u) * (e + u) / sv2 - 0.5 * u * u / su2; };
        const double peak = log_kernel(mode);
        const double lo = std::max(0.0, mode - 12.0 * sd_star);
        const double hi = mode + 12.0 * sd_star;
        const double width = (hi - lo) / kPieces;
        auto dens = [&](double u) { return std::exp(log_kernel(u) - peak); };
        auto first = [&](double u) { return u * std::exp(log_kernel(u) - peak); };
        double den = 0.0, num = 0.0;
        for (int k = 0; k < kPieces; ++k) {
            const double a = lo + k * width;
            const double b = (k + 1 == kPieces) ? hi : a + width;
            den += gauss<double, 30>::integrate(dens, a, b);
            num += gauss<double, 30>::integrate(first, a, b);
        }
        out[i] = num / den;
    }
    return out;
}

Vector efficiency_scores(const SfaFit& fit, const Dataset& data) {
    const Vector eps = frontier_residuals(data, fit.spec, fit.beta);
    return (-conditional_mean_u(eps, fit.params).array()).exp().matrix();
}

}  // namespace sfcausal
