#include "sfcausal/random_assignment.hpp"

#include "sfcausal/distributions.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/frontier_model.hpp"
#include "sfcausal/linalg.hpp"
#include "sfcausal/sfa.hpp"

#include <cmath>
#include <limits>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double delta_se(const Matrix& cov, const Vector& grad) {
    const double v = grad.dot(cov * grad);
    return v >= 0.0 ? std::sqrt(v) : kNaN;
}

struct Design {
    Matrix X;  // [1, D, x, D*x]
    Vector y;
    Vector D;
};

Design build_design(const Dataset& data, const TwoGroupSpec& spec) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto k = static_cast<Eigen::Index>(spec.input_cols.size());
    const Matrix x = design_matrix(data, spec.input_cols, false);
    const std::string cols[] = {spec.output_col, spec.treatment_col};
    const Matrix yd = design_matrix(data, cols, false);
    Design d;
    d.y = yd.col(0);
    d.D = yd.col(1);
    d.X.resize(n, 2 + k + (spec.group_specific_beta ? k : 0));
    d.X.col(0).setOnes();
    d.X.col(1) = d.D;
    d.X.middleCols(2, k) = x;
    if (spec.group_specific_beta) d.X.rightCols(k) = x.array().colwise() * d.D.array();
    return d;
}

std::vector<std::string> coef_names(const TwoGroupSpec& spec) {
    std::vector<std::string> names{"alpha", "tau"};
    if (spec.group_specific_beta) {
        for (const auto& c : spec.input_cols) names.push_back("beta0_" + c);
        for (const auto& c : spec.input_cols) names.push_back("dbeta_" + c);
    } else {
        for (const auto& c : spec.input_cols) names.push_back("beta_" + c);
    }
    return names;
}

void fill_betas(TwoGroupParams& p, const Vector& coef, const TwoGroupSpec& spec) {
    const auto k = static_cast<Eigen::Index>(spec.input_cols.size());
    p.alpha = coef[0];
    p.tau = coef[1];
    p.beta0 = coef.segment(2, k);
    p.beta1 = spec.group_specific_beta ? Vector(p.beta0 + coef.segment(2 + k, k)) : p.beta0;
}

}  // namespace

GroupSplit split_groups(const Dataset& data, const std::string& treatment_col) {
    const auto& d = data.column(treatment_col);
    GroupSplit g;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) {
            g.control.push_back(i);
        } else if (d[i] == 1.0) {
            g.treated.push_back(i);
        } else {
            throw InputError("treatment column '" + treatment_col + "' must be binary (0/1); row " +
                             std::to_string(i + 1) + " has " + format_double(d[i]));
        }
    }
    if (g.control.empty()) throw IdentificationError("control group (" + treatment_col + "=0) is empty");
    if (g.treated.empty()) throw IdentificationError("treated group (" + treatment_col + "=1) is empty");
    return g;
}

double two_group_loglik(const Dataset& data, const TwoGroupSpec& spec, const TwoGroupParams& p) {
    split_groups(data, spec.treatment_col);
    const ComposedErrorParams c0{p.sigma_v, p.sigma_u0};
    const ComposedErrorParams c1{p.sigma_v, p.sigma_u1()};
    c0.validate();
    const auto& y = data.column(spec.output_col);
    const auto& D = data.column(spec.treatment_col);
    const Matrix x = design_matrix(data, spec.input_cols, false);
    const auto k = x.cols();
    if (p.beta0.size() != k || p.beta1.size() != k) throw InputError("two_group_loglik: beta length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (D[i] == 0.0) {
            total += composed_error_logpdf(y[i] - p.alpha - x.row(r).dot(p.beta0), c0);
        } else {
            total += composed_error_logpdf(y[i] - p.alpha - p.tau - x.row(r).dot(p.beta1), c1);
        }
    }
    return total;
}

double naive_mean_difference(const Dataset& data, const std::string& output_col, const std::string& treatment_col) {
    const auto g = split_groups(data, treatment_col);
    const auto& y = data.column(output_col);
    double s0 = 0.0, s1 = 0.0;
    for (const auto i : g.control) s0 += y[i];
    for (const auto i : g.treated) s1 += y[i];
    return s1 / static_cast<double>(g.treated.size()) - s0 / static_cast<double>(g.control.size());
}

TwoGroupFit fit_two_group(const Dataset& data, const TwoGroupSpec& spec, TwoGroupMethod method,
                          const OptimOptions& options) {
    const auto groups = split_groups(data, spec.treatment_col);
    if (groups.control.size() < 4 || groups.treated.size() < 4) {
        throw IdentificationError("each group needs at least 4 rows (control " + std::to_string(groups.control.size()) +
                                  ", treated " + std::to_string(groups.treated.size()) + ")");
    }
    const auto names = coef_names(spec);
    const Design d = build_design(data, spec);

    // COLS: OLS with group dummies, then group-wise moment inversion.
    Matrix all(d.y.size(), 1 + d.X.cols());
    all << d.y, d.X;
    const auto order = canonical_row_order(all);
    Matrix Xs(d.X.rows(), d.X.cols());
    Vector ys(d.y.size()), Ds(d.y.size());
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
        Xs.row(i) = d.X.row(r);
        ys[i] = d.y[r];
        Ds[i] = d.D[r];
    }
    const auto o = ols(Xs, ys, names);
    TwoGroupFit fit;
    fit.n0 = groups.control.size();
    fit.n1 = groups.treated.size();
    const double n = static_cast<double>(fit.n0 + fit.n1);
    double su[2] = {0.0, 0.0};
    double sv2 = 0.0;
    for (int g = 0; g < 2; ++g) {
        std::vector<double> r;
        for (Eigen::Index i = 0; i < ys.size(); ++i) {
            if (Ds[i] == static_cast<double>(g)) r.push_back(o.resid[i]);
        }
        const auto m = central_moments(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
        const auto inv = invert_cols_moments(m.m2, m.m3);
        if (inv.wrong_skew) fit.flags.set(g == 0 ? "wrong_skew_control" : "wrong_skew_treated");
        su[g] = inv.sigma_u;
        sv2 += static_cast<double>(r.size()) / n * (m.m2 - kHalfNormalC2 * su[g] * su[g]);
    }
    if (sv2 < 1e-12) {
        sv2 = 1e-12;
        fit.flags.set("sigma_v_floored");
    }
    Vector coef = o.coef;
    coef[0] += kSqrt2OverPi * su[0];
    coef[1] += kSqrt2OverPi * (su[1] - su[0]);
    TwoGroupParams cols;
    fill_betas(cols, coef, spec);
    cols.sigma_v = std::sqrt(sv2);
    cols.sigma_u0 = su[0];
    if (su[0] > 0.0 && su[1] > 0.0) {
        cols.gamma1 = std::log(su[1] / su[0]);
    } else {
        cols.gamma1 = std::log(std::max(su[1], 1e-6) / std::max(su[0], 1e-6));
        fit.flags.set("gamma1_floored");
    }

    const auto kc = d.X.cols();
    std::optional<Matrix> cov;
    if (method == TwoGroupMethod::cols) {
        fit.params = cols;
        fit.loglik = cols.sigma_u0 > 0.0 ? two_group_loglik(data, spec, cols) : kNaN;
    } else {
        const ScaledFrontierLikelihood model(d.X, d.y, d.X.leftCols(2), false);
        Vector start(kc + 3);
        start.head(kc) = coef;
        start[kc] = std::log(cols.sigma_v);
        const double su0 = std::max(su[0], 1e-3), su1 = std::max(su[1], 1e-3);
        start[kc + 1] = std::log(su0);
        start[kc + 2] = std::log(su1 / su0);
        const auto obj = model.objective();
        const auto res = maximize(obj, start, options);
        fit.converged = res.converged;
        if (!res.converged) fit.flags.set("not_converged");
        TwoGroupParams p;
        fill_betas(p, res.argmax.head(kc), spec);
        p.sigma_v = std::exp(res.argmax[kc]);
        p.sigma_u0 = std::exp(res.argmax[kc + 1]);
        p.gamma1 = res.argmax[kc + 2];
        fit.params = p;
        fit.loglik = res.objective_value;
        const auto h = numeric_hessian_se(obj, res.argmax);
        if (h.pd) {
            cov = h.covariance;
        } else {
            fit.flags.set("hessian_not_pd");
        }
    }

    const auto& p = fit.params;
    // COLS keeps the raw group scales, which stay meaningful when one of them is zero.
    const double su1 = method == TwoGroupMethod::cols ? su[1] : p.sigma_u1();
    const double indirect = kSqrt2OverPi * (su1 - p.sigma_u0);
    fit.decomposition = Decomposition::from_channels(p.tau, indirect);

    auto se_of = [&](Eigen::Index j) { return cov ? std::sqrt((*cov)(j, j)) : kNaN; };
    Vector c(kc);
    c[0] = p.alpha;
    c[1] = p.tau;
    const auto k = static_cast<Eigen::Index>(spec.input_cols.size());
    c.segment(2, k) = p.beta0;
    if (spec.group_specific_beta) c.segment(2 + k, k) = p.beta1 - p.beta0;
    for (Eigen::Index j = 0; j < kc; ++j) fit.table.add(names[static_cast<std::size_t>(j)], c[j], se_of(j));
    fit.table.add("sigma_v", p.sigma_v, p.sigma_v * se_of(kc));
    fit.table.add("sigma_u0", p.sigma_u0, p.sigma_u0 * se_of(kc + 1));
    fit.table.add("gamma1", p.gamma1, se_of(kc + 2));
    double se_su1 = kNaN, se_direct = kNaN, se_indirect = kNaN, se_total = kNaN;
    if (cov) {
        // gradients with respect to (log sigma_u0, gamma1)
        Vector g1 = Vector::Zero(kc + 3);
        g1[kc + 1] = p.sigma_u1();
        g1[kc + 2] = p.sigma_u1();
        Vector gi = Vector::Zero(kc + 3);
        gi[kc + 1] = indirect;
        gi[kc + 2] = kSqrt2OverPi * p.sigma_u1();
        Vector gt = -gi;
        gt[1] = 1.0;
        se_su1 = delta_se(*cov, g1);
        se_direct = se_of(1);
        se_indirect = delta_se(*cov, gi);
        se_total = delta_se(*cov, gt);
    }
    fit.table.add("sigma_u1", su1, se_su1);
    fit.table.add("direct", fit.decomposition.direct, se_direct);
    fit.table.add("indirect", fit.decomposition.indirect, se_indirect);
    fit.table.add("total", fit.decomposition.total, se_total);
    return fit;
}

}  // namespace sfcausal
