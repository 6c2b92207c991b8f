#include "sfcausal/did_sfa.hpp"

#include "sfcausal/distributions.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/frontier_model.hpp"
#include "sfcausal/linalg.hpp"
#include "sfcausal/sfa.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kScaleFloor = 1e-6;

std::string cell_label(int d, int t) { return "cell (d=" + std::to_string(d) + ", t=" + std::to_string(t) + ")"; }

int binary_value(double v, const std::string& col, std::size_t row) {
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw InputError("column '" + col + "' must be binary (0/1); row " + std::to_string(row + 1) + " has " +
                     format_double(v));
}

struct DidDesign {
    Matrix X;  // [1, D, T, DT, covariates]
    Vector y;
    std::vector<std::string> names;
};

DidDesign build_design(const Dataset& data, const DidSpec& spec) {
    did_cells(data, spec);
    const std::string base[] = {spec.output_col, spec.group_col, spec.period_col};
    const Matrix ydt = design_matrix(data, base, false);
    const Matrix cov = design_matrix(data, spec.covariate_cols, false);
    const auto n = ydt.rows();
    const auto kc = cov.cols();
    DidDesign d;
    d.y = ydt.col(0);
    d.X.resize(n, 4 + kc);
    d.X.col(0).setOnes();
    d.X.col(1) = ydt.col(1);
    d.X.col(2) = ydt.col(2);
    d.X.col(3) = ydt.col(1).cwiseProduct(ydt.col(2));
    d.X.rightCols(kc) = cov;
    d.names = {"beta0", "beta1", "beta2", "beta3"};
    for (const auto& c : spec.covariate_cols) d.names.push_back("beta_" + c);
    return d;
}

Matrix scale_design(const Matrix& X, GammaRestriction r) {
    switch (r) {
        case GammaRestriction::none: return X.leftCols(4);
        case GammaRestriction::gamma3_only: return X.leftCols(3);
        case GammaRestriction::all_gammas: return X.leftCols(1);
    }
    return X.leftCols(4);
}

Eigen::Index num_gammas(GammaRestriction r) {
    switch (r) {
        case GammaRestriction::none: return 3;
        case GammaRestriction::gamma3_only: return 2;
        case GammaRestriction::all_gammas: return 0;
    }
    return 3;
}

Vector pack(const DidSfaParams& p, Eigen::Index kc, GammaRestriction r) {
    const Eigen::Index ng = num_gammas(r);
    Vector theta(4 + kc + 2 + ng);
    theta.head(4) << p.beta0, p.beta1, p.beta2, p.beta3;
    if (kc > 0) theta.segment(4, kc) = p.beta_x;
    theta[4 + kc] = std::log(p.sigma_v);
    theta[5 + kc] = std::log(p.sigma_u);
    const double g[3] = {p.gamma1, p.gamma2, p.gamma3};
    for (Eigen::Index j = 0; j < ng; ++j) theta[6 + kc + j] = g[j];
    return theta;
}

DidSfaParams unpack(const Vector& theta, Eigen::Index kc, GammaRestriction r) {
    DidSfaParams p;
    p.beta0 = theta[0];
    p.beta1 = theta[1];
    p.beta2 = theta[2];
    p.beta3 = theta[3];
    p.beta_x = theta.segment(4, kc);
    p.sigma_v = std::exp(theta[4 + kc]);
    p.sigma_u = std::exp(theta[5 + kc]);
    const Eigen::Index ng = num_gammas(r);
    double* g[3] = {&p.gamma1, &p.gamma2, &p.gamma3};
    for (Eigen::Index j = 0; j < ng; ++j) *g[j] = theta[6 + kc + j];
    return p;
}

// Cell moments of y net of the covariate contribution, summed in sorted order.
CellMoments moments_of(const Dataset& data, const DidSpec& spec, const DidDesign& d) {
    Vector yadj = d.y;
    const auto kc = static_cast<Eigen::Index>(spec.covariate_cols.size());
    if (kc > 0) {
        const auto o = ols(d.X, d.y, d.names);
        yadj -= d.X.rightCols(kc) * o.coef.tail(kc);
    }
    const auto cells = did_cells(data, spec);
    CellMoments cm;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const auto& rows = cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            Vector v(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = yadj[static_cast<Eigen::Index>(rows[i])];
            std::sort(v.data(), v.data() + v.size());
            const auto m = central_moments(v);
            cm.cell[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = {rows.size(), m.mean, m.m2, m.m3};
        }
    }
    return cm;
}

struct EngineResult {
    DidFit fit;
    Vector theta;
};

EngineResult fit_engine(const Dataset& data, const DidSpec& spec, GammaRestriction restriction,
                        const OptimOptions& options, const std::vector<DidSfaParams>& extra_starts) {
    const DidDesign d = build_design(data, spec);
    const auto kc = static_cast<Eigen::Index>(spec.covariate_cols.size());
    const auto cm = moments_of(data, spec, d);
    auto ident = identify_did_moments(cm);

    EngineResult out;
    DidFit& fit = out.fit;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            fit.cell_n[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                cm.cell[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].n;
        }
    }
    fit.flags.merge(ident.flags);

    DidSfaParams start = ident.params;
    if (kc > 0) {
        const auto o = ols(d.X, d.y, d.names);
        start.beta_x = o.coef.tail(kc);
    } else {
        start.beta_x = Vector(0);
    }
    // Keep the start strictly interior.
    if (start.sigma_u < 1e-3) start.sigma_u = 1e-3;
    if (start.sigma_v < 1e-3) start.sigma_v = 1e-3;
    if (restriction != GammaRestriction::none) {
        // Restricted start: one pooled scale, betas re-anchored to the cell means.
        if (restriction == GammaRestriction::all_gammas) {
            start.gamma1 = start.gamma2 = 0.0;
        }
        start.gamma3 = 0.0;
        const auto& c = cm.cell;
        const double k = kSqrt2OverPi;
        const double s00 = start.cell_scale(0, 0), s10 = start.cell_scale(1, 0);
        const double s01 = start.cell_scale(0, 1), s11 = start.cell_scale(1, 1);
        start.beta0 = c[0][0].mean + k * s00;
        start.beta1 = c[1][0].mean + k * s10 - start.beta0;
        start.beta2 = c[0][1].mean + k * s01 - start.beta0;
        start.beta3 = c[1][1].mean + k * s11 - start.beta0 - start.beta1 - start.beta2;
    }
    fit.start = start;

    const ScaledFrontierLikelihood model(d.X, d.y, scale_design(d.X, restriction), false);
    const auto obj = model.objective();
    auto best = maximize(obj, pack(start, kc, restriction), options);
    for (const auto& s : extra_starts) {
        DidSfaParams e = s;
        if (e.beta_x.size() != kc) e.beta_x = start.beta_x;
        auto r = maximize(obj, pack(e, kc, restriction), options);
        if ((r.converged && !best.converged) ||
            (r.converged == best.converged && r.objective_value > best.objective_value)) {
            best = std::move(r);
        }
    }
    fit.converged = best.converged;
    std::optional<Matrix> cov;
    if (best.converged) {
        fit.params = unpack(best.argmax, kc, restriction);
        fit.loglik = best.objective_value;
        out.theta = best.argmax;
        const auto h = numeric_hessian_se(obj, best.argmax);
        if (h.pd) {
            cov = h.covariance;
        } else {
            fit.flags.set("hessian_not_pd");
        }
    } else {
        fit.flags.set("not_converged");
        fit.params = start;
        out.theta = pack(start, kc, restriction);
        fit.loglik = model.loglik(out.theta);
    }

    const auto& p = fit.params;
    fit.decomposition = Decomposition::from_channels(p.beta3, p.indirect());

    auto se_of = [&](Eigen::Index j) { return cov ? std::sqrt((*cov)(j, j)) : kNaN; };
    const Eigen::Index kb = 4 + kc;
    for (Eigen::Index j = 0; j < kb; ++j) {
        fit.table.add(d.names[static_cast<std::size_t>(j)], out.theta[j], se_of(j));
    }
    fit.table.add("sigma_v", p.sigma_v, p.sigma_v * se_of(kb));
    fit.table.add("sigma_u", p.sigma_u, p.sigma_u * se_of(kb + 1));
    const Eigen::Index ng = num_gammas(restriction);
    const double g[3] = {p.gamma1, p.gamma2, p.gamma3};
    for (Eigen::Index j = 0; j < 3; ++j) {
        fit.table.add("gamma" + std::to_string(j + 1), g[j], j < ng ? se_of(kb + 2 + j) : 0.0);
    }

    double se_ind = kNaN, se_tot = kNaN;
    if (cov) {
        const auto np = out.theta.size();
        const double k = kSqrt2OverPi * p.sigma_u;
        const double e1 = std::exp(p.gamma1), e2 = std::exp(p.gamma2);
        const double e123 = std::exp(p.gamma1 + p.gamma2 + p.gamma3);
        Vector gi = Vector::Zero(np);
        gi[kb + 1] = p.indirect();
        const double dg[3] = {k * (e123 - e1), k * (e123 - e2), k * e123};
        for (Eigen::Index j = 0; j < ng; ++j) gi[kb + 2 + j] = dg[j];
        Vector gt = -gi;
        gt[3] += 1.0;
        se_ind = std::sqrt(std::max(0.0, gi.dot(*cov * gi)));
        se_tot = std::sqrt(std::max(0.0, gt.dot(*cov * gt)));
    }
    fit.table.add("direct", fit.decomposition.direct, se_of(3));
    fit.table.add("indirect", fit.decomposition.indirect, se_ind);
    fit.table.add("total", fit.decomposition.total, se_tot);
    return out;
}

}  // namespace

double DidSfaParams::indirect() const {
    return kSqrt2OverPi * sigma_u *
           (std::exp(gamma1 + gamma2 + gamma3) - std::exp(gamma1) - std::exp(gamma2) + 1.0);
}

std::array<std::array<std::vector<std::size_t>, 2>, 2> did_cells(const Dataset& data, const DidSpec& spec) {
    const auto& D = data.column(spec.group_col);
    const auto& T = data.column(spec.period_col);
    data.column(spec.output_col);
    std::array<std::array<std::vector<std::size_t>, 2>, 2> cells;
    for (std::size_t i = 0; i < D.size(); ++i) {
        const int a = binary_value(D[i], spec.group_col, i);
        const int b = binary_value(T[i], spec.period_col, i);
        cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].push_back(i);
    }
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            if (cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].empty()) {
                throw IdentificationError(cell_label(a, b) + " is empty");
            }
        }
    }
    return cells;
}

CellMoments cell_moments(const Dataset& data, const DidSpec& spec) {
    return moments_of(data, spec, build_design(data, spec));
}

CellMoments analytic_cell_moments(const DidSfaParams& p, std::size_t n_per_cell) {
    const double beta[2][2] = {{p.beta0, p.beta0 + p.beta2}, {p.beta0 + p.beta1, p.beta0 + p.beta1 + p.beta2 + p.beta3}};
    CellMoments cm;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const double s = p.cell_scale(a, b);
            auto& c = cm.cell[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            c.n = n_per_cell;
            c.mean = beta[a][b] - kSqrt2OverPi * s;
            c.m2 = p.sigma_v * p.sigma_v + kHalfNormalC2 * s * s;
            c.m3 = -kHalfNormalC3 * s * s * s;
        }
    }
    return cm;
}

NaiveDid naive_did(const Dataset& data, const DidSpec& spec) {
    const auto cells = did_cells(data, spec);
    const auto& y = data.column(spec.output_col);
    NaiveDid out;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            auto rows = cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            std::vector<double> v;
            v.reserve(rows.size());
            for (const auto i : rows) v.push_back(y[i]);
            std::sort(v.begin(), v.end());
            double s = 0.0;
            for (const double x : v) s += x;
            out.cell_means[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = s / static_cast<double>(v.size());
        }
    }
    const auto& m = out.cell_means;
    out.estimate = (m[1][1] - m[1][0]) - (m[0][1] - m[0][0]);

    DidSpec plain = spec;
    plain.covariate_cols.clear();
    const DidDesign d = build_design(data, plain);
    const auto o = ols(d.X, d.y, d.names);
    out.ols_interaction = o.coef[3];
    const double n = static_cast<double>(d.y.size());
    const double s2 = o.resid.squaredNorm() / std::max(1.0, n - 4.0);
    const Matrix xtx_inv = (d.X.transpose() * d.X).inverse();
    out.ols_se = std::sqrt(s2 * xtx_inv(3, 3));
    const double scale = std::max({1.0, std::abs(m[0][0]), std::abs(m[0][1]), std::abs(m[1][0]), std::abs(m[1][1])});
    if (std::abs(out.ols_interaction - out.estimate) > 1e-8 * scale) {
        throw LinAlgError("saturated regression disagrees with the cell-mean DiD (" + format_double(out.ols_interaction) +
                          " vs " + format_double(out.estimate) + ")");
    }
    return out;
}

DidIdentification identify_did_moments(const CellMoments& cm) {
    DidIdentification out;
    double s[2][2];
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const auto& c = cm.cell[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            if (c.n == 0) throw IdentificationError(cell_label(a, b) + " is empty");
            if (!(c.m3 < 0.0)) {
                s[a][b] = 0.0;
                out.flags.set("wrong_skew_d" + std::to_string(a) + "_t" + std::to_string(b));
            } else {
                s[a][b] = std::cbrt(-c.m3 / kHalfNormalC3);
            }
        }
    }
    const auto& c = cm.cell;
    auto log_ratio = [&](double num, double den) {
        if (num <= 0.0 || den <= 0.0) out.flags.set("gamma_floored");
        return std::log(std::max(num, kScaleFloor) / std::max(den, kScaleFloor));
    };
    auto& p = out.params;
    const double k = kSqrt2OverPi;
    p.sigma_u = s[0][0];
    p.beta0 = c[0][0].mean + k * s[0][0];
    p.gamma1 = log_ratio(s[1][0], s[0][0]);
    p.beta1 = c[1][0].mean + k * s[1][0] - p.beta0;
    p.gamma2 = log_ratio(s[0][1], s[0][0]);
    p.beta2 = c[0][1].mean + k * s[0][1] - p.beta0;
    p.gamma3 = log_ratio(s[1][1], s[0][0]) - p.gamma1 - p.gamma2;
    p.beta3 = c[1][1].mean + k * s[1][1] - p.beta0 - p.beta1 - p.beta2;

    double num = 0.0, den = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const auto& cell = c[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            const double w = static_cast<double>(cell.n);
            num += w * (cell.m2 - kHalfNormalC2 * s[a][b] * s[a][b]);
            den += w;
        }
    }
    double sv2 = num / den;
    if (sv2 < 1e-12) {
        sv2 = 1e-12;
        out.flags.set("sigma_v_floored");
    }
    p.sigma_v = std::sqrt(sv2);
    return out;
}

double did_sfa_loglik(const Dataset& data, const DidSpec& spec, const DidSfaParams& p) {
    const DidDesign d = build_design(data, spec);
    const auto kc = static_cast<Eigen::Index>(spec.covariate_cols.size());
    if (p.beta_x.size() != kc) throw InputError("did_sfa_loglik: expected " + std::to_string(kc) + " covariate coefficients");
    if (!(p.sigma_u > 0.0) || !std::isfinite(p.sigma_u)) throw DomainError("sigma_u must be positive");
    Vector beta(4 + kc);
    beta.head(4) << p.beta0, p.beta1, p.beta2, p.beta3;
    beta.tail(kc) = p.beta_x;
    const Vector resid = d.y - d.X * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
        const int a = d.X(i, 1) != 0.0;
        const int b = d.X(i, 2) != 0.0;
        total += composed_error_logpdf(resid[i], ComposedErrorParams{p.sigma_v, p.cell_scale(a, b)});
    }
    return total;
}

DidFit fit_did_sfa(const Dataset& data, const DidSpec& spec, GammaRestriction restriction, const OptimOptions& options) {
    return fit_engine(data, spec, restriction, options, {}).fit;
}

double chi_square_upper_tail(double x, double df) {
    if (!(df > 0.0)) throw DomainError("chi-square df must be positive");
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

LrTest lr_test_indirect(const Dataset& data, const DidSpec& spec, GammaRestriction restriction,
                        const OptimOptions& options) {
    if (restriction == GammaRestriction::none) throw InputError("lr_test_indirect needs gamma3_only or all_gammas");
    const auto restricted = fit_engine(data, spec, restriction, options, {}).fit;
    if (!restricted.converged) throw OptimizationError("restricted DiD-SFA fit did not converge");
    const auto unrestricted = fit_engine(data, spec, GammaRestriction::none, options, {restricted.params}).fit;
    if (!unrestricted.converged) throw OptimizationError("unrestricted DiD-SFA fit did not converge");
    LrTest t;
    t.df = restriction == GammaRestriction::gamma3_only ? 1 : 3;
    t.loglik_restricted = restricted.loglik;
    t.loglik_unrestricted = unrestricted.loglik;
    double stat = 2.0 * (unrestricted.loglik - restricted.loglik);
    if (stat < 0.0) {
        if (stat < -1e-8) {
            throw OptimizationError("restricted fit beat the unrestricted fit (LR statistic " + format_double(stat) + ")");
        }
        stat = 0.0;
    }
    t.statistic = stat;
    t.pvalue = chi_square_upper_tail(stat, t.df);
    return t;
}

double mean_half_normal_efficiency(double scale) {
    if (scale < 0.0) throw DomainError("scale must be non-negative");
    if (scale == 0.0) return 1.0;
    return std::exp(0.5 * scale * scale + std::log(2.0) + log_std_normal_cdf(-scale));
}

double did_efficiency_oracle(const DidSfaParams& p) {
    auto e = [&](int a, int b) { return mean_half_normal_efficiency(p.cell_scale(a, b)); };
    return (e(1, 1) - e(1, 0)) - (e(0, 1) - e(0, 0));
}

TwoStepReport two_step_benchmark(const Dataset& data, const DidSpec& spec, const std::optional<DidSfaParams>& truth) {
    did_cells(data, spec);
    FrontierSpec fs;
    fs.output_col = spec.output_col;
    fs.input_cols = spec.covariate_cols;
    const auto sfa = fit_sfa_mle(data, fs);
    TwoStepReport r;
    r.flags.merge(sfa.flags);
    const Vector scores = efficiency_scores(sfa, data);

    DidSpec plain = spec;
    plain.covariate_cols.clear();
    const DidDesign d = build_design(data, plain);
    const auto o = ols(d.X, scores, d.names);
    const double n = static_cast<double>(scores.size());
    const Matrix xtx_inv = (d.X.transpose() * d.X).inverse();
    const double s2 = o.resid.squaredNorm() / std::max(1.0, n - 4.0);
    r.did_on_scores = o.coef[3];
    r.did_on_scores_se = std::sqrt(s2 * xtx_inv(3, 3));

    // Frontier shifts in the outcome that the pooled first stage leaves in the residuals.
    const auto oy = ols(d.X, d.y, d.names);
    const double sy2 = oy.resid.squaredNorm() / std::max(1.0, n - 4.0);
    bool shifted = false;
    for (int j = 1; j < 4; ++j) {
        const double tj = oy.coef[j] / std::sqrt(sy2 * xtx_inv(j, j));
        if (j == 3) r.outcome_did_t = tj;
        if (std::abs(tj) > 1.96) shifted = true;
    }
    if (shifted) r.flags.set("omitted_did_structure");

    if (truth) {
        r.oracle = did_efficiency_oracle(*truth);
        r.bias = r.did_on_scores - r.oracle;
        r.ratio = r.oracle != 0.0 ? r.did_on_scores / r.oracle : kNaN;
    } else {
        r.oracle = r.bias = r.ratio = kNaN;
    }
    return r;
}

}  // namespace sfcausal
