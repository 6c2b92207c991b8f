#include "sfcausal/rdd.hpp"

#include "sfcausal/error.hpp"
#include "sfcausal/frontier_model.hpp"
#include "sfcausal/linalg.hpp"
#include "sfcausal/sfa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows inside the bandwidth, in canonical order.
struct Window {
    Vector y;
    Vector zc;
    Vector d;  // 1{z >= c}
    Matrix cov;
    std::vector<std::size_t> rows;
    std::size_t n_left = 0;
    std::size_t n_right = 0;
    double bandwidth = 0.0;
};

Window make_window(const Dataset& data, const RddSpec& spec, double h, bool check_sharp) {
    if (!(h > 0.0)) throw DomainError("bandwidth must be positive");
    const auto& z = data.column(spec.running_col);
    const auto& y = data.column(spec.outcome_col);
    const Matrix cov = design_matrix(data, spec.covariate_cols, false);
    const bool has_d = check_sharp && data.has(spec.treatment_col);
    const std::vector<double>* dcol = has_d ? &data.column(spec.treatment_col) : nullptr;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!std::isfinite(z[i])) throw InputError("running variable is missing on row " + std::to_string(i + 1));
        if (std::abs(z[i] - spec.cutoff) > h) continue;
        if (!std::isfinite(y[i])) throw InputError("outcome is missing on row " + std::to_string(i + 1));
        if (dcol) {
            const double expect = z[i] >= spec.cutoff ? 1.0 : 0.0;
            if ((*dcol)[i] != expect) {
                throw InputError("sharp design violated: row " + std::to_string(i + 1) + " has " + spec.treatment_col + "=" +
                                 format_double((*dcol)[i]) + " but z " + (expect == 1.0 ? ">=" : "<") + " cutoff");
            }
        }
        rows.push_back(i);
    }
    const auto k = cov.cols();
    Matrix key(static_cast<Eigen::Index>(rows.size()), 2 + k);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        key(static_cast<Eigen::Index>(r), 0) = z[rows[r]];
        key(static_cast<Eigen::Index>(r), 1) = y[rows[r]];
        if (k > 0) key.row(static_cast<Eigen::Index>(r)).tail(k) = cov.row(i);
    }
    const auto order = canonical_row_order(key);
    Window w;
    w.bandwidth = h;
    const auto n = static_cast<Eigen::Index>(rows.size());
    w.y.resize(n);
    w.zc.resize(n);
    w.d.resize(n);
    w.cov.resize(n, k);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto src = order[static_cast<std::size_t>(r)];
        w.rows.push_back(rows[src]);
        w.zc[r] = key(static_cast<Eigen::Index>(src), 0) - spec.cutoff;
        w.y[r] = key(static_cast<Eigen::Index>(src), 1);
        w.d[r] = w.zc[r] >= 0.0 ? 1.0 : 0.0;
        if (k > 0) w.cov.row(r) = key.row(static_cast<Eigen::Index>(src)).tail(k);
        (w.d[r] == 1.0 ? w.n_right : w.n_left)++;
    }
    return w;
}

void require_sides(const Window& w, std::size_t min_per_side) {
    if (w.n_left < min_per_side) {
        throw IdentificationError("left of the cutoff has " + std::to_string(w.n_left) + " rows in the window (need " +
                                  std::to_string(min_per_side) + ")");
    }
    if (w.n_right < min_per_side) {
        throw IdentificationError("right of the cutoff has " + std::to_string(w.n_right) + " rows in the window (need " +
                                  std::to_string(min_per_side) + ")");
    }
}

Matrix rdd_design(const Window& w) {
    const auto n = w.y.size();
    const auto k = w.cov.cols();
    Matrix X(n, 4 + k);
    X.col(0).setOnes();
    X.col(1) = w.d;
    X.col(2) = w.zc;
    X.col(3) = w.d.cwiseProduct(w.zc);
    X.rightCols(k) = w.cov;
    return X;
}

std::vector<std::string> rdd_names(const RddSpec& spec) {
    std::vector<std::string> names{"alpha", "beta1", "beta2", "beta3"};
    for (const auto& c : spec.covariate_cols) names.push_back("beta_" + c);
    return names;
}

double resolved_bandwidth(const Dataset& data, const RddSpec& spec) {
    return spec.auto_bandwidth ? bandwidth_select(data, spec) : spec.bandwidth;
}

struct JumpFit {
    double jump = 0.0;
    double se = 0.0;
};

JumpFit local_linear_jump(const Window& w, const Vector& v, const std::vector<std::string>& names) {
    const Matrix X = rdd_design(w);
    const auto o = ols(X, v, names);
    const double n = static_cast<double>(v.size());
    const double s2 = o.resid.squaredNorm() / std::max(1.0, n - static_cast<double>(X.cols()));
    const Matrix xtx_inv = (X.transpose() * X).inverse();
    return {o.coef[1], std::sqrt(s2 * xtx_inv(1, 1))};
}

SideFit side_fit(const Window& w, int side) {
    std::vector<double> z, y;
    for (Eigen::Index i = 0; i < w.y.size(); ++i) {
        if (static_cast<int>(w.d[i]) == side) {
            z.push_back(w.zc[i]);
            y.push_back(w.y[i]);
        }
    }
    Matrix X(static_cast<Eigen::Index>(z.size()), 2);
    X.col(0).setOnes();
    X.col(1) = Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size()));
    const auto o = ols(X, Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size())),
                       {"intercept", side ? "right slope" : "left slope"});
    return {o.coef[0], o.coef[1], z.size()};
}

// Rows of one side sorted by distance from the cutoff, used by the CV criterion.
struct SideData {
    std::vector<double> x;  // z - c, ascending
    std::vector<double> y;
};

}  // namespace

SrdResult srd_local_linear(const Dataset& data, const RddSpec& spec) {
    const Window w = make_window(data, spec, resolved_bandwidth(data, spec), true);
    require_sides(w, 3);
    const auto fit = local_linear_jump(w, w.y, rdd_names(spec));
    SrdResult r;
    r.jump = fit.jump;
    r.se = fit.se;
    r.left = side_fit(w, 0);
    r.right = side_fit(w, 1);
    r.bandwidth = w.bandwidth;
    r.n = static_cast<std::size_t>(w.y.size());
    if (spec.covariate_cols.empty()) {
        const double side_jump = r.right.intercept - r.left.intercept;
        const double scale = std::max({1.0, std::abs(r.right.intercept), std::abs(r.left.intercept)});
        if (std::abs(side_jump - r.jump) > 1e-8 * scale) {
            throw LinAlgError("pooled and side-specific local linear fits disagree (" + format_double(r.jump) + " vs " +
                              format_double(side_jump) + ")");
        }
    }
    return r;
}

FrdResult frd_wald(const Dataset& data, const RddSpec& spec) {
    const Window w = make_window(data, spec, resolved_bandwidth(data, spec), false);
    require_sides(w, 3);
    const auto& dcol = data.column(spec.treatment_col);
    Vector dv(w.y.size());
    for (Eigen::Index i = 0; i < dv.size(); ++i) {
        const double v = dcol[w.rows[static_cast<std::size_t>(i)]];
        if (v != 0.0 && v != 1.0) throw InputError("treatment column '" + spec.treatment_col + "' must be binary (0/1)");
        dv[i] = v;
    }
    const auto names = rdd_names(spec);
    FrdResult r;
    r.outcome_jump = local_linear_jump(w, w.y, names).jump;
    r.treatment_jump = local_linear_jump(w, dv, names).jump;
    r.bandwidth = w.bandwidth;
    r.n = static_cast<std::size_t>(w.y.size());
    if (std::abs(r.treatment_jump) < 0.05) {
        throw IdentificationError("weak first stage: treatment probability jump " + format_double(r.treatment_jump) +
                                  " (outcome jump " + format_double(r.outcome_jump) + ")");
    }
    r.wald = r.outcome_jump / r.treatment_jump;
    return r;
}

double srd_sfa_loglik(const Dataset& data, const RddSpec& spec, const Vector& frontier, double sigma_v,
                      const ScalingSpec& scaling) {
    const Window w = make_window(data, spec, spec.bandwidth, true);
    const Matrix X = rdd_design(w);
    if (frontier.size() != X.cols()) throw InputError("srd_sfa_loglik: frontier has the wrong length");
    const ComposedErrorParams base{sigma_v, 1.0};
    base.validate();
    // Sum in data order.
    std::vector<std::size_t> order(w.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w.rows[a] < w.rows[b]; });
    double total = 0.0;
    for (const auto r : order) {
        const auto i = static_cast<Eigen::Index>(r);
        const double e = w.y[i] - X.row(i).dot(frontier);
        total += composed_error_logpdf(e, {sigma_v, scaling.g(w.d[i], w.zc[i])});
    }
    return total;
}

SrdSfaFit fit_srd_sfa(const Dataset& data, const RddSpec& spec, SrdMethod method,
                      const std::optional<ScalingSpec>& start, const OptimOptions& options) {
    const Window w = make_window(data, spec, resolved_bandwidth(data, spec), true);
    require_sides(w, 10);
    const Matrix X = rdd_design(w);
    const Matrix S = X.leftCols(4);
    const auto names = rdd_names(spec);
    const auto kx = X.cols();
    const double k = kSqrt2OverPi;

    SrdSfaFit fit;
    fit.bandwidth = w.bandwidth;
    fit.n = static_cast<std::size_t>(w.y.size());

    // Side-wise COLS start.
    const auto o = ols(X, w.y, names);
    double s[2] = {0.0, 0.0}, m2[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
        std::vector<double> r;
        for (Eigen::Index i = 0; i < w.y.size(); ++i) {
            if (static_cast<int>(w.d[i]) == side) r.push_back(o.resid[i]);
        }
        const auto m = central_moments(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
        const auto inv = invert_cols_moments(m.m2, m.m3);
        if (inv.wrong_skew || inv.sigma_u < 1e-3) fit.flags.set("wrong_skew_start");
        s[side] = std::max(inv.sigma_u, 1e-3);
        m2[side] = m.m2;
    }
    ScalingSpec rho0;
    rho0.rho0 = std::log(s[0]);
    rho0.rho1 = std::log(s[1] / s[0]);
    if (start) rho0 = *start;
    Vector beta0 = o.coef;
    beta0[0] += k * rho0.g(0.0, 0.0);
    beta0[1] += k * (rho0.g(1.0, 0.0) - rho0.g(0.0, 0.0));
    const double nl = static_cast<double>(w.n_left), nr = static_cast<double>(w.n_right);
    double sv2 = (nl * (m2[0] - kHalfNormalC2 * s[0] * s[0]) + nr * (m2[1] - kHalfNormalC2 * s[1] * s[1])) / (nl + nr);
    const double floor2 = 0.01 * (nl * m2[0] + nr * m2[1]) / (nl + nr);
    sv2 = std::max(sv2, floor2);

    std::optional<Matrix> cov;
    Vector theta;
    Eigen::Index rho_at = 0;
    if (method == SrdMethod::mle) {
        const ScaledFrontierLikelihood model(X, w.y, S, false);
        Vector x0(kx + 5);
        x0.head(kx) = beta0;
        x0[kx] = 0.5 * std::log(sv2);
        x0.tail(4) << rho0.rho0, rho0.rho1, rho0.rho2, rho0.rho3;
        const auto obj = model.objective();
        const auto res = maximize(obj, x0, options);
        fit.converged = res.converged;
        theta = res.argmax;
        fit.objective = res.objective_value;
        rho_at = kx + 1;
        fit.params = {std::exp(theta[kx]), 1.0};
        if (res.converged) {
            const auto h = numeric_hessian_se(obj, theta);
            if (h.pd) {
                cov = h.covariance;
            } else {
                fit.flags.set("hessian_not_pd");
            }
        }
    } else {
        const Matrix Xs = X;
        const Vector ys = w.y;
        auto resid_and_g = [&, Xs, ys](const Vector& t, Vector& r, Vector& g) {
            g = (S * t.tail(4)).array().exp().matrix();
            r = ys - Xs * t.head(kx) + k * g;
        };
        ValueGradFn vg = [resid_and_g, Xs, S, kx, k](const Vector& t, Vector& grad) {
            Vector r, g;
            resid_and_g(t, r, g);
            grad.resize(t.size());
            grad.head(kx) = Xs.transpose() * r;
            grad.tail(4) = -k * (S.transpose() * r.cwiseProduct(g));
            return -0.5 * r.squaredNorm();
        };
        ScalarFn value = [resid_and_g](const Vector& t) {
            Vector r, g;
            resid_and_g(t, r, g);
            return -0.5 * r.squaredNorm();
        };
        const Objective obj{value, vg};
        Vector x0(kx + 4);
        x0.head(kx) = beta0;
        x0.tail(4) << rho0.rho0, rho0.rho1, rho0.rho2, rho0.rho3;
        const auto res = maximize(obj, x0, options);
        fit.converged = res.converged;
        theta = res.argmax;
        fit.objective = res.objective_value;
        rho_at = kx;
        Vector r, g;
        resid_and_g(theta, r, g);
        const double n = static_cast<double>(r.size());
        double v = r.squaredNorm() / n - kHalfNormalC2 * g.squaredNorm() / n;
        if (v < 1e-12) {
            v = 1e-12;
            fit.flags.set("sigma_v_floored");
        }
        fit.params = {std::sqrt(v), 1.0};
        if (res.converged) {
            const auto h = numeric_hessian_se(obj, theta);
            const Eigen::SelfAdjointEigenSolver<Matrix> es(-h.hessian);
            const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
            if (!h.pd || lo < 1e-10 * hi) {
                fit.flags.set("nls_weakly_identified");
            } else {
                const double s2 = r.squaredNorm() / std::max(1.0, n - static_cast<double>(theta.size()));
                cov = Matrix(h.covariance * s2);
            }
        }
    }

    if (!fit.converged) {
        fit.flags.set("not_converged");
        fit.fallback_jump = local_linear_jump(w, w.y, names).jump;
    }
    fit.frontier = theta.head(kx);
    fit.scaling = {theta[rho_at], theta[rho_at + 1], theta[rho_at + 2], theta[rho_at + 3]};
    const double g0 = fit.scaling.g(0.0, 0.0), g1 = fit.scaling.g(1.0, 0.0);
    fit.decomposition = Decomposition::from_channels(fit.frontier[1], k * (g1 - g0));

    auto se_of = [&](Eigen::Index j) { return cov ? std::sqrt((*cov)(j, j)) : kNaN; };
    for (Eigen::Index j = 0; j < kx; ++j) fit.table.add(names[static_cast<std::size_t>(j)], theta[j], se_of(j));
    fit.table.add("sigma_v", fit.params.sigma_v, method == SrdMethod::mle ? fit.params.sigma_v * se_of(kx) : kNaN);
    for (int j = 0; j < 4; ++j) fit.table.add("rho" + std::to_string(j), theta[rho_at + j], se_of(rho_at + j));
    double se_ind = kNaN, se_tot = kNaN;
    if (cov) {
        Vector gi = Vector::Zero(theta.size());
        gi[rho_at] = k * (g1 - g0);
        gi[rho_at + 1] = k * g1;
        Vector gt = -gi;
        gt[1] += 1.0;
        se_ind = std::sqrt(std::max(0.0, gi.dot(*cov * gi)));
        se_tot = std::sqrt(std::max(0.0, gt.dot(*cov * gt)));
    }
    fit.table.add("direct", fit.decomposition.direct, se_of(1));
    fit.table.add("indirect", fit.decomposition.indirect, se_ind);
    fit.table.add("total", fit.decomposition.total, se_tot);
    return fit;
}

std::vector<std::pair<double, double>> bandwidth_cv_curve(const Dataset& data, const RddSpec& spec) {
    RddSpec base = spec;
    base.covariate_cols.clear();
    const Window w = make_window(data, base, spec.bandwidth, false);
    require_sides(w, 20);

    SideData side[2];
    std::vector<double> dist;
    for (Eigen::Index i = 0; i < w.y.size(); ++i) {
        auto& s = side[static_cast<int>(w.d[i])];
        s.x.push_back(w.zc[i]);
        s.y.push_back(w.y[i]);
        dist.push_back(std::abs(w.zc[i]));
    }
    std::sort(dist.begin(), dist.end());
    auto quantile = [](const std::vector<double>& v, double p) {
        const auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(p * static_cast<double>(v.size())) - 1.0));
        return v[std::min(idx, v.size() - 1)];
    };
    std::vector<double> grid;
    for (int q = 10; q <= 100; q += 5) {
        const double h = quantile(dist, q / 100.0);
        if (h > 0.0 && (grid.empty() || h > grid.back())) grid.push_back(h);
    }

    // Prefix sums per side (rows already sorted by z then y).
    struct Prefix {
        std::vector<double> n, x, y, xx, xy;
    };
    Prefix pre[2];
    double eval_limit[2];
    for (int s = 0; s < 2; ++s) {
        const auto& sd = side[s];
        auto& p = pre[s];
        const std::size_t m = sd.x.size();
        p.n.assign(m + 1, 0.0);
        p.x = p.y = p.xx = p.xy = p.n;
        for (std::size_t i = 0; i < m; ++i) {
            p.n[i + 1] = p.n[i] + 1.0;
            p.x[i + 1] = p.x[i] + sd.x[i];
            p.y[i + 1] = p.y[i] + sd.y[i];
            p.xx[i + 1] = p.xx[i] + sd.x[i] * sd.x[i];
            p.xy[i + 1] = p.xy[i] + sd.x[i] * sd.y[i];
        }
        std::vector<double> d;
        for (const double x : sd.x) d.push_back(std::abs(x));
        std::sort(d.begin(), d.end());
        eval_limit[s] = quantile(d, 0.5);
    }

    std::vector<std::pair<double, double>> curve;
    for (const double h : grid) {
        double sse = 0.0;
        std::size_t count = 0;
        bool valid = true;
        for (int s = 0; s < 2 && valid; ++s) {
            const auto& sd = side[s];
            const auto& p = pre[s];
            const std::size_t m = sd.x.size();
            for (std::size_t i = 0; i < m; ++i) {
                if (std::abs(sd.x[i]) > eval_limit[s]) continue;
                // Left side predicts from rows further left, right side from rows further right.
                std::size_t lo, hi;
                if (s == 0) {
                    lo = static_cast<std::size_t>(std::lower_bound(sd.x.begin(), sd.x.begin() + static_cast<std::ptrdiff_t>(i),
                                                                   sd.x[i] - h) -
                                                  sd.x.begin());
                    hi = i;
                } else {
                    lo = i + 1;
                    hi = static_cast<std::size_t>(std::upper_bound(sd.x.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                                                   sd.x.end(), sd.x[i] + h) -
                                                  sd.x.begin());
                }
                const double n = p.n[hi] - p.n[lo];
                if (n < 3.0) {
                    valid = false;
                    break;
                }
                const double sx = p.x[hi] - p.x[lo], sy = p.y[hi] - p.y[lo];
                const double sxx = p.xx[hi] - p.xx[lo] - sx * sx / n;
                const double sxy = p.xy[hi] - p.xy[lo] - sx * sy / n;
                if (!(sxx > 1e-14 * n)) {
                    valid = false;
                    break;
                }
                const double b = sxy / sxx;
                const double a = (sy - b * sx) / n;
                const double e = sd.y[i] - (a + b * sd.x[i]);
                sse += e * e;
                ++count;
            }
        }
        curve.emplace_back(h, valid && count > 0 ? sse / static_cast<double>(count) : kInf);
    }
    return curve;
}

double bandwidth_select(const Dataset& data, const RddSpec& spec) {
    const auto curve = bandwidth_cv_curve(data, spec);
    const auto& y = data.column(spec.outcome_col);
    double mean = 0.0, var = 0.0;
    for (const double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (const double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    const double tie = 1e-10 * (var + 1e-300);
    double best_h = kNaN, best = kInf;
    for (const auto& [h, cv] : curve) {
        if (cv <= best + tie) {
            best = std::min(best, cv);
            best_h = h;
        }
    }
    if (std::isnan(best_h)) throw IdentificationError("no grid bandwidth leaves enough rows for the CV fits");
    return best_h;
}

}  // namespace sfcausal
