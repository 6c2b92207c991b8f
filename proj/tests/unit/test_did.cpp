#include "doctest.h"

#include "sfcausal/did_sfa.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/sfa.hpp"
#include "sfcausal/simulate.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

using namespace sfcausal;

namespace {

Dataset cells_with_means(double m00, double m10, double m01, double m11) {
    Dataset d;
    std::vector<double> y, dd, t;
    const double m[2][2] = {{m00, m01}, {m10, m11}};
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            for (double off : {-0.5, 0.0, 0.5}) {
                y.push_back(m[a][b] + off);
                dd.push_back(a);
                t.push_back(b);
            }
        }
    }
    d.add_column("y", y);
    d.add_column("d", dd);
    d.add_column("t", t);
    return d;
}

DidSfaParams example_params() {
    DidSfaParams p;
    p.beta0 = 1.0;
    p.beta1 = 0.3;
    p.beta2 = 0.2;
    p.beta3 = 0.5;
    p.gamma1 = 0.4;
    p.gamma2 = -0.2;
    p.gamma3 = -0.6;
    p.sigma_u = 0.5;
    p.sigma_v = 0.3;
    return p;
}

void check_same(const DidSfaParams& a, const DidSfaParams& b, double tol) {
    CHECK(std::abs(a.beta0 - b.beta0) <= tol);
    CHECK(std::abs(a.beta1 - b.beta1) <= tol);
    CHECK(std::abs(a.beta2 - b.beta2) <= tol);
    CHECK(std::abs(a.beta3 - b.beta3) <= tol);
    CHECK(std::abs(a.gamma1 - b.gamma1) <= tol);
    CHECK(std::abs(a.gamma2 - b.gamma2) <= tol);
    CHECK(std::abs(a.gamma3 - b.gamma3) <= tol);
    CHECK(std::abs(a.sigma_u - b.sigma_u) <= tol);
    CHECK(std::abs(a.sigma_v - b.sigma_v) <= tol);
}

Dataset with_interaction(const Dataset& data) {
    Dataset out = data;
    std::vector<double> dt(data.rows());
    for (std::size_t i = 0; i < dt.size(); ++i) dt[i] = data.column("d")[i] * data.column("t")[i];
    out.add_column("dt", std::move(dt));
    return out;
}

}  // namespace

TEST_CASE("naive_did cell-mean examples") {
    const auto r = naive_did(cells_with_means(1, 2, 3, 7));
    CHECK(r.estimate == doctest::Approx(3.0));
    CHECK(std::abs(r.ols_interaction - r.estimate) < 1e-8);
    CHECK(naive_did(cells_with_means(2, 2, 2, 2)).estimate == doctest::Approx(0.0));
}

TEST_CASE("empty cell is named in the error") {
    Dataset d;
    d.add_column("y", {1.0, 2.0, 3.0});
    d.add_column("d", {0.0, 1.0, 0.0});
    d.add_column("t", {0.0, 0.0, 1.0});
    try {
        naive_did(d);
        FAIL("expected IdentificationError");
    } catch (const IdentificationError& e) {
        CHECK(std::string(e.what()).find("cell (d=1, t=1)") != std::string::npos);
    }
    Dataset bad = cells_with_means(1, 2, 3, 4);
    auto t = bad.column("t");
    t[0] = 2.0;
    Dataset b2;
    b2.add_column("y", bad.column("y"));
    b2.add_column("d", bad.column("d"));
    b2.add_column("t", t);
    CHECK_THROWS_AS(naive_did(b2), InputError);
}

TEST_CASE("identify_did_moments inverts the analytic cell moments") {
    const auto p = example_params();
    const auto r = identify_did_moments(analytic_cell_moments(p, 10));
    check_same(r.params, p, 1e-10);
    CHECK(r.flags.empty());
}

TEST_CASE("identify_did_moments round trip on random draws") {
    std::mt19937_64 g(2024);
    std::uniform_real_distribution<double> beta(-2.0, 2.0), gam(-1.0, 1.0), scale(0.1, 2.0);
    for (int draw = 0; draw < 20; ++draw) {
        DidSfaParams p;
        p.beta0 = beta(g);
        p.beta1 = beta(g);
        p.beta2 = beta(g);
        p.beta3 = beta(g);
        p.gamma1 = gam(g);
        p.gamma2 = gam(g);
        p.gamma3 = gam(g);
        p.sigma_u = scale(g);
        p.sigma_v = scale(g);
        check_same(identify_did_moments(analytic_cell_moments(p, 5)).params, p, 1e-10);
    }
}

TEST_CASE("identify_did_moments with no cell differences") {
    DidSfaParams p;
    p.beta0 = 0.7;
    p.sigma_u = 0.4;
    p.sigma_v = 0.2;
    const auto r = identify_did_moments(analytic_cell_moments(p, 3));
    CHECK(std::abs(r.params.beta1) < 1e-12);
    CHECK(std::abs(r.params.beta2) < 1e-12);
    CHECK(std::abs(r.params.beta3) < 1e-12);
    CHECK(std::abs(r.params.gamma1) < 1e-12);
    CHECK(std::abs(r.params.gamma2) < 1e-12);
    CHECK(std::abs(r.params.gamma3) < 1e-12);
}

TEST_CASE("identify_did_moments flags a wrong-skew cell") {
    auto cm = analytic_cell_moments(example_params(), 10);
    cm.cell[1][1].m3 = 0.01;
    const auto r = identify_did_moments(cm);
    CHECK(r.flags.has("wrong_skew_d1_t1"));
    CHECK(r.flags.has("gamma_floored"));
    CHECK(std::isfinite(r.params.gamma3));
}

TEST_CASE("did_sfa_loglik collapses to the pooled saturated frontier") {
    const auto data = generate(default_design(DesignKind::did_2x2, 3, 200));
    auto p = example_params();
    p.gamma1 = p.gamma2 = p.gamma3 = 0.0;
    p.beta_x = Vector(0);
    const FrontierSpec fs{"y", {"d", "t", "dt"}, true, false};
    Vector beta(4);
    beta << p.beta0, p.beta1, p.beta2, p.beta3;
    const double pooled = sfa_loglik(with_interaction(data), fs, beta, {p.sigma_v, p.sigma_u});
    CHECK(std::abs(did_sfa_loglik(data, DidSpec{}, p) - pooled) <= 1e-10 * std::abs(pooled));
}

TEST_CASE("did_sfa_loglik is additive across cells") {
    const auto data = generate(default_design(DesignKind::did_2x2, 4, 100));
    auto p = example_params();
    p.beta_x = Vector(0);
    const auto cells = did_cells(data, DidSpec{});
    double sum = 0.0;
    for (const auto& row : cells) {
        for (const auto& rows : row) {
            // a single cell does not identify; evaluate each row directly
            for (const auto i : rows) {
                const int a = data.column("d")[i] != 0.0, b = data.column("t")[i] != 0.0;
                const double mean = p.beta0 + a * p.beta1 + b * p.beta2 + a * b * p.beta3;
                sum += composed_error_logpdf(data.column("y")[i] - mean, {p.sigma_v, p.cell_scale(a, b)});
            }
        }
    }
    CHECK(did_sfa_loglik(data, DidSpec{}, p) == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("fit_did_sfa recovers the design") {
    const auto design = default_design(DesignKind::did_2x2, 21, 4000);
    const auto data = generate(design);
    const auto truth = design_truth(design);
    const auto fit = fit_did_sfa(data);
    CHECK(fit.converged);
    CHECK(fit.decomposition.total == fit.decomposition.direct - fit.decomposition.indirect);
    for (std::size_t j = 0; j < fit.table.size(); ++j) {
        const auto& name = fit.table.names[j];
        if (!truth.count(name)) continue;
        CAPTURE(name);
        CHECK(std::isfinite(fit.table.se[j]));
        CHECK(std::abs(fit.table.values[j] - truth.at(name)) < 4.0 * fit.table.se[j]);
    }
    CHECK(fit.table.has("indirect"));
}

TEST_CASE("restricted fit equals plain saturated SFA") {
    const auto data = generate(default_design(DesignKind::did_2x2, 8, 1000));
    const auto restricted = fit_did_sfa(data, DidSpec{}, GammaRestriction::all_gammas);
    const auto plain = fit_sfa_mle(with_interaction(data), FrontierSpec{"y", {"d", "t", "dt"}, true, false});
    CHECK(std::abs(restricted.loglik - plain.loglik) < 1e-8);
    CHECK(restricted.decomposition.indirect == 0.0);
}

TEST_CASE("indirect is zero when all gammas are zero") {
    auto p = example_params();
    p.gamma1 = p.gamma2 = p.gamma3 = 0.0;
    CHECK(p.indirect() == 0.0);
}

TEST_CASE("chi-square upper tail reference values") {
    CHECK(chi_square_upper_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(chi_square_upper_tail(7.814727903251178, 3) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(chi_square_upper_tail(0.0, 3) == 1.0);
}

TEST_CASE("LR statistic is non-negative and p in range") {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto design = default_design(DesignKind::did_2x2, seed, 500);
        design.set("gamma1", 0.0);
        design.set("gamma2", 0.0);
        design.set("gamma3", 0.0);
        const auto data = generate(design);
        for (const auto r : {GammaRestriction::gamma3_only, GammaRestriction::all_gammas}) {
            const auto t = lr_test_indirect(data, DidSpec{}, r);
            CHECK(t.statistic >= 0.0);
            CHECK(t.pvalue >= 0.0);
            CHECK(t.pvalue <= 1.0);
            CHECK(t.df == (r == GammaRestriction::gamma3_only ? 1 : 3));
        }
    }
    CHECK_THROWS_AS(lr_test_indirect(generate(default_design(DesignKind::did_2x2, 1, 50)), DidSpec{},
                                     GammaRestriction::none),
                    InputError);
}

TEST_CASE("LR test rejects a strong gamma3") {
    const auto data = generate(default_design(DesignKind::did_2x2, 5, 4000));
    const auto t = lr_test_indirect(data, DidSpec{}, GammaRestriction::gamma3_only);
    CHECK(t.pvalue < 0.01);
}

TEST_CASE("mean efficiency of a half-normal matches quadrature") {
    using boost::math::quadrature::gauss_kronrod;
    for (double s : {0.1, 0.5, 1.0, 3.0}) {
        const double q = gauss_kronrod<double, 61>::integrate(
            [&](double z) { return 2.0 * std::exp(-s * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }, 0.0,
            std::numeric_limits<double>::infinity(), 15, 1e-14);
        CHECK(mean_half_normal_efficiency(s) == doctest::Approx(q).epsilon(1e-10));
    }
    CHECK(mean_half_normal_efficiency(0.0) == 1.0);
}

TEST_CASE("two-step benchmark flags omitted frontier shifts") {
    auto design = default_design(DesignKind::did_2x2, 12, 2000);
    for (const char* g : {"gamma1", "gamma2", "gamma3"}) design.set(g, 0.0);
    design.set("beta1", 0.0);
    design.set("beta2", 0.0);
    design.set("beta3", 0.8);
    const auto r = two_step_benchmark(generate(design));
    CHECK(r.flags.has("omitted_did_structure"));
    CHECK(std::isnan(r.oracle));

    auto null_design = design;
    null_design.set("beta3", 0.0);
    DidSfaParams truth;
    truth.sigma_u = null_design.param("sigma_u");
    const auto n = two_step_benchmark(generate(null_design), DidSpec{}, truth);
    CHECK(n.oracle == 0.0);
    CHECK(std::abs(n.did_on_scores) < 4.0 * n.did_on_scores_se);
}
