#include "doctest.h"

#include "sfcausal/error.hpp"
#include "sfcausal/optimizer.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace sfcausal;

TEST_CASE("maximize: one-dimensional quadratic") {
    const auto r = maximize([](const Vector& x) { return -(x[0] - 3.0) * (x[0] - 3.0); }, Vector::Zero(1));
    CHECK(r.converged);
    CHECK(std::abs(r.argmax[0] - 3.0) <= 1e-6);
    CHECK(r.gradient_norm <= 1e-6 * std::max(1.0, std::abs(r.objective_value)));
}

TEST_CASE("maximize: anisotropic quadratic") {
    Vector start(2);
    start << 1.0, 1.0;
    const auto r = maximize([](const Vector& x) { return -x[0] * x[0] - 10.0 * x[1] * x[1]; }, start);
    CHECK(r.converged);
    CHECK(std::abs(r.argmax[0]) <= 1e-6);
    CHECK(std::abs(r.argmax[1]) <= 1e-6);
}

TEST_CASE("maximize: Rosenbrock with analytic gradient") {
    Objective f;
    f.value = [](const Vector& x) {
        return -(100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2));
    };
    f.value_and_gradient = [&](const Vector& x, Vector& g) {
        g.resize(2);
        g[0] = 400.0 * x[0] * (x[1] - x[0] * x[0]) + 2.0 * (1.0 - x[0]);
        g[1] = -200.0 * (x[1] - x[0] * x[0]);
        return f.value(x);
    };
    Vector start(2);
    start << -1.2, 1.0;
    const auto r = maximize(f, start);
    CHECK(r.converged);
    CHECK(std::abs(r.argmax[0] - 1.0) <= 1e-6);
    CHECK(std::abs(r.argmax[1] - 1.0) <= 1e-6);
}

TEST_CASE("maximize rejects a non-finite start") {
    const auto f = [](const Vector& x) { return x[0] > 0 ? -x[0] : std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(maximize(f, Vector::Constant(1, -1.0)), InputError);
}

TEST_CASE("maximize reports non-convergence instead of succeeding silently") {
    OptimOptions opt;
    opt.max_iter = 2;
    opt.polish = false;
    opt.restarts = 1;
    Vector start(2);
    start << -1.2, 1.0;
    const auto r = maximize(
        [](const Vector& x) { return -(100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2)); },
        start, opt);
    CHECK_FALSE(r.converged);
}

TEST_CASE("maximize is deterministic") {
    const auto f = [](const Vector& x) { return -std::cosh(x[0] - 0.3) - (x[1] + 2.0) * (x[1] + 2.0) * (1.0 + x[0] * x[0]); };
    Vector start(2);
    start << 2.0, 2.0;
    const auto a = maximize(f, start);
    const auto b = maximize(f, start);
    CHECK(a.argmax == b.argmax);
    CHECK(a.objective_value == b.objective_value);
}

TEST_CASE("property: maximize is invariant to shifting the argument") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int rep = 0; rep < 20; ++rep) {
        Vector c(3), center(3), start(3);
        for (int i = 0; i < 3; ++i) {
            c[i] = u(gen);
            center[i] = u(gen);
            start[i] = u(gen);
        }
        const auto f = [center](const Vector& x) {
            const Vector d = x - center;
            return -(d[0] * d[0] + 3.0 * d[1] * d[1] + 0.5 * d[2] * d[2] + d[0] * d[1]) - 0.1 * std::pow(d[2], 4);
        };
        const auto g = [&](const Vector& x) { return f(x + c); };
        const auto ra = maximize(f, start);
        const auto rb = maximize(g, Vector(start - c));
        CHECK(((ra.argmax - (rb.argmax + c)).cwiseAbs().maxCoeff()) <= 1e-6);
    }
}

TEST_CASE("numeric_gradient examples") {
    Vector x(2);
    x << 1.0, 2.0;
    const Vector g = numeric_gradient([](const Vector& v) { return v.squaredNorm(); }, x);
    CHECK(std::abs(g[0] - 2.0) <= 1e-7);
    CHECK(std::abs(g[1] - 4.0) <= 1e-7);
    const Vector z = numeric_gradient([](const Vector&) { return 5.0; }, x);
    CHECK(z.isZero(0.0));
}

TEST_CASE("numeric_gradient reports the offending coordinate") {
    Vector x(3);
    x << 0.5, 1.0, 1e-9;
    const auto f = [](const Vector& v) { return v[2] > 0 ? std::log(v[2]) : std::numeric_limits<double>::quiet_NaN(); };
    try {
        numeric_gradient(f, x);
        FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
        CHECK(e.coordinate() == 2);
    }
}

TEST_CASE("numeric_gradient relative accuracy on smooth functions") {
    std::mt19937_64 gen(19);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        Vector x(3);
        for (int i = 0; i < 3; ++i) x[i] = u(gen);
        const auto f = [](const Vector& v) { return std::exp(0.3 * v[0]) * std::sin(v[1]) + v[2] * v[2] * v[0]; };
        Vector exact(3);
        exact[0] = 0.3 * std::exp(0.3 * x[0]) * std::sin(x[1]) + x[2] * x[2];
        exact[1] = std::exp(0.3 * x[0]) * std::cos(x[1]);
        exact[2] = 2.0 * x[2] * x[0];
        const Vector g = numeric_gradient(f, x);
        CHECK((g - exact).norm() <= 1e-5 * std::max(1.0, exact.norm()));
        const Vector r = richardson_gradient(f, x);
        CHECK((r - exact).norm() <= 1e-8 * std::max(1.0, exact.norm()));
    }
}

TEST_CASE("numeric_hessian_se: Gaussian mean") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> z(2.0, 1.5);
    const int n = 1000;
    Vector data(n);
    for (int i = 0; i < n; ++i) data[i] = z(gen);
    const double sigma = 1.5;
    const auto f = [&](const Vector& m) { return -0.5 * (data.array() - m[0]).square().sum() / (sigma * sigma); };
    const auto r = maximize(f, Vector::Zero(1));
    const auto h = numeric_hessian_se(f, r.argmax);
    REQUIRE(h.pd);
    CHECK(std::abs(h.se[0] / (sigma / std::sqrt(n)) - 1.0) <= 0.05);
}

TEST_CASE("numeric_hessian_se flags a flat direction") {
    const auto f = [](const Vector& x) { return -(x[0] - 1.0) * (x[0] - 1.0); };
    Vector x(2);
    x << 1.0, 0.0;
    const auto h = numeric_hessian_se(f, x);
    CHECK_FALSE(h.pd);
    CHECK(h.se.size() == 0);
}
