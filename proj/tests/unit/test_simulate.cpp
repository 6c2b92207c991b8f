#include "doctest.h"

#include "sfcausal/common.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/rng.hpp"
#include "sfcausal/simulate.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace sfcausal;

namespace {

std::string csv_of(const Dataset& d) {
    std::ostringstream os;
    d.write_csv(os);
    return os.str();
}

}  // namespace

TEST_CASE("mix64 has no collisions on consecutive inputs") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 20000; ++i) seen.insert(mix64(i));
    CHECK(seen.size() == 20000);
}

TEST_CASE("replicate_seed is injective over replicates") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t r = 0; r < 10000; ++r) seen.insert(replicate_seed(42, r));
    CHECK(seen.size() == 10000);
}

TEST_CASE("CounterRng draws are pure functions of the counter") {
    const CounterRng a(7, 3), b(7, 3), c(7, 4);
    int differ = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        CHECK(a.bits(i) == b.bits(i));
        differ += a.bits(i) != c.bits(i);
        const double u = a.uniform(i);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
    CHECK(differ == 1000);
}

TEST_CASE("CounterRng normal draws have unit moments") {
    const CounterRng g(11, 1);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = g.normal(static_cast<std::uint64_t>(i));
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    const double m = s1 / n;
    CHECK(std::abs(m) < 5.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("design names round trip and unknown names are rejected") {
    for (const auto& name : design_kind_names()) CHECK(to_string(parse_design_kind(name)) == name);
    try {
        parse_design_kind("nope");
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("did_2x2") != std::string::npos);
    }
}

TEST_CASE("SimDesign::set rejects unknown parameters") {
    auto d = default_design(DesignKind::did_2x2, 1, 10);
    CHECK_THROWS_AS(d.set("sigma_w", 1.0), InputError);
    d.set("gamma3", 0.0);
    CHECK(d.param("gamma3") == 0.0);
}

TEST_CASE("validate_design rejects negative scales and empty samples") {
    auto d = default_design(DesignKind::cross_section_random, 1, 100);
    d.set("sigma_u", -0.1);
    CHECK_THROWS_AS(validate_design(d), InputError);
    auto e = default_design(DesignKind::two_group, 1, 0);
    e.n = 0;
    CHECK_THROWS_AS(validate_design(e), InputError);
}

TEST_CASE("generate is independent of the worker count") {
    for (const auto& name : design_kind_names()) {
        CAPTURE(name);
        const auto d = default_design(parse_design_kind(name), 5, 300);
        const auto one = csv_of(generate(d, 1));
        CHECK(one == csv_of(generate(d, 4)));
        CHECK(one == csv_of(generate(d, 3)));
        auto other = d;
        other.seed = 6;
        CHECK(one != csv_of(generate(other, 1)));
    }
}

TEST_CASE("cross-section residual moments match the half-normal composed error") {
    const auto d = default_design(DesignKind::cross_section_random, 3, 200000);
    const auto data = generate(d, 2);
    const auto& y = data.column("y");
    const auto& x = data.column("x1");
    const double b0 = d.param("beta0"), b1 = d.param("beta_x1");
    const double sv = d.param("sigma_v"), su = d.param("sigma_u");
    const double n = static_cast<double>(y.size());
    double m = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) m += y[i] - b0 - b1 * x[i];
    m /= n;
    double c2 = 0.0, c3 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - b0 - b1 * x[i] - m;
        c2 += e * e;
        c3 += e * e * e;
    }
    c2 /= n;
    c3 /= n;
    const double var = sv * sv + (1.0 - 2.0 / M_PI) * su * su;
    CHECK(std::abs(m + std::sqrt(2.0 / M_PI) * su) < 5.0 * std::sqrt(var / n));
    CHECK(std::abs(c2 - var) < 0.02 * var);
    const double third = -std::sqrt(2.0 / M_PI) * (4.0 / M_PI - 1.0) * su * su * su;
    CHECK(std::abs(c3 - third) < 0.1 * std::abs(third));
}

TEST_CASE("did_2x2 has n rows per cell") {
    const auto d = default_design(DesignKind::did_2x2, 2, 250);
    const auto data = generate(d);
    const auto& D = data.column("d");
    const auto& T = data.column("t");
    int counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < data.rows(); ++i) counts[static_cast<int>(D[i])][static_cast<int>(T[i])]++;
    for (auto& row : counts) {
        for (int c : row) CHECK(c == 250);
    }
}

TEST_CASE("design truth decomposition identity") {
    for (const auto kind : {DesignKind::two_group, DesignKind::did_2x2, DesignKind::rdd_sharp}) {
        const auto t = design_truth(default_design(kind));
        CHECK(t.at("total") == t.at("direct") - t.at("indirect"));
    }
    const auto t = design_truth(default_design(DesignKind::did_2x2));
    const double expect = 0.5 - std::sqrt(2.0 / M_PI) * 0.5 * (std::exp(-0.4) - std::exp(0.4) - std::exp(-0.2) + 1.0);
    CHECK(t.at("naive_did") == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("staggered cell truth is zero against itself") {
    const auto d = default_design(DesignKind::staggered);
    const auto c = staggered_cell_truth(d, 2.0, 0, 2.0);
    CHECK(c.tech == 0.0);
    CHECK(c.indirect == 0.0);
    const auto never = staggered_cell_truth(d, 2.0, 0, std::numeric_limits<double>::infinity());
    CHECK(never.tech == doctest::Approx(d.param("tech_effect")));
}
