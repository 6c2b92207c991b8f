#include "sfcausal/simulate.hpp"

#include "sfcausal/common.hpp"
#include "sfcausal/error.hpp"
#include "sfcausal/rng.hpp"

#include <cmath>
#include <limits>
#include <thread>

namespace sfcausal {

namespace {

using Params = std::map<std::string, double>;

// Stream ids, one per random variable.
enum Stream : std::uint64_t {
    kNoise = 1,
    kIneff = 2,
    kTreat = 3,
    kEta = 4,
    kXi = 5,
    kUnit = 6,
    kType = 7,
    kRunning = 8,
    kCohort = 9,
    kInput = 100,
    kInstrument = 200,
};

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::map<DesignKind, std::pair<std::size_t, Params>>& defaults() {
    static const std::map<DesignKind, std::pair<std::size_t, Params>> table = {
        {DesignKind::cross_section_random,
         {2000, {{"beta0", 1.0}, {"beta_x1", 0.5}, {"sigma_v", 0.3}, {"sigma_u", 0.6}, {"k", 1.0}, {"cost", 0.0}}}},
        {DesignKind::two_group,
         {50000,
          {{"alpha", 1.0}, {"tau", 0.5}, {"sigma_v", 0.3}, {"sigma_u0", 0.4}, {"gamma1", 0.5}, {"p_treat", 0.5}}}},
        {DesignKind::did_2x2,
         {4000,
          {{"beta0", 1.0}, {"beta1", 0.3}, {"beta2", 0.2}, {"beta3", 0.5}, {"gamma1", 0.4}, {"gamma2", -0.2},
           {"gamma3", -0.6}, {"sigma_u", 0.5}, {"sigma_v", 0.3}}}},
        {DesignKind::staggered,
         {2000,
          {{"T", 3.0}, {"cohort_first", 2.0}, {"share_never", 0.3}, {"tech_effect", 0.5}, {"tech_growth", 0.1},
           {"cohort_het", 0.1}, {"ineff_effect", 0.4}, {"ineff_growth", 0.1}, {"ineff_time", 0.05},
           {"sigma_theta", 1.0}, {"period_trend", 0.2}, {"sigma_v", 0.3}, {"sigma_u", 0.5}}}},
        {DesignKind::rdd_sharp,
         {20000,
          {{"cutoff", 0.0}, {"halfwidth", 1.0}, {"alpha", 1.0}, {"beta1", 0.8}, {"beta2", 0.5}, {"beta3", 0.2},
           {"quad", 0.0}, {"rho0", -0.7}, {"rho1", 0.6}, {"rho2", 0.0}, {"rho3", 0.0}, {"sigma_v", 0.3}}}},
        {DesignKind::rdd_fuzzy,
         {20000,
          {{"cutoff", 0.0}, {"halfwidth", 1.0}, {"alpha", 1.0}, {"beta2", 0.5}, {"quad", 0.0},
           {"effect_complier", 1.5}, {"effect_always", 3.0}, {"share_complier", 0.6}, {"share_always", 0.2},
           {"sigma_v", 0.3}, {"sigma_u", 0.5}}}},
        {DesignKind::endogenous,
         {20000,
          {{"beta0", 1.0}, {"beta_x1", 0.5}, {"beta_x2", 0.8}, {"sigma_v", 0.4}, {"sigma_u", 0.6},
           {"corr_veta", 0.5}, {"sigma_eta", 1.0}, {"gamma", 0.5}, {"n_instruments", 2.0}, {"delta0", 0.2},
           {"delta1", 0.3}}}},
    };
    return table;
}

const std::map<std::string, DesignKind>& kind_names() {
    static const std::map<std::string, DesignKind> names = {
        {"cross_section_random", DesignKind::cross_section_random},
        {"two_group", DesignKind::two_group},
        {"did_2x2", DesignKind::did_2x2},
        {"staggered", DesignKind::staggered},
        {"rdd_sharp", DesignKind::rdd_sharp},
        {"rdd_fuzzy", DesignKind::rdd_fuzzy},
        {"endogenous", DesignKind::endogenous},
    };
    return names;
}

template <typename Fn>
void parallel_rows(std::size_t n, unsigned workers, Fn fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, n / 1024))));
    if (workers == 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = std::min(n, w * chunk);
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([=] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

int as_count(double v) { return static_cast<int>(std::lround(v)); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw InputError("invalid design: " + msg);
}

Dataset gen_cross_section(const SimDesign& d, unsigned workers) {
    const auto n = d.n;
    const int k = as_count(d.param("k"));
    const double sv = d.param("sigma_v"), su = d.param("sigma_u");
    const double sgn = d.param("cost") != 0.0 ? 1.0 : -1.0;
    std::vector<std::vector<double>> x(static_cast<std::size_t>(k), std::vector<double>(n));
    std::vector<double> y(n);
    std::vector<double> beta(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) beta[static_cast<std::size_t>(j)] = d.param("beta_x" + std::to_string(j + 1));
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff);
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double m = d.param("beta0");
            for (int j = 0; j < k; ++j) {
                const CounterRng xr(d.seed, kInput + static_cast<std::uint64_t>(j));
                x[static_cast<std::size_t>(j)][i] = xr.normal(i);
                m += beta[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)][i];
            }
            y[i] = m + sv * noise.normal(i) + sgn * su * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    for (int j = 0; j < k; ++j) out.add_column("x" + std::to_string(j + 1), std::move(x[static_cast<std::size_t>(j)]));
    return out;
}

Dataset gen_two_group(const SimDesign& d, unsigned workers) {
    const auto n = d.n;
    std::vector<double> y(n), D(n);
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff), treat(d.seed, kTreat);
    const double a = d.param("alpha"), tau = d.param("tau"), sv = d.param("sigma_v");
    const double su0 = d.param("sigma_u0"), g1 = d.param("gamma1"), p = d.param("p_treat");
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            D[i] = treat.uniform(i) < p ? 1.0 : 0.0;
            const double su = su0 * std::exp(g1 * D[i]);
            y[i] = a + tau * D[i] + sv * noise.normal(i) - su * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    out.add_column("d", std::move(D));
    return out;
}

Dataset gen_did(const SimDesign& d, unsigned workers) {
    const auto n = 4 * d.n;
    std::vector<double> y(n), D(n), T(n);
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff);
    const double b0 = d.param("beta0"), b1 = d.param("beta1"), b2 = d.param("beta2"), b3 = d.param("beta3");
    const double g1 = d.param("gamma1"), g2 = d.param("gamma2"), g3 = d.param("gamma3");
    const double su = d.param("sigma_u"), sv = d.param("sigma_v");
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t cell = i / d.n;  // (0,0), (1,0), (0,1), (1,1)
            const double di = static_cast<double>(cell & 1u), ti = static_cast<double>(cell >> 1u);
            D[i] = di;
            T[i] = ti;
            const double scale = su * std::exp(di * g1 + ti * g2 + di * ti * g3);
            y[i] = b0 + di * b1 + ti * b2 + di * ti * b3 + sv * noise.normal(i) - scale * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    out.add_column("d", std::move(D));
    out.add_column("t", std::move(T));
    return out;
}

struct StaggeredModel {
    int T;
    int first;
    double tech_effect, tech_growth, cohort_het, ineff_effect, ineff_growth, ineff_time, sigma_u;

    explicit StaggeredModel(const SimDesign& d)
        : T(as_count(d.param("T"))),
          first(as_count(d.param("cohort_first"))),
          tech_effect(d.param("tech_effect")),
          tech_growth(d.param("tech_growth")),
          cohort_het(d.param("cohort_het")),
          ineff_effect(d.param("ineff_effect")),
          ineff_growth(d.param("ineff_growth")),
          ineff_time(d.param("ineff_time")),
          sigma_u(d.param("sigma_u")) {}

    double tech(double e, int t) const {
        if (!(t >= e)) return 0.0;
        return tech_effect + tech_growth * (t - e) + cohort_het * (e - first);
    }
    double scale(double e, int t) const {
        double s = ineff_time * t;
        if (t >= e) s += ineff_effect + ineff_growth * (t - e);
        return sigma_u * std::exp(s);
    }
};

Dataset gen_staggered(const SimDesign& d, unsigned workers) {
    const StaggeredModel m(d);
    const auto units = d.n;
    const auto periods = static_cast<std::size_t>(m.T + 1);
    const auto n = units * periods;
    std::vector<double> id(n), t(n), cohort(n), D(n), y(n);
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff), unit(d.seed, kUnit), coh(d.seed, kCohort);
    const double share_never = d.param("share_never");
    const double sigma_theta = d.param("sigma_theta"), trend = d.param("period_trend"), sv = d.param("sigma_v");
    const int n_cohorts = m.T - m.first + 1;
    parallel_rows(units, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double uc = coh.uniform(i);
            double ei = kInf;
            if (uc >= share_never) {
                const double frac = (uc - share_never) / (1.0 - share_never);
                ei = m.first + std::min(n_cohorts - 1, static_cast<int>(frac * n_cohorts));
            }
            const double theta = sigma_theta * unit.normal(i);
            for (std::size_t p = 0; p < periods; ++p) {
                const std::size_t r = i * periods + p;
                const int tt = static_cast<int>(p);
                id[r] = static_cast<double>(i);
                t[r] = tt;
                cohort[r] = ei;
                D[r] = tt >= ei ? 1.0 : 0.0;
                y[r] = theta + trend * tt + m.tech(ei, tt) + sv * noise.normal(r) -
                       m.scale(ei, tt) * std::abs(ineff.normal(r));
            }
        }
    });
    Dataset out;
    out.add_column("id", std::move(id));
    out.add_column("t", std::move(t));
    out.add_column("cohort", std::move(cohort));
    out.add_column("d", std::move(D));
    out.add_column("y", std::move(y));
    return out;
}

Dataset gen_rdd_sharp(const SimDesign& d, unsigned workers) {
    const auto n = d.n;
    std::vector<double> z(n), D(n), y(n);
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff), run(d.seed, kRunning);
    const double c = d.param("cutoff"), hw = d.param("halfwidth");
    const double a = d.param("alpha"), b1 = d.param("beta1"), b2 = d.param("beta2"), b3 = d.param("beta3");
    const double q = d.param("quad"), sv = d.param("sigma_v");
    const double r0 = d.param("rho0"), r1 = d.param("rho1"), r2 = d.param("rho2"), r3 = d.param("rho3");
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            z[i] = c + hw * (2.0 * run.uniform(i) - 1.0);
            const double x = z[i] - c;
            D[i] = z[i] >= c ? 1.0 : 0.0;
            const double g = std::exp(r0 + r1 * D[i] + r2 * x + r3 * D[i] * x);
            y[i] = a + b1 * D[i] + b2 * x + b3 * D[i] * x + q * x * x + sv * noise.normal(i) -
                   g * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    out.add_column("z", std::move(z));
    out.add_column("d", std::move(D));
    return out;
}

Dataset gen_rdd_fuzzy(const SimDesign& d, unsigned workers) {
    const auto n = d.n;
    std::vector<double> z(n), D(n), y(n);
    const CounterRng noise(d.seed, kNoise), ineff(d.seed, kIneff), run(d.seed, kRunning), type(d.seed, kType);
    const double c = d.param("cutoff"), hw = d.param("halfwidth");
    const double a = d.param("alpha"), b2 = d.param("beta2"), q = d.param("quad");
    const double ec = d.param("effect_complier"), ea = d.param("effect_always");
    const double pc = d.param("share_complier"), pa = d.param("share_always");
    const double sv = d.param("sigma_v"), su = d.param("sigma_u");
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            z[i] = c + hw * (2.0 * run.uniform(i) - 1.0);
            const double x = z[i] - c;
            const double ut = type.uniform(i);
            double effect = 0.0;
            if (ut < pc) {
                D[i] = z[i] >= c ? 1.0 : 0.0;
                effect = ec;
            } else if (ut < pc + pa) {
                D[i] = 1.0;
                effect = ea;
            } else {
                D[i] = 0.0;
            }
            y[i] = a + b2 * x + q * x * x + effect * D[i] + sv * noise.normal(i) - su * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    out.add_column("z", std::move(z));
    out.add_column("d", std::move(D));
    return out;
}

Dataset gen_endogenous(const SimDesign& d, unsigned workers) {
    const auto n = d.n;
    const int m = as_count(d.param("n_instruments"));
    std::vector<double> y(n), x1(n), x2(n);
    std::vector<std::vector<double>> w(static_cast<std::size_t>(m), std::vector<double>(n));
    const CounterRng noise(d.seed, kXi), ineff(d.seed, kIneff), eta(d.seed, kEta), xr(d.seed, kInput);
    const double b0 = d.param("beta0"), b1 = d.param("beta_x1"), b2 = d.param("beta_x2");
    const double sv = d.param("sigma_v"), su = d.param("sigma_u"), rho = d.param("corr_veta");
    const double se = d.param("sigma_eta"), g = d.param("gamma"), d0 = d.param("delta0"), d1 = d.param("delta1");
    parallel_rows(n, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            x1[i] = xr.normal(i);
            double fs = d0 + d1 * x1[i];
            for (int j = 0; j < m; ++j) {
                const CounterRng wr(d.seed, kInstrument + static_cast<std::uint64_t>(j));
                w[static_cast<std::size_t>(j)][i] = wr.normal(i);
                fs += g * w[static_cast<std::size_t>(j)][i];
            }
            const double ze = eta.normal(i);
            x2[i] = fs + se * ze;
            const double v = sv * (rho * ze + std::sqrt(1.0 - rho * rho) * noise.normal(i));
            y[i] = b0 + b1 * x1[i] + b2 * x2[i] + v - su * std::abs(ineff.normal(i));
        }
    });
    Dataset out;
    out.add_column("y", std::move(y));
    out.add_column("x1", std::move(x1));
    out.add_column("x2", std::move(x2));
    for (int j = 0; j < m; ++j) out.add_column("w" + std::to_string(j + 1), std::move(w[static_cast<std::size_t>(j)]));
    return out;
}

}  // namespace

std::string_view to_string(DesignKind kind) {
    for (const auto& [name, k] : kind_names()) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::vector<std::string> design_kind_names() {
    return {"cross_section_random", "two_group", "did_2x2", "staggered", "rdd_sharp", "rdd_fuzzy", "endogenous"};
}

DesignKind parse_design_kind(std::string_view name) {
    const auto it = kind_names().find(std::string(name));
    if (it != kind_names().end()) return it->second;
    std::string msg = "unknown design '" + std::string(name) + "'; valid designs:";
    for (const auto& n : design_kind_names()) msg += " " + n;
    throw InputError(msg);
}

double SimDesign::param(const std::string& name) const {
    const auto it = params.find(name);
    if (it == params.end()) throw InputError("design parameter '" + name + "' is not set");
    return it->second;
}

void SimDesign::set(const std::string& name, double value) {
    const auto& base = defaults().at(kind).second;
    const bool dynamic = (kind == DesignKind::cross_section_random && name.rfind("beta_x", 0) == 0);
    if (!base.count(name) && !dynamic) {
        std::string msg = "design '" + std::string(to_string(kind)) + "' has no parameter '" + name + "'; valid:";
        for (const auto& [k, v] : base) msg += " " + k;
        throw InputError(msg);
    }
    params[name] = value;
    if (kind == DesignKind::cross_section_random && name == "k") {
        for (int j = 1; j <= as_count(value); ++j) params.try_emplace("beta_x" + std::to_string(j), 0.5);
    }
}

SimDesign default_design(DesignKind kind, std::uint64_t seed, std::size_t n) {
    const auto& [n0, params] = defaults().at(kind);
    SimDesign d{kind, seed, n == 0 ? n0 : n, params};
    return d;
}

void validate_design(const SimDesign& d) {
    require(d.n > 0, "n must be positive");
    for (const auto& [k, v] : d.params) require(std::isfinite(v), "parameter '" + k + "' is not finite");
    auto nonneg = [&](const char* name) { require(d.param(name) >= 0.0, std::string(name) + " must be >= 0"); };
    auto prob = [&](const char* name) {
        const double p = d.param(name);
        require(p >= 0.0 && p <= 1.0, std::string(name) + " must lie in [0, 1]");
    };
    switch (d.kind) {
        case DesignKind::cross_section_random: {
            nonneg("sigma_v");
            nonneg("sigma_u");
            const int k = as_count(d.param("k"));
            require(k >= 0 && k <= 50, "k must lie in [0, 50]");
            for (int j = 1; j <= k; ++j) (void)d.param("beta_x" + std::to_string(j));
            break;
        }
        case DesignKind::two_group:
            nonneg("sigma_v");
            nonneg("sigma_u0");
            prob("p_treat");
            break;
        case DesignKind::did_2x2:
            nonneg("sigma_v");
            nonneg("sigma_u");
            break;
        case DesignKind::staggered: {
            nonneg("sigma_v");
            nonneg("sigma_u");
            nonneg("sigma_theta");
            prob("share_never");
            const int T = as_count(d.param("T"));
            const int first = as_count(d.param("cohort_first"));
            require(T >= 1 && T <= 100, "T must lie in [1, 100]");
            require(first >= 1 && first <= T, "cohort_first must lie in [1, T]");
            break;
        }
        case DesignKind::rdd_sharp:
            nonneg("sigma_v");
            require(d.param("halfwidth") > 0.0, "halfwidth must be positive");
            break;
        case DesignKind::rdd_fuzzy:
            nonneg("sigma_v");
            nonneg("sigma_u");
            prob("share_complier");
            prob("share_always");
            require(d.param("share_complier") + d.param("share_always") <= 1.0, "type shares exceed 1");
            require(d.param("halfwidth") > 0.0, "halfwidth must be positive");
            break;
        case DesignKind::endogenous: {
            nonneg("sigma_v");
            nonneg("sigma_u");
            require(d.param("sigma_eta") > 0.0, "sigma_eta must be positive");
            require(std::abs(d.param("corr_veta")) < 1.0, "corr_veta must lie in (-1, 1)");
            const int m = as_count(d.param("n_instruments"));
            require(m >= 1 && m <= 50, "n_instruments must lie in [1, 50]");
            break;
        }
    }
}

Dataset generate(const SimDesign& design, unsigned workers) {
    validate_design(design);
    switch (design.kind) {
        case DesignKind::cross_section_random: return gen_cross_section(design, workers);
        case DesignKind::two_group: return gen_two_group(design, workers);
        case DesignKind::did_2x2: return gen_did(design, workers);
        case DesignKind::staggered: return gen_staggered(design, workers);
        case DesignKind::rdd_sharp: return gen_rdd_sharp(design, workers);
        case DesignKind::rdd_fuzzy: return gen_rdd_fuzzy(design, workers);
        case DesignKind::endogenous: return gen_endogenous(design, workers);
    }
    throw InputError("unknown design kind");
}

CellTruth staggered_cell_truth(const SimDesign& design, double cohort, int rel, double control_cohort) {
    if (design.kind != DesignKind::staggered) throw InputError("staggered_cell_truth needs a staggered design");
    const StaggeredModel m(design);
    const int t = static_cast<int>(cohort) + rel;
    const int base = static_cast<int>(cohort) - 1;
    CellTruth out;
    out.tech = (m.tech(cohort, t) - m.tech(cohort, base)) - (m.tech(control_cohort, t) - m.tech(control_cohort, base));
    out.indirect = kSqrt2OverPi * ((m.scale(cohort, t) - m.scale(cohort, base)) -
                                   (m.scale(control_cohort, t) - m.scale(control_cohort, base)));
    return out;
}

std::map<std::string, double> design_truth(const SimDesign& d) {
    std::map<std::string, double> t;
    auto copy = [&](std::initializer_list<const char*> names) {
        for (const char* n : names) t[n] = d.param(n);
    };
    auto decomposition = [&](double direct, double indirect) {
        t["direct"] = direct;
        t["indirect"] = indirect;
        t["total"] = direct - indirect;
    };
    switch (d.kind) {
        case DesignKind::cross_section_random: {
            copy({"beta0", "sigma_v", "sigma_u"});
            for (int j = 1; j <= as_count(d.param("k")); ++j) t["beta_x" + std::to_string(j)] = d.param("beta_x" + std::to_string(j));
            break;
        }
        case DesignKind::two_group: {
            copy({"alpha", "tau", "sigma_v", "sigma_u0", "gamma1"});
            decomposition(d.param("tau"), kSqrt2OverPi * d.param("sigma_u0") * (std::exp(d.param("gamma1")) - 1.0));
            t["naive_mean_difference"] = t["total"];
            break;
        }
        case DesignKind::did_2x2: {
            copy({"beta0", "beta1", "beta2", "beta3", "gamma1", "gamma2", "gamma3", "sigma_u", "sigma_v"});
            const double g1 = d.param("gamma1"), g2 = d.param("gamma2"), g3 = d.param("gamma3");
            decomposition(d.param("beta3"),
                          kSqrt2OverPi * d.param("sigma_u") * (std::exp(g1 + g2 + g3) - std::exp(g1) - std::exp(g2) + 1.0));
            t["naive_did"] = t["total"];
            break;
        }
        case DesignKind::staggered:
            copy({"tech_effect", "ineff_effect", "sigma_v", "sigma_u"});
            break;
        case DesignKind::rdd_sharp: {
            copy({"alpha", "beta1", "beta2", "beta3", "rho0", "rho1", "rho2", "rho3", "sigma_v"});
            decomposition(d.param("beta1"), kSqrt2OverPi * std::exp(d.param("rho0")) * (std::exp(d.param("rho1")) - 1.0));
            t["jump"] = t["total"];
            break;
        }
        case DesignKind::rdd_fuzzy:
            copy({"effect_complier", "share_complier"});
            t["wald"] = d.param("effect_complier");
            break;
        case DesignKind::endogenous: {
            copy({"beta0", "beta_x1", "beta_x2", "sigma_v", "sigma_u"});
            const double se = d.param("sigma_eta");
            t["fs_x2_const"] = d.param("delta0");
            t["fs_x2_x1"] = d.param("delta1");
            for (int j = 1; j <= as_count(d.param("n_instruments")); ++j) t["fs_x2_w" + std::to_string(j)] = d.param("gamma");
            t["cov_v_x2"] = d.param("corr_veta") * d.param("sigma_v") * se;
            t["cov_eta_x2_x2"] = se * se;
            break;
        }
    }
    return t;
}

}  // namespace sfcausal
