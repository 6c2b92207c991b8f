#include "sfcausal/staggered.hpp"

#include "sfcausal/error.hpp"
#include "sfcausal/parallel.hpp"
#include "sfcausal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

namespace sfcausal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int as_period(double v, std::size_t row) {
    if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > 1e6) {
        throw InputError("period must be an integer; row " + std::to_string(row + 1) + " has " + format_double(v));
    }
    return static_cast<int>(v);
}

std::string cohort_label(double e) { return std::isinf(e) ? std::string("never") : format_double(e); }

std::string cell_label(double e, int rel) {
    return "cell (e=" + cohort_label(e) + ", l=" + std::to_string(rel) + ")";
}

}  // namespace

CohortPanel CohortPanel::from_dataset(const Dataset& data, const PanelSpec& spec) {
    const auto& id = data.column(spec.id_col);
    const auto& t = data.column(spec.period_col);
    const auto& y = data.column(spec.outcome_col);
    const auto& e = data.column(spec.cohort_col);
    const std::vector<double>* d = data.has(spec.treatment_col) ? &data.column(spec.treatment_col) : nullptr;
    if (data.rows() == 0) throw InputError("panel is empty");

    std::map<double, std::size_t> unit_index;
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (std::size_t r = 0; r < data.rows(); ++r) {
        if (!std::isfinite(id[r])) throw InputError("unit id must be finite; row " + std::to_string(r + 1));
        unit_index.emplace(id[r], 0);
        const int p = as_period(t[r], r);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    std::size_t k = 0;
    for (auto& [key, idx] : unit_index) idx = k++;

    CohortPanel panel;
    panel.first_ = lo;
    panel.periods_ = static_cast<std::size_t>(hi - lo + 1);
    panel.cohort_.assign(unit_index.size(), kNaN);
    panel.y_.assign(unit_index.size() * panel.periods_, kNaN);
    std::vector<char> seen(panel.y_.size(), 0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const std::size_t u = unit_index.at(id[r]);
        const int p = as_period(t[r], r);
        const double c = e[r];
        if (!(std::isinf(c) && c > 0) && !(std::isfinite(c) && c == std::floor(c))) {
            throw InputError("cohort must be an integer period or empty/inf for never treated; row " +
                             std::to_string(r + 1));
        }
        if (std::isnan(panel.cohort_[u])) {
            panel.cohort_[u] = c;
        } else if (panel.cohort_[u] != c) {
            throw InputError("unit " + format_double(id[r]) + " has more than one cohort value");
        }
        if (d) {
            const double expect = p >= c ? 1.0 : 0.0;
            if ((*d)[r] != expect) {
                throw InputError("treatment is not absorbing at the cohort date for unit " + format_double(id[r]) +
                                 " (row " + std::to_string(r + 1) + ")");
            }
        }
        if (!std::isfinite(y[r])) throw InputError("outcome is missing on row " + std::to_string(r + 1));
        const std::size_t slot = u * panel.periods_ + static_cast<std::size_t>(p - lo);
        if (seen[slot]) {
            throw InputError("unit " + format_double(id[r]) + " appears twice in period " + std::to_string(p));
        }
        seen[slot] = 1;
        panel.y_[slot] = y[r];
    }
    return panel;
}

double CohortPanel::outcome(std::size_t unit, int t) const {
    if (t < first_ || t > last_period()) return kNaN;
    return y_[unit * periods_ + static_cast<std::size_t>(t - first_)];
}

std::vector<double> CohortPanel::treated_cohorts() const {
    std::set<double> s;
    for (const double c : cohort_) {
        if (std::isfinite(c)) s.insert(c);
    }
    return {s.begin(), s.end()};
}

bool CohortPanel::has_never_treated() const {
    return std::any_of(cohort_.begin(), cohort_.end(), [](double c) { return std::isinf(c); });
}

CattEstimate catt_iw_cell(const CohortPanel& panel, double cohort, int rel, double control_cohort) {
    if (!std::isfinite(cohort)) throw InputError("the treated cohort must be finite");
    if (cohort == control_cohort) throw InputError("cohort and control cohort coincide");
    const int t = static_cast<int>(cohort) + rel;
    const int base = static_cast<int>(cohort) - 1;
    if (rel == -1) throw InputError("l = -1 is the baseline period");
    if (control_cohort <= static_cast<double>(std::max(t, base))) {
        throw IdentificationError(cell_label(cohort, rel) + ": control cohort " + cohort_label(control_cohort) +
                                  " is treated by period " + std::to_string(std::max(t, base)));
    }
    double s_treat = 0.0, s_ctrl = 0.0;
    std::size_t n_treat = 0, n_ctrl = 0;
    for (std::size_t u = 0; u < panel.units(); ++u) {
        const double c = panel.cohort(u);
        const bool treated = c == cohort;
        if (!treated && c != control_cohort) continue;
        const double diff = panel.outcome(u, t) - panel.outcome(u, base);
        if (std::isnan(diff)) continue;
        if (treated) {
            s_treat += diff;
            ++n_treat;
        } else {
            s_ctrl += diff;
            ++n_ctrl;
        }
    }
    if (n_treat == 0) throw IdentificationError(cell_label(cohort, rel) + ": no cohort units observed in periods " +
                                                std::to_string(base) + " and " + std::to_string(t));
    if (n_ctrl == 0) throw IdentificationError(cell_label(cohort, rel) + ": no control units observed in periods " +
                                               std::to_string(base) + " and " + std::to_string(t));
    CattEstimate out;
    out.cohort = cohort;
    out.rel = rel;
    out.estimate = s_treat / static_cast<double>(n_treat) - s_ctrl / static_cast<double>(n_ctrl);
    out.n_cohort = n_treat;
    out.n_control = n_ctrl;
    return out;
}

CattResult catt_iw(const CohortPanel& panel, ControlGroup control, const std::vector<int>& excluded_rel) {
    auto cohorts = panel.treated_cohorts();
    CattResult res;
    if (control == ControlGroup::never_treated) {
        if (!panel.has_never_treated()) {
            throw IdentificationError("no never-treated units; use the last-treated cohort as control");
        }
        res.control_cohort = kNeverTreated;
    } else {
        if (cohorts.size() < 2) throw IdentificationError("last-treated control needs at least two adoption cohorts");
        res.control_cohort = cohorts.back();
        cohorts.pop_back();
    }
    if (cohorts.empty()) throw IdentificationError("no treated cohorts in the panel");
    const int lo = panel.first_period(), hi = panel.last_period();
    for (const double e : cohorts) {
        const int ei = static_cast<int>(e);
        if (ei - 1 < lo) {
            res.skipped.push_back("cohort " + cohort_label(e) + ": no pre-treatment baseline period");
            continue;
        }
        for (int t = lo; t <= hi; ++t) {
            const int rel = t - ei;
            if (std::find(excluded_rel.begin(), excluded_rel.end(), rel) != excluded_rel.end() || rel == -1) continue;
            if (std::isfinite(res.control_cohort) && static_cast<double>(t) >= res.control_cohort) continue;
            try {
                res.estimates.push_back(catt_iw_cell(panel, e, rel, res.control_cohort));
            } catch (const IdentificationError& err) {
                res.skipped.emplace_back(err.what());
            }
        }
    }
    return res;
}

std::vector<AuditRow> confounding_audit(const SimDesign& design, std::size_t reps, unsigned workers,
                                        ControlGroup control) {
    if (design.kind != DesignKind::staggered) throw InputError("confounding_audit needs a staggered design");
    if (reps < 2) throw InputError("confounding_audit needs at least 2 replicates");
    validate_design(design);

    std::vector<CattResult> results(reps);
    parallel_for_each(reps, workers, [&](std::size_t r) {
        SimDesign d = design;
        d.seed = replicate_seed(design.seed, r);
        results[r] = catt_iw(CohortPanel::from_dataset(generate(d)), control);
    });

    // Cells keyed by (cohort, rel) in sorted order.
    std::map<std::pair<double, int>, std::vector<double>> draws;
    double control_cohort = kNeverTreated;
    for (const auto& res : results) {
        control_cohort = res.control_cohort;
        for (const auto& c : res.estimates) draws[{c.cohort, c.rel}].push_back(c.estimate);
    }
    std::vector<AuditRow> rows;
    for (const auto& [key, v] : draws) {
        AuditRow row;
        row.cohort = key.first;
        row.rel = key.second;
        row.reps_used = v.size();
        double s = 0.0;
        for (const double x : v) s += x;
        row.mean_delta = s / static_cast<double>(v.size());
        double ss = 0.0;
        for (const double x : v) ss += (x - row.mean_delta) * (x - row.mean_delta);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : kNaN;
        row.mc_se = sd / std::sqrt(static_cast<double>(v.size()));
        const auto truth = staggered_cell_truth(design, key.first, key.second, control_cohort);
        row.true_tech = truth.tech;
        row.true_indirect = truth.indirect;
        row.gap = row.mean_delta - (truth.tech - truth.indirect);
        rows.push_back(row);
    }
    return rows;
}

void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows) {
    out << "e,l,mean_delta,true_tech,true_indirect,gap,mc_se\n";
    for (const auto& r : rows) {
        out << format_double(r.cohort) << ',' << r.rel << ',' << format_double(r.mean_delta) << ','
            << format_double(r.true_tech) << ',' << format_double(r.true_indirect) << ',' << format_double(r.gap) << ','
            << format_double(r.mc_se) << '\n';
    }
}

}  // namespace sfcausal
