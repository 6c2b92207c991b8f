#pragma once

#include "sfcausal/dataset.hpp"
#include "sfcausal/simulate.hpp"

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace sfcausal {

inline constexpr double kNeverTreated = std::numeric_limits<double>::infinity();

struct PanelSpec {
    std::string id_col = "id";
    std::string period_col = "t";
    std::string outcome_col = "y";
    std::string cohort_col = "cohort";
    // Optional treatment indicator; when present it must equal 1{t >= cohort}.
    std::string treatment_col = "d";
};

// Balanced or unbalanced panel indexed by unit and integer period.
class CohortPanel {
public:
    static CohortPanel from_dataset(const Dataset& data, const PanelSpec& spec = {});

    std::size_t units() const { return cohort_.size(); }
    int first_period() const { return first_; }
    int last_period() const { return first_ + static_cast<int>(periods_) - 1; }
    double cohort(std::size_t unit) const { return cohort_[unit]; }
    // NaN when the unit is not observed in period t.
    double outcome(std::size_t unit, int t) const;
    // Finite adoption cohorts in increasing order.
    std::vector<double> treated_cohorts() const;
    bool has_never_treated() const;

private:
    int first_ = 0;
    std::size_t periods_ = 0;
    std::vector<double> cohort_;
    std::vector<double> y_;  // unit-major, periods_ per unit
};

enum class ControlGroup { never_treated, last_treated };

struct CattEstimate {
    double cohort = 0.0;
    int rel = 0;
    double estimate = 0.0;
    std::size_t n_cohort = 0;
    std::size_t n_control = 0;
};

struct CattResult {
    std::vector<CattEstimate> estimates;
    // One message per requested cell that could not be estimated.
    std::vector<std::string> skipped;
    double control_cohort = kNeverTreated;
};

// delta_{e,l}: mean over cohort-e units of (Y_{e+l} - Y_{e-1}) minus the same mean over
// control units. Throws IdentificationError naming the cell when either side is empty.
CattEstimate catt_iw_cell(const CohortPanel& panel, double cohort, int rel, double control_cohort);

// All estimable cells with l not in `excluded_rel`. With last_treated control the last
// cohort serves as control and only periods before its adoption are used.
CattResult catt_iw(const CohortPanel& panel, ControlGroup control = ControlGroup::never_treated,
                   const std::vector<int>& excluded_rel = {-1});

struct AuditRow {
    double cohort = 0.0;
    int rel = 0;
    double mean_delta = 0.0;
    double true_tech = 0.0;
    double true_indirect = 0.0;
    double gap = 0.0;
    double mc_se = 0.0;
    std::size_t reps_used = 0;
};

std::vector<AuditRow> confounding_audit(const SimDesign& design, std::size_t reps, unsigned workers = 1,
                                        ControlGroup control = ControlGroup::never_treated);

void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows);

}  // namespace sfcausal
