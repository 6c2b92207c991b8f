#pragma once

#include "sfcausal/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sfcausal {

enum class DesignKind { cross_section_random, two_group, did_2x2, staggered, rdd_sharp, rdd_fuzzy, endogenous };

std::string_view to_string(DesignKind kind);
// Throws InputError listing the valid names.
DesignKind parse_design_kind(std::string_view name);
std::vector<std::string> design_kind_names();

// A generative design. `n` is rows for cross sections, rows per cell for did_2x2 and
// units for staggered panels. Parameters are named; defaults come from default_design.
struct SimDesign {
    DesignKind kind = DesignKind::cross_section_random;
    std::uint64_t seed = 1;
    std::size_t n = 0;
    std::map<std::string, double> params;

    double param(const std::string& name) const;
    // Throws InputError for names that the design kind does not define.
    void set(const std::string& name, double value);
};

SimDesign default_design(DesignKind kind, std::uint64_t seed = 1, std::size_t n = 0);

// Throws InputError describing the first invalid entry.
void validate_design(const SimDesign& design);

// Deterministic in (design, seed); the output does not depend on `workers`.
Dataset generate(const SimDesign& design, unsigned workers = 1);

// Population values of the design parameters plus derived quantities
// (direct, indirect, total, naive estimands), keyed by estimator output names.
std::map<std::string, double> design_truth(const SimDesign& design);

struct CellTruth {
    double tech = 0.0;
    double indirect = 0.0;
};

// Population tech and indirect components of delta_{e,l} against a control cohort
// (infinity for never treated). Staggered designs only.
CellTruth staggered_cell_truth(const SimDesign& design, double cohort, int rel, double control_cohort);

}  // namespace sfcausal
