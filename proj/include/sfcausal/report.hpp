#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sfcausal {

// Named estimates with optional standard errors (NaN where none is available).
struct EstimateTable {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> se;

    void add(std::string name, double value, double std_error = std::numeric_limits<double>::quiet_NaN()) {
        names.push_back(std::move(name));
        values.push_back(value);
        se.push_back(std_error);
    }

    bool has(const std::string& name) const {
        for (const auto& n : names) {
            if (n == name) return true;
        }
        return false;
    }

    double get(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return values[i];
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    double se_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return se[i];
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    std::size_t size() const { return names.size(); }
};

}  // namespace sfcausal
