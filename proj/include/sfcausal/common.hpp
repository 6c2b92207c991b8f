#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace sfcausal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// sqrt(2/pi): mean of a unit Half-Normal.
inline constexpr double kSqrt2OverPi = 0.79788456080286535588;

/// Var(u) / sigma_u^2 for Half-Normal u.
inline constexpr double kHalfNormalC2 = 1.0 - 2.0 / std::numbers::pi;

/// Third central moment of Half-Normal u divided by sigma_u^3.
inline constexpr double kHalfNormalC3 =
    std::numbers::sqrt2 * (4.0 - std::numbers::pi) /
    (std::numbers::pi * 1.77245385090551602730);  // pi^{3/2} = pi * sqrt(pi)

/// Treatment effect split into a frontier (direct) channel and an
/// inefficiency (indirect) channel. total == direct - indirect by construction.
struct Decomposition {
    double total = 0.0;
    double direct = 0.0;
    double indirect = 0.0;

    static Decomposition from_channels(double direct, double indirect) {
        return Decomposition{direct - indirect, direct, indirect};
    }
};

/// Ordered set of diagnostic flags attached to fit results.
class Flags {
public:
    void set(std::string_view name) {
        if (!has(name)) names_.emplace_back(name);
    }
    bool has(std::string_view name) const {
        return std::find(names_.begin(), names_.end(), name) != names_.end();
    }
    void merge(const Flags& other) {
        for (const auto& n : other.names_) set(n);
    }
    bool empty() const { return names_.empty(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
};

}  // namespace sfcausal
