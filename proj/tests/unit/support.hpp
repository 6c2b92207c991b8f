#pragma once

#include "sfcausal/dataset.hpp"

#include <cmath>
#include <random>

namespace testsupport {

// y = b0 + b1 x1 + v - u, drawn with the standard library generator (independent of sfcausal's RNG).
inline sfcausal::Dataset frontier_sample(std::uint64_t seed, std::size_t n, double b0, double b1,
                                         double sigma_v, double sigma_u) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = z(gen);
        const double v = sigma_v * z(gen);
        const double u = sigma_u * std::abs(z(gen));
        y[i] = b0 + b1 * x[i] + v - u;
    }
    sfcausal::Dataset d;
    d.add_column("y", std::move(y));
    d.add_column("x1", std::move(x));
    return d;
}

}  // namespace testsupport
