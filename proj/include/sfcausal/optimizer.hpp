#pragma once

#include "sfcausal/common.hpp"

#include <functional>

namespace sfcausal {

using ScalarFn = std::function<double(const Vector&)>;
// Returns f(x) and writes the gradient into the second argument.
using ValueGradFn = std::function<double(const Vector&, Vector&)>;

// An objective to maximize. value_and_gradient is optional; numeric gradients are used without it.
struct Objective {
    ScalarFn value;
    ValueGradFn value_and_gradient;

    double operator()(const Vector& x) const { return value(x); }
    double eval(const Vector& x, Vector& grad) const;
    bool has_gradient() const { return static_cast<bool>(value_and_gradient); }
};

struct OptimOptions {
    double grad_tol = 1e-6;
    int max_iter = 500;
    int restarts = 3;
    // Newton steps on a finite-difference Hessian after BFGS stops.
    bool polish = true;
    double restart_scale = 0.1;
};

struct OptimResult {
    Vector argmax;
    double objective_value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    int restarts_used = 0;
    bool converged = false;
};

// BFGS ascent with Armijo backtracking. Throws InputError when f(start) is not finite.
OptimResult maximize(const Objective& objective, const Vector& start, const OptimOptions& options = {});
OptimResult maximize(const ScalarFn& f, const Vector& start, const OptimOptions& options = {});

// Central differences, h_i = 1e-6 * max(1, |x_i|). Throws EvaluationError on a non-finite stencil value.
Vector numeric_gradient(const ScalarFn& f, const Vector& x);

// Central differences with step h_i = base * max(1, |x_i|).
Vector central_gradient(const ScalarFn& f, const Vector& x, double base);

// Half-step Richardson extrapolation of central differences.
Vector richardson_gradient(const ScalarFn& f, const Vector& x, double base = 1e-4);

struct HessianSE {
    Matrix hessian;
    Matrix covariance;  // inverse negative Hessian; empty unless pd
    Vector se;          // empty unless pd
    bool pd = false;
};

HessianSE numeric_hessian_se(const ScalarFn& f, const Vector& xhat);
// Uses the analytic gradient when the objective provides one.
HessianSE numeric_hessian_se(const Objective& objective, const Vector& xhat);

// Covariance summary from an already computed Hessian of the objective.
HessianSE hessian_summary(Matrix hessian);

// Finite-difference Jacobian of a vector function, column j = d g / d x_j.
Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x,
                        double base = 1e-6);

}  // namespace sfcausal
