#include "sfcausal/optimizer.hpp"

#include "sfcausal/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace sfcausal {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kContraction = 0.5;
constexpr int kMaxHalvings = 60;

double tolerance(double tol, double f) { return tol * std::max(1.0, std::abs(f)); }

bool all_finite(const Vector& v) { return v.allFinite(); }

double safe_eval(const Objective& obj, const Vector& x, Vector& g) {
    try {
        const double f = obj.eval(x, g);
        if (!std::isfinite(f) || !all_finite(g)) return -std::numeric_limits<double>::infinity();
        return f;
    } catch (const EvaluationError&) {
        return -std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

double safe_value(const Objective& obj, const Vector& x) {
    try {
        const double f = obj.value(x);
        return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

Matrix gradient_hessian(const Objective& obj, const Vector& x) {
    const auto n = x.size();
    Matrix H(n, n);
    Vector gp(n), gm(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        obj.eval(xp, gp);
        obj.eval(xm, gm);
        H.col(j) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

struct RunState {
    Vector x;
    double f = 0.0;
    Vector g;
    int iterations = 0;
};

// One BFGS run on -f; returns with state at the best point reached.
RunState bfgs(const Objective& obj, const Vector& start, const OptimOptions& opt) {
    RunState s;
    s.x = start;
    s.g.resize(start.size());
    s.f = safe_eval(obj, s.x, s.g);
    if (!std::isfinite(s.f)) return s;
    const auto n = start.size();
    Matrix Hinv = Matrix::Identity(n, n);
    bool first = true;
    Vector g_new(n);
    for (; s.iterations < opt.max_iter; ++s.iterations) {
        const double gnorm = s.g.norm();
        if (gnorm <= tolerance(opt.grad_tol, s.f)) break;
        // Ascent direction for f.
        Vector p = Hinv * s.g;
        if (first) p = s.g / gnorm;
        double slope = s.g.dot(p);
        if (!(slope > 0.0)) {
            Hinv.setIdentity();
            p = s.g / gnorm;
            slope = gnorm;
        }
        double t = 1.0;
        double f_new = -std::numeric_limits<double>::infinity();
        Vector x_new;
        int halvings = 0;
        for (; halvings < kMaxHalvings; ++halvings) {
            x_new = s.x + t * p;
            f_new = safe_eval(obj, x_new, g_new);
            if (std::isfinite(f_new) && f_new >= s.f + kArmijo * t * slope) break;
            t *= kContraction;
        }
        if (halvings == kMaxHalvings) break;
        const Vector step = x_new - s.x;
        const Vector y = s.g - g_new;  // change in the gradient of -f
        s.x = x_new;
        s.f = f_new;
        s.g = g_new;
        const double curv = step.dot(y);
        if (curv > 1e-12 * step.norm() * y.norm()) {
            if (first) Hinv *= curv / y.squaredNorm();
            const double rho = 1.0 / curv;
            const Matrix I = Matrix::Identity(n, n);
            Hinv = (I - rho * step * y.transpose()) * Hinv * (I - rho * y * step.transpose()) +
                   rho * step * step.transpose();
        }
        first = false;
    }
    return s;
}

void polish(const Objective& obj, RunState& s, const OptimOptions& opt) {
    for (int it = 0; it < 8; ++it) {
        if (s.g.norm() <= 1e-3 * tolerance(opt.grad_tol, s.f)) return;
        Matrix H;
        try {
            H = gradient_hessian(obj, s.x);
        } catch (const Error&) {
            return;
        }
        if (!H.allFinite()) return;
        const Eigen::LLT<Matrix> llt(-H);
        if (llt.info() != Eigen::Success) return;
        const Vector step = llt.solve(s.g);
        Vector g_new(s.x.size());
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 10; ++k, t *= 0.5) {
            const Vector x_new = s.x + t * step;
            const double f_new = safe_eval(obj, x_new, g_new);
            if (!std::isfinite(f_new)) continue;
            const bool better_f = f_new > s.f;
            const bool flat_f = f_new >= s.f - 1e-12 * std::max(1.0, std::abs(s.f));
            if (better_f || (flat_f && g_new.norm() < s.g.norm())) {
                s.x = x_new;
                s.f = f_new;
                s.g = g_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) return;
    }
}

}  // namespace

double Objective::eval(const Vector& x, Vector& grad) const {
    if (value_and_gradient) {
        grad.resize(x.size());
        return value_and_gradient(x, grad);
    }
    grad = numeric_gradient(value, x);
    return value(x);
}

OptimResult maximize(const Objective& objective, const Vector& start, const OptimOptions& options) {
    double f0 = std::numeric_limits<double>::quiet_NaN();
    try {
        f0 = objective.value(start);
    } catch (const DomainError&) {
    }
    if (!std::isfinite(f0)) throw InputError("maximize: objective is not finite at the start point");

    OptimResult best;
    best.objective_value = -std::numeric_limits<double>::infinity();
    int total_iterations = 0;
    for (int attempt = 0; attempt <= options.restarts; ++attempt) {
        Vector x0 = start;
        if (attempt > 0) {
            for (Eigen::Index i = 0; i < x0.size(); ++i) {
                const double sign = ((i + attempt) % 2 == 0) ? 1.0 : -1.0;
                x0[i] += sign * options.restart_scale * attempt;
            }
            if (!std::isfinite(safe_value(objective, x0))) continue;
        }
        RunState s = bfgs(objective, x0, options);
        if (!std::isfinite(s.f)) continue;
        if (options.polish) polish(objective, s, options);
        total_iterations += s.iterations;
        const double gnorm = s.g.norm();
        const bool converged = gnorm <= tolerance(options.grad_tol, s.f);
        const bool improves = s.f > best.objective_value;
        if ((converged && !best.converged) || (converged == best.converged && improves)) {
            best.argmax = s.x;
            best.objective_value = s.f;
            best.gradient_norm = gnorm;
            best.converged = converged;
            best.restarts_used = attempt;
        }
        if (best.converged) break;
    }
    best.iterations = total_iterations;
    if (best.argmax.size() == 0) {
        best.argmax = start;
        best.objective_value = f0;
        best.gradient_norm = std::numeric_limits<double>::infinity();
        best.converged = false;
    }
    return best;
}

OptimResult maximize(const ScalarFn& f, const Vector& start, const OptimOptions& options) {
    return maximize(Objective{f, {}}, start, options);
}

Vector central_gradient(const ScalarFn& f, const Vector& x, double base) {
    Vector g(x.size());
    Vector xs = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = base * std::max(1.0, std::abs(x[i]));
        xs[i] = x[i] + h;
        const double fp = f(xs);
        xs[i] = x[i] - h;
        const double fm = f(xs);
        xs[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvaluationError(static_cast<long>(i),
                                  "objective is not finite at a stencil point of coordinate " +
                                      std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Vector numeric_gradient(const ScalarFn& f, const Vector& x) { return central_gradient(f, x, 1e-6); }

Vector richardson_gradient(const ScalarFn& f, const Vector& x, double base) {
    const Vector d1 = central_gradient(f, x, base);
    const Vector d2 = central_gradient(f, x, 0.5 * base);
    return (4.0 * d2 - d1) / 3.0;
}

HessianSE hessian_summary(Matrix hessian) {
    HessianSE out;
    out.hessian = std::move(hessian);
    const auto n = out.hessian.rows();
    if (n == 0 || !out.hessian.allFinite()) return out;
    const Matrix neg = -0.5 * (out.hessian + out.hessian.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(neg);
    if (eig.info() != Eigen::Success) return out;
    const Vector ev = eig.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() <= 1e-10 * scale) return out;
    out.covariance = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    out.se = out.covariance.diagonal().cwiseSqrt();
    out.pd = true;
    return out;
}

HessianSE numeric_hessian_se(const ScalarFn& f, const Vector& xhat) {
    const auto n = xhat.size();
    Matrix H(n, n);
    Vector h(n);
    for (Eigen::Index i = 0; i < n; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(xhat[i]));
    const double f0 = f(xhat);
    auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
        Vector x = xhat;
        x[i] += si * h[i];
        x[j] += sj * h[j];
        const double v = f(x);
        if (!std::isfinite(v)) {
            throw EvaluationError(static_cast<long>(i), "objective is not finite near the optimum");
        }
        return v;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        H(i, i) = (at(i, 1, i, 1) - 2.0 * f0 + at(i, -1, i, -1)) / (4.0 * h[i] * h[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) /
                             (4.0 * h[i] * h[j]);
            H(i, j) = v;
            H(j, i) = v;
        }
    }
    return hessian_summary(std::move(H));
}

HessianSE numeric_hessian_se(const Objective& objective, const Vector& xhat) {
    if (!objective.has_gradient()) return numeric_hessian_se(objective.value, xhat);
    return hessian_summary(gradient_hessian(objective, xhat));
}

Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, double base) {
    const Vector g0 = g(x);
    Matrix J(g0.size(), x.size());
    Vector xs = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = base * std::max(1.0, std::abs(x[j]));
        xs[j] = x[j] + h;
        const Vector gp = g(xs);
        xs[j] = x[j] - h;
        const Vector gm = g(xs);
        xs[j] = x[j];
        J.col(j) = (gp - gm) / (2.0 * h);
    }
    return J;
}

}  // namespace sfcausal
