#pragma once

// Damped Newton minimizer for the small (2-3 parameter) likelihood problems
// in estimation.cpp. Internal header.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cuimet::detail {

struct NewtonResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

// `objective(x, grad, hess)` returns f(x); grad/hess are filled when non-null.
// Levenberg damping keeps the step a descent direction where the Hessian is
// indefinite (the exponentiated-slope parameterization is not convex).
// Converged once an accepted step changes f by less than `tol` and the
// gradient is small, or the gradient vanishes outright.
template <class Objective>
NewtonResult minimize_newton(Objective&& objective, Eigen::VectorXd x0, int max_iterations, double tol) {
    const Eigen::Index n = x0.size();
    Eigen::VectorXd g(n);
    Eigen::MatrixXd H(n, n);
    NewtonResult res;
    res.x = std::move(x0);
    res.value = objective(res.x, &g, &H);
    if (!std::isfinite(res.value)) return res;

    const auto grad_small = [&](double f) { return g.lpNorm<Eigen::Infinity>() <= 1e-7 * (1.0 + std::abs(f)); };

    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        if (g.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + std::abs(res.value))) {
            res.converged = true;
            return res;
        }

        // Levenberg-damped Newton direction.
        Eigen::VectorXd step;
        double mu = 0.0;
        const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::MatrixXd Hd = H;
            Hd.diagonal().array() += mu;
            Eigen::LLT<Eigen::MatrixXd> llt(Hd);
            if (llt.info() == Eigen::Success) {
                step = llt.solve(-g);
                if (step.allFinite() && g.dot(step) < 0.0) break;
            }
            step.resize(0);
            mu = (mu == 0.0) ? 1e-10 * scale : mu * 10.0;
        }
        if (step.size() == 0) step = -g / scale;

        // Armijo backtracking.
        const double slope = g.dot(step);
        double t = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + t * step;
            f_new = objective(x_new, nullptr, nullptr);
            if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No further decrease is representable; accept the point if it is stationary.
            res.converged = grad_small(res.value);
            return res;
        }

        const double decrease = res.value - f_new;
        res.x = x_new;
        res.value = objective(res.x, &g, &H);
        if (decrease < tol && grad_small(res.value)) {
            res.converged = true;
            return res;
        }
    }
    res.converged = false;
    return res;
}

}  // namespace cuimet::detail
