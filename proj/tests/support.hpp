// Shared fixtures and independent reference implementations for the tests.
// Nothing here calls into the estimation code it is used to check.
#pragma once

#include "cuimet/rng.hpp"
#include "cuimet/trial_data.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace cuimet::testing {

inline std::vector<DoseArm> make_arms(const std::vector<int>& doses, const std::vector<int>& n,
                                      const std::vector<int>& y) {
    std::vector<DoseArm> arms;
    for (std::size_t j = 0; j < doses.size(); ++j)
        arms.push_back(DoseArm{doses[j], static_cast<std::size_t>(n[j]), static_cast<std::size_t>(y[j])});
    return arms;
}

// Single-endpoint dataset with y[j] positives out of n[j] at dose j + 1.
inline TrialDataset make_dataset(const std::vector<int>& n, const std::vector<int>& y,
                                 const std::string& name = "Efficacy") {
    std::vector<PatientRecord> records;
    int id = 0;
    for (std::size_t j = 0; j < n.size(); ++j)
        for (int i = 0; i < n[j]; ++i)
            records.push_back({"p" + std::to_string(++id), static_cast<int>(j) + 1,
                               {static_cast<std::uint8_t>(i < y[j] ? 1 : 0)}});
    return TrialDataset::from_raw({name}, std::move(records));
}

// Reference marginals with their utilities rounded to three decimals.
// Rows are doses 1..5, columns 1-Tox, Eff, Tol.
struct ReferenceExample {
    std::array<std::array<double, 3>, 5> marginals;
    std::array<double, 5> um;
    std::array<double, 5> uwm1;
    std::array<double, 5> uwm2;
    std::array<double, 3> scheme1;
    std::array<double, 3> scheme2;
};

inline const std::array<ReferenceExample, 3>& reference_examples() {
    static const std::array<ReferenceExample, 3> examples = {{
        {{{{0.962, 0.022, 0.147}, {0.942, 0.119, 0.206}, {0.894, 0.343, 0.280}, {0.768, 0.568, 0.368},
           {0.467, 0.681, 0.466}}},
         {0.377, 0.422, 0.506, 0.568, 0.538},
         {0.248, 0.310, 0.434, 0.548, 0.574},
         {0.367, 0.409, 0.477, 0.528, 0.509},
         {0.2, 0.5, 0.3},
         {0.3, 0.2, 0.5}},
        {{{{0.905, 0.414, 0.285}, {0.851, 0.568, 0.653}, {0.776, 0.618, 0.760}, {0.677, 0.642, 0.804},
           {0.558, 0.657, 0.828}}},
         {0.534, 0.691, 0.718, 0.708, 0.681},
         {0.473, 0.650, 0.692, 0.698, 0.688},
         {0.584, 0.698, 0.710, 0.688, 0.652},
         {0.2, 0.5, 0.3},
         {0.4, 0.4, 0.2}},
        {{{{0.895, 0.223, 0.705}, {0.848, 0.387, 0.607}, {0.767, 0.470, 0.500}, {0.626, 0.442, 0.393},
           {0.417, 0.312, 0.295}}},
         {0.607, 0.614, 0.579, 0.487, 0.341},
         {0.502, 0.545, 0.538, 0.464, 0.328},
         {0.684, 0.660, 0.601, 0.496, 0.347},
         {0.2, 0.5, 0.3},
         {0.4, 0.2, 0.4}},
    }};
    return examples;
}

// Plain IRLS for unpenalized logistic regression on grouped binomial data
// with design columns (1, d) or (1, d, d^2). Returns the coefficients.
inline Eigen::VectorXd irls_oracle(const std::vector<DoseArm>& arms, int degree, int max_iter = 200) {
    const int p = degree + 1;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd xtwz = Eigen::VectorXd::Zero(p);
        for (const auto& a : arms) {
            Eigen::VectorXd x(p);
            for (int c = 0; c < p; ++c) x[c] = std::pow(static_cast<double>(a.dose), c);
            const double eta = x.dot(beta);
            const double mu = 1.0 / (1.0 + std::exp(-eta));
            const double w = static_cast<double>(a.n) * mu * (1.0 - mu);
            const double z = eta + (static_cast<double>(a.positives) - static_cast<double>(a.n) * mu) / w;
            xtwx += w * x * x.transpose();
            xtwz += w * z * x;
        }
        const Eigen::VectorXd next = xtwx.ldlt().solve(xtwz);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (change < 1e-13) break;
    }
    return beta;
}

// Negative binomial log-likelihood of a polynomial logit (no constant terms).
inline double logit_nll(const std::vector<DoseArm>& arms, const std::vector<double>& beta) {
    double nll = 0.0;
    for (const auto& a : arms) {
        double eta = 0.0;
        for (std::size_t c = 0; c < beta.size(); ++c) eta += beta[c] * std::pow(static_cast<double>(a.dose), static_cast<double>(c));
        // log(1 + e^eta) computed stably
        const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
        nll -= static_cast<double>(a.positives) * eta - static_cast<double>(a.n) * softplus;
    }
    return nll;
}

// Central-difference gradient, step scaled to each coordinate.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
        auto up = x, dn = x;
        up[i] += h;
        dn[i] -= h;
        g[i] = (f(up) - f(dn)) / (2.0 * h);
    }
    return g;
}

// Gradient scaled by parameter magnitude: d f / d log|x_i| by multiplicative
// central differences, falling back to a plain step for zero entries.
inline std::vector<double> fd_scaled_gradient(const std::function<double(const std::vector<double>&)>& f,
                                              const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto up = x, dn = x;
        if (x[i] != 0.0) {
            const double delta = 1e-6;
            up[i] = x[i] * std::exp(delta);
            dn[i] = x[i] * std::exp(-delta);
            g[i] = (f(up) - f(dn)) / (2.0 * delta);
        } else {
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            g[i] = (f(up) - f(dn)) / 2e-6;
        }
    }
    return g;
}

// Count-and-divide per-dose rate of the stored (positive-convention) column.
inline std::vector<double> brute_force_rates(const TrialDataset& ds, std::size_t endpoint) {
    std::vector<double> rates;
    for (int dose : ds.dose_levels()) {
        int hits = 0, total = 0;
        for (const auto& r : ds.records()) {
            if (r.dose_level != dose) continue;
            ++total;
            hits += r.outcomes[endpoint];
        }
        rates.push_back(static_cast<double>(hits) / total);
    }
    return rates;
}

// Phi by erfc; quantile by bisection, used as a slow reference.
inline double phi_reference(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Upper-tail p is reflected because 1 - p is exact there while erfc near 2 is not.
inline double quantile_bisection(double p) {
    if (p > 0.5) return -quantile_bisection(1.0 - p);
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 400 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (phi_reference(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Normal quantiles of the exact doubles below, from 50-digit arithmetic.
struct QuantileAnchor {
    double p;
    double x;
};
inline constexpr std::array<QuantileAnchor, 8> kQuantileAnchors = {{
    {1e-12, -7.0344838253011319326},
    {1e-9, -5.9978070150076868614},
    {1e-6, -4.7534243088228989573},
    {0.025, -1.9599639845400542118},
    {0.3, -0.52440051270804081597},
    {0.975, 1.9599639845400538556},
    {0.999999, 4.7534243088170877657},
    {0.999999999, 5.9978070196016374264},
}};

// Random grouped binomial data; rejects completely separated samples.
inline std::vector<DoseArm> random_arms(Rng& rng, std::size_t J, int max_n) {
    for (;;) {
        std::vector<DoseArm> arms;
        const double b0 = -2.0 + 4.0 * rng.uniform01();
        const double b1 = -1.0 + 2.0 * rng.uniform01();
        std::size_t pos = 0, total = 0;
        for (std::size_t j = 0; j < J; ++j) {
            const auto n = 5 + rng.uniform_index(static_cast<std::uint64_t>(max_n - 4));
            const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * static_cast<double>(j + 1))));
            std::size_t y = 0;
            for (std::size_t i = 0; i < n; ++i) y += rng.uniform01() < p ? 1 : 0;
            arms.push_back(DoseArm{static_cast<int>(j + 1), n, y});
            pos += y;
            total += n;
        }
        bool interior = pos > 0 && pos < total;
        // Reject complete and quasi-complete separation: some pivot dose with
        // no events below it and only events above it (or the reverse); the
        // pivot arm itself may be mixed. No finite MLE exists in that case.
        for (std::size_t pivot = 0; pivot < J && interior; ++pivot) {
            bool up = true, down = true;
            for (std::size_t j = 0; j < J; ++j) {
                if (j == pivot) continue;
                const bool none = arms[j].positives == 0, all = arms[j].positives == arms[j].n;
                up = up && (j < pivot ? none : all);
                down = down && (j < pivot ? all : none);
            }
            if (up || down) interior = false;
        }
        if (interior) return arms;
    }
}

}  // namespace cuimet::testing
