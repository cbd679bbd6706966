#include "cuimet/utility.hpp"

#include "cuimet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cuimet {

namespace {

void check_marginals(const Eigen::MatrixXd& marginals) {
    if (marginals.cols() == 0)
        throw Error(Module::Utility, ErrorCode::DimensionMismatch, "marginal matrix has no endpoints");
    for (Eigen::Index j = 0; j < marginals.rows(); ++j)
        for (Eigen::Index k = 0; k < marginals.cols(); ++k) {
            const double p = marginals(j, k);
            if (!(p >= 0.0 && p <= 1.0))
                throw Error(Module::Utility, ErrorCode::OutOfDomain,
                            "marginal probability at dose row " + std::to_string(j + 1) + ", endpoint " +
                                std::to_string(k + 1) + " is outside [0, 1]");
        }
}

}  // namespace

std::string_view to_string(Metric metric) { return metric == Metric::UM ? "um" : "uwm"; }

NormalizedWeights normalize_weights(const WeightScheme& scheme) {
    if (scheme.raw_weights.empty())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch, "weight scheme is empty");
    double total = 0.0;
    for (std::size_t k = 0; k < scheme.raw_weights.size(); ++k) {
        const double w = scheme.raw_weights[k];
        if (!(w >= 0.0 && w <= 5.0))
            throw Error(Module::Utility, ErrorCode::WeightOutOfRange,
                        "weight " + std::to_string(k + 1) + " = " + std::to_string(w) + " is outside [0, 5]");
        total += w;
    }
    if (!(total > 0.0)) throw Error(Module::Utility, ErrorCode::AllZeroWeights, "all endpoint weights are zero");
    NormalizedWeights out;
    out.weights.reserve(scheme.raw_weights.size());
    for (double w : scheme.raw_weights) out.weights.push_back(w / total);
    return out;
}

std::vector<double> compute_um(const Eigen::MatrixXd& marginals) {
    check_marginals(marginals);
    const double k = static_cast<double>(marginals.cols());
    std::vector<double> um(static_cast<std::size_t>(marginals.rows()));
    for (Eigen::Index j = 0; j < marginals.rows(); ++j) um[static_cast<std::size_t>(j)] = marginals.row(j).sum() / k;
    return um;
}

std::vector<double> compute_uwm(const Eigen::MatrixXd& marginals, const NormalizedWeights& weights) {
    check_marginals(marginals);
    if (static_cast<std::size_t>(marginals.cols()) != weights.weights.size())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch,
                    "got " + std::to_string(weights.weights.size()) + " weights for " +
                        std::to_string(marginals.cols()) + " endpoints");
    const auto& w = weights.weights;
    if (std::all_of(w.begin(), w.end(), [&](double v) { return v == w.front(); })) return compute_um(marginals);

    std::vector<double> uwm(static_cast<std::size_t>(marginals.rows()), 0.0);
    for (Eigen::Index j = 0; j < marginals.rows(); ++j) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < marginals.cols(); ++k) s += weights.weights[static_cast<std::size_t>(k)] * marginals(j, k);
        // Convex combination; clamp the last-ulp overshoot.
        uwm[static_cast<std::size_t>(j)] = std::clamp(s, 0.0, 1.0);
    }
    return uwm;
}

ObdSelection select_obd(std::span<const double> utilities, std::span<const int> doses) {
    if (utilities.empty())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch, "no utilities to select from");
    if (!doses.empty() && doses.size() != utilities.size())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch, "doses and utilities differ in length");
    const auto level = [&](std::size_t j) { return doses.empty() ? static_cast<int>(j + 1) : doses[j]; };

    std::vector<std::size_t> order(utilities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (utilities[a] != utilities[b]) return utilities[a] > utilities[b];
        return level(a) < level(b);
    });

    const double best = utilities[order.front()];
    ObdSelection sel;
    std::size_t chosen = order.front();
    std::size_t tied = 0;
    for (std::size_t j = 0; j < utilities.size(); ++j) {
        if (best - utilities[j] <= kTieTolerance) {
            ++tied;
            if (level(j) < level(chosen)) chosen = j;
        }
    }
    sel.obd = level(chosen);
    sel.tie = tied > 1;
    sel.ranking.reserve(order.size());
    for (std::size_t j : order) sel.ranking.push_back(level(j));
    return sel;
}

UtilityTable build_utility_table(std::vector<int> doses, Eigen::MatrixXd marginals,
                                 const NormalizedWeights& weights, Metric metric) {
    if (static_cast<std::size_t>(marginals.rows()) != doses.size())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch, "marginal rows do not match dose levels");
    UtilityTable t;
    t.um = compute_um(marginals);
    t.uwm = compute_uwm(marginals, weights);
    t.doses = std::move(doses);
    t.marginals = std::move(marginals);
    t.metric = metric;
    const auto sel = select_obd(metric == Metric::UM ? t.um : t.uwm, t.doses);
    t.obd = sel.obd;
    t.ranking = sel.ranking;
    t.tie = sel.tie;
    return t;
}

}  // namespace cuimet
