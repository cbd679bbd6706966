#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

namespace cuimet {

/// Raw endpoint importances on the 0..5 slider scale.
struct WeightScheme {
    std::vector<double> raw_weights;
};

struct NormalizedWeights {
    std::vector<double> weights;
};

enum class Metric {
    UM,
    UWM,
};

std::string_view to_string(Metric metric);

struct ObdSelection {
    int obd = 0;
    /// Dose levels by decreasing utility; equal utilities keep dose order.
    std::vector<int> ranking;
    bool tie = false;
};

/// Per-dose CUI summary. `marginals` is J x K (dose x endpoint) in the
/// positive-outcome convention.
struct UtilityTable {
    std::vector<int> doses;
    Eigen::MatrixXd marginals;
    std::vector<double> um;
    std::vector<double> uwm;
    Metric metric = Metric::UWM;
    std::vector<int> ranking;
    int obd = 0;
    bool tie = false;
};

/// Utilities within this distance of the maximum count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// Throws utility.WeightOutOfRange outside [0, 5] and utility.AllZeroWeights.
NormalizedWeights normalize_weights(const WeightScheme& scheme);

std::vector<double> compute_um(const Eigen::MatrixXd& marginals);
std::vector<double> compute_uwm(const Eigen::MatrixXd& marginals, const NormalizedWeights& weights);

/// argmax with ties broken to the lowest dose. `doses` defaults to 1..J.
ObdSelection select_obd(std::span<const double> utilities, std::span<const int> doses = {});

UtilityTable build_utility_table(std::vector<int> doses, Eigen::MatrixXd marginals,
                                 const NormalizedWeights& weights, Metric metric);

}  // namespace cuimet
