#pragma once

#include "cuimet/rng.hpp"
#include "cuimet/trial_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cuimet {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against normal_cdf. Throws simulation.OutOfDomain outside (0, 1).
double inverse_normal_cdf(double p);

/// Synthetic trial design. target_probs is J x K; for the toxicity endpoint
/// it holds the event probability P(Toxicity = 1).
struct ScenarioSpec {
    std::vector<int> doses;
    int n_per_dose = 30;
    std::vector<std::string> endpoint_names;
    Eigen::MatrixXd target_probs;
    Eigen::MatrixXd correlation;
    std::uint64_t seed = 0;

    /// Throws simulation.InvalidScenario or simulation.NotPositiveSemiDefinite.
    void validate() const;
};

enum class BuiltinScenario {
    Example1,  // every endpoint improves with dose, toxicity climbs sharply
    Example2,  // efficacy and tolerability plateau
    Example3,  // concave efficacy, declining tolerability
};

std::optional<BuiltinScenario> parse_builtin(std::string_view name);
std::string_view to_string(BuiltinScenario scenario);

/// Five doses, 30 patients per dose, independent Toxicity/Efficacy/Tolerability.
/// Targets are approximate fixtures.
ScenarioSpec builtin_scenario(BuiltinScenario scenario, std::uint64_t seed = 0);

/// Lower-triangular factor L with L L^T = correlation. Zero pivots are
/// allowed so singular (e.g. perfectly correlated) matrices factor exactly.
Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& correlation);

/// count x K standard normal draws with the given correlation.
Eigen::MatrixXd sample_mvn(const Eigen::MatrixXd& correlation, std::size_t count, Rng& rng);

/// Thresholds correlated latents: Y = 1 iff latent < inverse_normal_cdf(p).
/// Each dose arm draws from its own stream, so arms are independent of the
/// order in which they are generated. Output is in the raw column convention.
TrialDataset simulate_dataset(const ScenarioSpec& spec);

/// Plain-text scenario format (key = value lines plus matrix blocks).
std::string write_scenario(const ScenarioSpec& spec);
ScenarioSpec parse_scenario(std::string_view text);

}  // namespace cuimet
