#pragma once

#include "cuimet/trial_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cuimet {

enum class Model {
    Empirical,
    LogitLinear,
    LogitQuadratic,
    Emax,
    Exponential,
};

std::string_view to_string(Model model);
/// Accepts canonical names ("logit_linear") and short aliases ("linear").
std::optional<Model> parse_model(std::string_view name);

struct ModelKind {
    Model variant = Model::Empirical;
    /// Only consulted for the logit models; Emax and exponential curves are
    /// monotone by construction.
    bool monotone = false;

    bool operator==(const ModelKind&) const = default;
};

enum class Direction : int {
    Decreasing = -1,
    Increasing = 1,
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct FitConfig {
    int max_iterations = 500;
    /// Stop once an accepted step changes the objective by less than this.
    double convergence_tol = 1e-8;
    /// Weight of the squared monotonicity-violation penalty (logit quadratic).
    double penalty_weight = 1e4;
    int derivative_grid_points = 101;
    /// Added to empty or full cells of the stage-one log-odds.
    double continuity_correction = 0.5;
    /// Defaults to [1e-3, 1.5 * max dose] when unset.
    std::optional<Interval> ed50_bounds;
    /// Defaults to [0.1 * largest dose spacing, 10 * max dose] when unset.
    std::optional<Interval> sigma_bounds;
    /// L2 stabilizer on logit coefficients; keeps separated data finite.
    double ridge = 1e-6;

    /// Throws estimation.InvalidConfig.
    void validate() const;
};

/// Per-dose log-odds and their covariance from the intercept-free GLM with
/// one indicator per dose.
struct StageOneEstimates {
    std::vector<double> doses;
    std::vector<double> logits;
    Eigen::MatrixXd covariance;
};

struct MarginalFit {
    ModelKind model;
    /// Direction enforced during fitting, if any.
    std::optional<Direction> direction;
    /// Named parameters in model order: beta0, beta1[, beta2] | e0, emax, ed50 | e0, e1, sigma.
    std::vector<std::pair<std::string, double>> params;
    std::vector<double> doses;
    std::vector<double> fitted_probs;
    bool converged = true;
    double objective = 0.0;
    /// Bernoulli log-likelihood of fitted_probs, when fitted from patient data.
    std::optional<double> log_likelihood;
    int iterations = 0;
    bool fallback_used = false;
    /// All outcomes identical; an intercept-only (or flat) fit was returned.
    bool degenerate = false;

    /// Throws IndexOutOfRange for unknown names.
    double param(std::string_view name) const;
};

// Empirical per-dose rates.
MarginalFit estimate_empirical(const TrialDataset& dataset, std::size_t endpoint);
MarginalFit estimate_empirical(std::span<const DoseArm> arms);

// logit(P) = beta0 + beta1 * dose. With monotone = true the slope is
// direction * exp(gamma).
MarginalFit fit_logit_linear(std::span<const DoseArm> arms, bool monotone, Direction direction,
                             const FitConfig& config = {});
MarginalFit fit_logit_linear(const TrialDataset& dataset, std::size_t endpoint, bool monotone,
                             Direction direction, const FitConfig& config = {});

// logit(P) = beta0 + beta1 * dose + beta2 * dose^2. With monotone = true a
// squared penalty on derivative sign violations over an even dose grid is
// added to the negative log-likelihood.
MarginalFit fit_logit_quadratic(std::span<const DoseArm> arms, bool monotone, Direction direction,
                                const FitConfig& config = {});
MarginalFit fit_logit_quadratic(const TrialDataset& dataset, std::size_t endpoint, bool monotone,
                                Direction direction, const FitConfig& config = {});

StageOneEstimates stage_one_logodds(std::span<const DoseArm> arms, const FitConfig& config = {});
StageOneEstimates stage_one_logodds(const TrialDataset& dataset, std::size_t endpoint,
                                    const FitConfig& config = {});

// Stage-two generalized least squares on the logit scale. When `direction`
// is set the effect parameter (emax / e1) is restricted to that sign.
MarginalFit fit_emax(const StageOneEstimates& stage_one, const FitConfig& config = {},
                     std::optional<Direction> direction = std::nullopt);
MarginalFit fit_exponential(const StageOneEstimates& stage_one, const FitConfig& config = {},
                            std::optional<Direction> direction = std::nullopt);

/// Model probabilities at arbitrary doses. Throws EmpiricalHasNoCurve.
std::vector<double> predict_curve(const MarginalFit& fit, std::span<const double> dose_grid);

/// Fits one endpoint with the requested model. The toxicity endpoint (stored
/// as 1 - Toxicity) is always fitted non-increasing: logit fits are forced
/// monotone and two-stage fits restrict the effect sign.
MarginalFit fit_marginal(const TrialDataset& dataset, std::size_t endpoint, const ModelKind& kind,
                         const FitConfig& config = {});

/// Bernoulli log-likelihood of per-dose probabilities.
double binomial_log_likelihood(std::span<const DoseArm> arms, std::span<const double> probs);

double logistic(double eta);
double logit(double p);

}  // namespace cuimet
