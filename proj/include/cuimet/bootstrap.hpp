#pragma once

#include "cuimet/estimation.hpp"
#include "cuimet/rng.hpp"
#include "cuimet/trial_data.hpp"
#include "cuimet/utility.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cuimet {

enum class FitFailurePolicy {
    /// The failing endpoint falls back to empirical rates for that replicate.
    FallbackEmpirical,
    /// The whole replicate is dropped from CIs and %OBD.
    ExcludeReplicate,
};

std::string_view to_string(FitFailurePolicy policy);

struct BootstrapConfig {
    int replicates = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    FitFailurePolicy fit_failure_policy = FitFailurePolicy::FallbackEmpirical;
    /// Worker threads; 0 uses the hardware concurrency. Results do not depend on it.
    unsigned threads = 1;
    FitConfig fit;

    /// Throws bootstrap.InvalidConfig.
    void validate() const;
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;

    bool operator==(const ConfidenceInterval&) const = default;
};

struct BootstrapResult {
    std::vector<int> doses;
    std::vector<ConfidenceInterval> um_ci;
    std::vector<ConfidenceInterval> uwm_ci;
    std::vector<double> um_mean;
    std::vector<double> uwm_mean;
    /// Percent of included replicates selecting each dose.
    std::vector<double> pct_obd_um;
    std::vector<double> pct_obd_uwm;
    int replicates = 0;
    int included = 0;
    /// Endpoint fits replaced by empirical rates.
    int fallback_count = 0;
    int excluded_count = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;

    bool operator==(const BootstrapResult&) const = default;
};

/// Draws n_j records with replacement inside every dose arm.
TrialDataset resample_stratified(const TrialDataset& dataset, Rng& rng);

/// Empirical alpha/2 and 1 - alpha/2 quantiles using linear interpolation
/// between order statistics (R/NumPy "type 7").
ConfidenceInterval percentile_ci(std::span<const double> samples, double alpha);

/// Type-7 quantile of already sorted samples.
double quantile_sorted(std::span<const double> sorted, double prob);

BootstrapResult run_bootstrap(const TrialDataset& dataset, std::span<const ModelKind> models,
                              const WeightScheme& scheme, const BootstrapConfig& config);

}  // namespace cuimet
