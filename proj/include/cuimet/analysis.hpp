#pragma once

#include "cuimet/estimation.hpp"
#include "cuimet/trial_data.hpp"
#include "cuimet/utility.hpp"

#include <span>
#include <vector>

namespace cuimet {

/// Baseline analysis of one dataset: one marginal fit per endpoint and the
/// resulting utility table.
struct Analysis {
    std::vector<MarginalFit> fits;
    NormalizedWeights weights;
    UtilityTable table;
};

/// J x K matrix of fitted probabilities, dose rows by endpoint columns.
Eigen::MatrixXd marginal_matrix(std::span<const MarginalFit> fits);

/// `models` has one entry per endpoint. Weights are validated before any
/// fitting happens.
Analysis analyze(const TrialDataset& dataset, std::span<const ModelKind> models, const WeightScheme& scheme,
                 Metric metric, const FitConfig& config = {});

}  // namespace cuimet
