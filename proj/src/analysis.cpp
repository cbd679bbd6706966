#include "cuimet/analysis.hpp"

#include "cuimet/error.hpp"

namespace cuimet {

Eigen::MatrixXd marginal_matrix(std::span<const MarginalFit> fits) {
    if (fits.empty()) return {};
    const auto J = static_cast<Eigen::Index>(fits.front().fitted_probs.size());
    Eigen::MatrixXd m(J, static_cast<Eigen::Index>(fits.size()));
    for (std::size_t k = 0; k < fits.size(); ++k) {
        if (static_cast<Eigen::Index>(fits[k].fitted_probs.size()) != J)
            throw Error(Module::Utility, ErrorCode::DimensionMismatch, "fits cover different numbers of doses");
        for (Eigen::Index j = 0; j < J; ++j)
            m(j, static_cast<Eigen::Index>(k)) = fits[k].fitted_probs[static_cast<std::size_t>(j)];
    }
    return m;
}

Analysis analyze(const TrialDataset& dataset, std::span<const ModelKind> models, const WeightScheme& scheme,
                 Metric metric, const FitConfig& config) {
    if (models.size() != dataset.num_endpoints())
        throw Error(Module::Estimation, ErrorCode::DimensionMismatch,
                    "got " + std::to_string(models.size()) + " models for " +
                        std::to_string(dataset.num_endpoints()) + " endpoints");
    if (scheme.raw_weights.size() != dataset.num_endpoints())
        throw Error(Module::Utility, ErrorCode::DimensionMismatch,
                    "got " + std::to_string(scheme.raw_weights.size()) + " weights for " +
                        std::to_string(dataset.num_endpoints()) + " endpoints");
    Analysis out;
    out.weights = normalize_weights(scheme);
    out.fits.reserve(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) out.fits.push_back(fit_marginal(dataset, k, models[k], config));
    out.table = build_utility_table(dataset.dose_levels(), marginal_matrix(out.fits), out.weights, metric);
    return out;
}

}  // namespace cuimet
