#pragma once

#include "cuimet/analysis.hpp"
#include "cuimet/bootstrap.hpp"
#include "cuimet/error.hpp"
#include "cuimet/estimation.hpp"
#include "cuimet/trial_data.hpp"
#include "cuimet/utility.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cuimet {

using Json = nlohmann::json;

/// Analysis settings shared by the CLI and the service. Models and weights
/// may be keyed by endpoint name or listed in endpoint order; endpoints left
/// out get the empirical estimator and weight 1.
struct AnalysisRequest {
    std::optional<std::string> dataset_id;
    std::optional<std::string> csv;
    std::variant<std::map<std::string, ModelKind>, std::vector<ModelKind>> models;
    std::variant<std::map<std::string, double>, std::vector<double>> weights;
    Metric metric = Metric::UWM;
    std::optional<BootstrapConfig> bootstrap;
    FitConfig fit;
    int curve_grid_points = 100;
};

/// Throws app.InvalidRequest on unknown keys or ill-typed values.
AnalysisRequest parse_analysis_request(const Json& body);

/// Parses "logit_quadratic", "logit_quadratic:mono", "emax", ...
ModelKind parse_model_kind(std::string_view text);
Metric parse_metric(std::string_view text);
FitFailurePolicy parse_policy(std::string_view text);

/// Per-endpoint models and weights in dataset order.
std::vector<ModelKind> resolve_models(const TrialDataset& dataset, const AnalysisRequest& request);
WeightScheme resolve_weights(const TrialDataset& dataset, const AnalysisRequest& request);

/// Content hash of the canonical CSV form, 16 hex digits (FNV-1a 64).
std::string dataset_id(const TrialDataset& dataset);

struct AnalysisReport {
    std::string dataset_id;
    std::shared_ptr<const TrialDataset> dataset;
    std::vector<ModelKind> models;
    WeightScheme raw_weights;
    Analysis analysis;
    std::optional<BootstrapResult> bootstrap;
    std::optional<FitFailurePolicy> policy;
    std::vector<double> dose_grid;
};

/// Runs the fits, the utility table and (if requested) the bootstrap.
AnalysisReport build_report(std::shared_ptr<const TrialDataset> dataset, const AnalysisRequest& request);

Json to_json(const AnalysisReport& report);

/// Per-dose marginals and utilities, one row per dose.
std::string utility_table_csv(const AnalysisReport& report);
/// Bootstrap summary, one row per dose. Throws app.InvalidRequest without a bootstrap.
std::string bootstrap_table_csv(const AnalysisReport& report);

/// {"error": {"code", "module", "message", "row"?, "column"?}}
Json error_json(const Error& error);

}  // namespace cuimet
