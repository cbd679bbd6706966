#include "cuimet/error.hpp"

namespace cuimet {

std::string_view to_string(Module module) {
    switch (module) {
        case Module::TrialData: return "trial_data";
        case Module::Estimation: return "estimation";
        case Module::Utility: return "utility";
        case Module::Bootstrap: return "bootstrap";
        case Module::Simulation: return "simulation";
        case Module::App: return "app";
    }
    return "unknown";
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::NonBinaryValue: return "NonBinaryValue";
        case ErrorCode::BadDoseLevel: return "BadDoseLevel";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::DuplicateEndpointName: return "DuplicateEndpointName";
        case ErrorCode::MalformedCsv: return "MalformedCsv";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::TooFewDoseLevels: return "TooFewDoseLevels";
        case ErrorCode::EmpiricalHasNoCurve: return "EmpiricalHasNoCurve";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::AllZeroWeights: return "AllZeroWeights";
        case ErrorCode::WeightOutOfRange: return "WeightOutOfRange";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptySampleList: return "EmptySampleList";
        case ErrorCode::BaselineFitFailed: return "BaselineFitFailed";
        case ErrorCode::AllReplicatesExcluded: return "AllReplicatesExcluded";
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::NotPositiveSemiDefinite: return "NotPositiveSemiDefinite";
        case ErrorCode::InvalidScenario: return "InvalidScenario";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::UnknownDataset: return "UnknownDataset";
        case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(Module module, ErrorCode code, const std::string& message,
             std::optional<std::size_t> row, std::optional<std::string> column)
    : std::runtime_error(message),
      module_(module),
      code_(code),
      row_(row),
      column_(std::move(column)) {}

std::string Error::qualified_code() const {
    std::string out(to_string(module_));
    out += '.';
    out += to_string(code_);
    return out;
}

}  // namespace cuimet
