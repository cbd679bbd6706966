#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cuimet {

enum class Module {
    TrialData,
    Estimation,
    Utility,
    Bootstrap,
    Simulation,
    App,
};

enum class ErrorCode {
    // trial data
    MissingColumn,
    NonBinaryValue,
    BadDoseLevel,
    EmptyDataset,
    DuplicateEndpointName,
    MalformedCsv,
    IndexOutOfRange,
    // estimation
    TooFewDoseLevels,
    EmpiricalHasNoCurve,
    InvalidConfig,
    // utility
    AllZeroWeights,
    WeightOutOfRange,
    DimensionMismatch,
    // bootstrap
    EmptySampleList,
    BaselineFitFailed,
    AllReplicatesExcluded,
    // simulation
    OutOfDomain,
    NotPositiveSemiDefinite,
    InvalidScenario,
    // app interface
    InvalidRequest,
    UnknownDataset,
    PayloadTooLarge,
    Io,
};

std::string_view to_string(Module module);
std::string_view to_string(ErrorCode code);

/// Exception carrying a module-qualified error code, e.g. "trial_data.NonBinaryValue".
/// Row and column are filled in for input-validation failures so callers can
/// point the user at the offending cell.
class Error : public std::runtime_error {
public:
    Error(Module module, ErrorCode code, const std::string& message,
          std::optional<std::size_t> row = std::nullopt,
          std::optional<std::string> column = std::nullopt);

    Module module() const noexcept { return module_; }
    ErrorCode code() const noexcept { return code_; }
    std::string qualified_code() const;

    /// 1-based data row (header excluded), when applicable.
    const std::optional<std::size_t>& row() const noexcept { return row_; }
    const std::optional<std::string>& column() const noexcept { return column_; }

private:
    Module module_;
    ErrorCode code_;
    std::optional<std::size_t> row_;
    std::optional<std::string> column_;
};

}  // namespace cuimet
