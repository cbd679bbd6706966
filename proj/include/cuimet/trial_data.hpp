#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cuimet {

struct EndpointSpec {
    std::string name;
    bool is_toxicity = false;
    /// False when the stored column is the complement of the recorded event
    /// (the toxicity column is stored as 1 - Toxicity).
    bool positive_is_event = true;

    bool operator==(const EndpointSpec&) const = default;
};

struct PatientRecord {
    std::string id;
    int dose_level = 0;
    /// One 0/1 value per endpoint, endpoint order of the owning dataset.
    std::vector<std::uint8_t> outcomes;

    bool operator==(const PatientRecord&) const = default;
};

/// Binomial summary of one endpoint in one dose arm.
struct DoseArm {
    int dose = 0;
    std::size_t n = 0;
    std::size_t positives = 0;

    double rate() const { return n == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(n); }
};

/// Validated patient-level trial data. Immutable after construction.
///
/// Outcomes are held in the positive-outcome convention (1 = desirable). The
/// toxicity endpoint, matched case-insensitively on the name "Toxicity", is
/// stored flipped; raw_outcome() and raw_event_rate() undo the flip.
class TrialDataset {
public:
    /// Builds a dataset from raw (as recorded) outcomes, flipping toxicity.
    static TrialDataset from_raw(std::vector<std::string> endpoint_names,
                                 std::vector<PatientRecord> records);

    /// Builds a dataset from records that are already in the positive-outcome
    /// convention described by `endpoints`.
    static TrialDataset from_normalized(std::vector<EndpointSpec> endpoints,
                                        std::vector<PatientRecord> records);

    const std::vector<EndpointSpec>& endpoints() const noexcept { return endpoints_; }
    const std::vector<PatientRecord>& records() const noexcept { return records_; }
    /// Sorted distinct dose levels.
    const std::vector<int>& dose_levels() const noexcept { return dose_levels_; }
    /// n_j, aligned with dose_levels().
    const std::vector<std::size_t>& per_dose_counts() const noexcept { return per_dose_counts_; }
    /// Validation notes that did not prevent construction (e.g. dose gaps).
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    std::size_t num_endpoints() const noexcept { return endpoints_.size(); }
    std::size_t num_doses() const noexcept { return dose_levels_.size(); }
    std::size_t size() const noexcept { return records_.size(); }

    std::optional<std::size_t> toxicity_index() const;
    std::optional<std::size_t> endpoint_index(std::string_view name) const;
    /// Position of `dose` in dose_levels(); throws IndexOutOfRange when absent.
    std::size_t dose_position(int dose) const;

    /// Indices into records() of the patients at the j-th dose level.
    std::span<const std::size_t> arm(std::size_t dose_position) const;

    /// Per-dose positive-outcome counts for one endpoint.
    std::vector<DoseArm> arm_summary(std::size_t endpoint) const;

    std::uint8_t raw_outcome(std::size_t record, std::size_t endpoint) const;

    bool operator==(const TrialDataset& other) const {
        return endpoints_ == other.endpoints_ && records_ == other.records_;
    }

private:
    TrialDataset() = default;
    void index();

    std::vector<EndpointSpec> endpoints_;
    std::vector<PatientRecord> records_;
    std::vector<int> dose_levels_;
    std::vector<std::size_t> per_dose_counts_;
    std::vector<std::vector<std::size_t>> arms_;
    std::vector<std::string> warnings_;
};

struct ParseOptions {
    /// Reject dose labels with gaps (1,2,4) instead of warning.
    bool require_contiguous_doses = false;
};

/// Parses CSV with a header row that contains ID, Dose, Toxicity and
/// Efficacy. Every column other than ID and Dose is a binary endpoint, in
/// column order.
TrialDataset parse_dataset(std::string_view csv_text, const ParseOptions& options = {});
TrialDataset load_dataset(const std::filesystem::path& path, const ParseOptions& options = {});

/// Serializes in the raw (as recorded) convention accepted by parse_dataset.
std::string to_csv(const TrialDataset& dataset);

/// Observed mean of the original, unflipped outcome at one dose level.
double raw_event_rate(const TrialDataset& dataset, std::size_t endpoint, int dose);

}  // namespace cuimet
