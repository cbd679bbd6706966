#include "cuimet/trial_data.hpp"

#include "cuimet/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cuimet {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    }
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

Error data_error(ErrorCode code, const std::string& message,
                 std::optional<std::size_t> row = std::nullopt,
                 std::optional<std::string> column = std::nullopt) {
    return Error(Module::TrialData, code, message, row, std::move(column));
}

// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw data_error(ErrorCode::MalformedCsv, "unterminated quoted field", row);
    fields.emplace_back(trim(cur));
    return fields;
}

std::optional<int> parse_dose(std::string_view text) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc() && ptr == text.data() + text.size()) return value;
    // Accept integral decimals such as "3.0".
    double d = 0.0;
    auto [dptr, dec] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (dec == std::errc() && dptr == text.data() + text.size() && std::isfinite(d) &&
        d == std::floor(d) && std::abs(d) < 1e9)
        return static_cast<int>(d);
    return std::nullopt;
}

std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

// -------------------------------------------------------------------------
// TrialDataset
// -------------------------------------------------------------------------

TrialDataset TrialDataset::from_raw(std::vector<std::string> endpoint_names,
                                    std::vector<PatientRecord> records) {
    std::vector<EndpointSpec> endpoints;
    endpoints.reserve(endpoint_names.size());
    for (auto& name : endpoint_names) {
        const bool tox = iequals(name, "Toxicity");
        endpoints.push_back({std::move(name), tox, !tox});
    }
    for (std::size_t r = 0; r < records.size(); ++r) {
        auto& outcomes = records[r].outcomes;
        for (std::size_t k = 0; k < outcomes.size() && k < endpoints.size(); ++k) {
            if (outcomes[k] > 1) {
                throw data_error(ErrorCode::NonBinaryValue,
                                 "row " + std::to_string(r + 1) + ", column '" + endpoints[k].name +
                                     "': value " + std::to_string(outcomes[k]) + " is not 0 or 1",
                                 r + 1, endpoints[k].name);
            }
            if (endpoints[k].is_toxicity) outcomes[k] = static_cast<std::uint8_t>(1 - outcomes[k]);
        }
    }
    return from_normalized(std::move(endpoints), std::move(records));
}

TrialDataset TrialDataset::from_normalized(std::vector<EndpointSpec> endpoints,
                                           std::vector<PatientRecord> records) {
    if (endpoints.empty())
        throw data_error(ErrorCode::MissingColumn, "dataset has no endpoint columns");

    std::set<std::string> names;
    std::size_t toxicity_count = 0;
    for (const auto& ep : endpoints) {
        if (ep.name.empty())
            throw data_error(ErrorCode::DuplicateEndpointName, "endpoint name is empty");
        // Toxicity is matched case-insensitively, so fold it for the uniqueness check.
        const std::string key = ep.is_toxicity ? std::string("\x01toxicity") : ep.name;
        if (!names.insert(key).second)
            throw data_error(ErrorCode::DuplicateEndpointName,
                             "duplicate endpoint name '" + ep.name + "'", std::nullopt, ep.name);
        if (ep.is_toxicity) ++toxicity_count;
    }
    if (toxicity_count > 1)
        throw data_error(ErrorCode::DuplicateEndpointName, "more than one toxicity endpoint");

    if (records.empty()) throw data_error(ErrorCode::EmptyDataset, "dataset has no patient records");

    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.outcomes.size() != endpoints.size()) {
            throw data_error(ErrorCode::MalformedCsv,
                             "row " + std::to_string(r + 1) + " has " +
                                 std::to_string(rec.outcomes.size()) + " outcomes, expected " +
                                 std::to_string(endpoints.size()),
                             r + 1);
        }
        if (rec.dose_level < 1) {
            throw data_error(ErrorCode::BadDoseLevel,
                             "row " + std::to_string(r + 1) + ": dose level " +
                                 std::to_string(rec.dose_level) + " is below 1",
                             r + 1, "Dose");
        }
        for (std::size_t k = 0; k < endpoints.size(); ++k) {
            if (rec.outcomes[k] > 1) {
                throw data_error(ErrorCode::NonBinaryValue,
                                 "row " + std::to_string(r + 1) + ", column '" + endpoints[k].name +
                                     "': value is not 0 or 1",
                                 r + 1, endpoints[k].name);
            }
        }
    }

    TrialDataset ds;
    ds.endpoints_ = std::move(endpoints);
    ds.records_ = std::move(records);
    ds.index();
    if (ds.dose_levels_.size() < 2) {
        throw data_error(ErrorCode::BadDoseLevel,
                         "at least two distinct dose levels are required, found " +
                             std::to_string(ds.dose_levels_.size()),
                         std::nullopt, "Dose");
    }
    for (std::size_t j = 1; j < ds.dose_levels_.size(); ++j) {
        if (ds.dose_levels_[j] != ds.dose_levels_[j - 1] + 1) {
            ds.warnings_.push_back("dose levels are not contiguous (gap between " +
                                   std::to_string(ds.dose_levels_[j - 1]) + " and " +
                                   std::to_string(ds.dose_levels_[j]) +
                                   "); numeric values are used as model covariates");
            break;
        }
    }
    return ds;
}

void TrialDataset::index() {
    std::map<int, std::vector<std::size_t>> by_dose;
    for (std::size_t r = 0; r < records_.size(); ++r) by_dose[records_[r].dose_level].push_back(r);
    dose_levels_.clear();
    per_dose_counts_.clear();
    arms_.clear();
    for (auto& [dose, idx] : by_dose) {
        dose_levels_.push_back(dose);
        per_dose_counts_.push_back(idx.size());
        arms_.push_back(std::move(idx));
    }
}

std::optional<std::size_t> TrialDataset::toxicity_index() const {
    for (std::size_t k = 0; k < endpoints_.size(); ++k)
        if (endpoints_[k].is_toxicity) return k;
    return std::nullopt;
}

std::optional<std::size_t> TrialDataset::endpoint_index(std::string_view name) const {
    for (std::size_t k = 0; k < endpoints_.size(); ++k) {
        const auto& ep = endpoints_[k];
        if (ep.is_toxicity ? iequals(ep.name, name) : ep.name == name) return k;
    }
    return std::nullopt;
}

std::size_t TrialDataset::dose_position(int dose) const {
    auto it = std::lower_bound(dose_levels_.begin(), dose_levels_.end(), dose);
    if (it == dose_levels_.end() || *it != dose)
        throw data_error(ErrorCode::IndexOutOfRange, "dose level " + std::to_string(dose) + " is not present");
    return static_cast<std::size_t>(it - dose_levels_.begin());
}

std::span<const std::size_t> TrialDataset::arm(std::size_t dose_position) const {
    if (dose_position >= arms_.size())
        throw data_error(ErrorCode::IndexOutOfRange, "dose position out of range");
    return arms_[dose_position];
}

std::vector<DoseArm> TrialDataset::arm_summary(std::size_t endpoint) const {
    if (endpoint >= endpoints_.size())
        throw data_error(ErrorCode::IndexOutOfRange,
                         "endpoint index " + std::to_string(endpoint) + " out of range");
    std::vector<DoseArm> out;
    out.reserve(arms_.size());
    for (std::size_t j = 0; j < arms_.size(); ++j) {
        DoseArm a{dose_levels_[j], arms_[j].size(), 0};
        for (std::size_t r : arms_[j]) a.positives += records_[r].outcomes[endpoint];
        out.push_back(a);
    }
    return out;
}

std::uint8_t TrialDataset::raw_outcome(std::size_t record, std::size_t endpoint) const {
    if (record >= records_.size() || endpoint >= endpoints_.size())
        throw data_error(ErrorCode::IndexOutOfRange, "record or endpoint index out of range");
    const std::uint8_t v = records_[record].outcomes[endpoint];
    return endpoints_[endpoint].positive_is_event ? v : static_cast<std::uint8_t>(1 - v);
}

// -------------------------------------------------------------------------
// CSV
// -------------------------------------------------------------------------

TrialDataset parse_dataset(std::string_view csv_text, const ParseOptions& options) {
    if (csv_text.size() >= 3 && csv_text.substr(0, 3) == "\xEF\xBB\xBF") csv_text.remove_prefix(3);

    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= csv_text.size()) {
            std::size_t end = csv_text.find('\n', start);
            if (end == std::string_view::npos) end = csv_text.size();
            std::string_view line = csv_text.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = end + 1;
        }
        while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    }
    if (lines.empty()) throw data_error(ErrorCode::EmptyDataset, "input is empty");

    const auto header = split_csv_line(lines[0], 0);
    std::optional<std::size_t> id_col, dose_col;
    std::vector<std::size_t> endpoint_cols;
    std::vector<std::string> endpoint_names;
    bool has_tox = false, has_eff = false;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h.empty())
            throw data_error(ErrorCode::MalformedCsv, "header column " + std::to_string(c + 1) + " is empty", 0);
        if (iequals(h, "ID") && !id_col) {
            id_col = c;
        } else if (iequals(h, "Dose") && !dose_col) {
            dose_col = c;
        } else {
            if (iequals(h, "Toxicity")) has_tox = true;
            if (iequals(h, "Efficacy")) has_eff = true;
            endpoint_cols.push_back(c);
            endpoint_names.push_back(h);
        }
    }
    for (auto [present, name] : {std::pair{id_col.has_value(), "ID"}, std::pair{dose_col.has_value(), "Dose"},
                                 std::pair{has_tox, "Toxicity"}, std::pair{has_eff, "Efficacy"}}) {
        if (!present)
            throw data_error(ErrorCode::MissingColumn, std::string("required column '") + name + "' is missing",
                             0, std::string(name));
    }

    std::vector<PatientRecord> records;
    records.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t row = li;
        if (trim(lines[li]).empty())
            throw data_error(ErrorCode::MalformedCsv, "row " + std::to_string(row) + " is blank", row);
        const auto fields = split_csv_line(lines[li], row);
        if (fields.size() != header.size()) {
            throw data_error(ErrorCode::MalformedCsv,
                             "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                 " fields, header has " + std::to_string(header.size()),
                             row);
        }
        PatientRecord rec;
        rec.id = fields[*id_col];
        if (rec.id.empty())
            throw data_error(ErrorCode::MalformedCsv, "row " + std::to_string(row) + ": ID is missing", row, "ID");
        const std::string& dose_text = fields[*dose_col];
        auto dose = parse_dose(dose_text);
        if (!dose || *dose < 1) {
            throw data_error(ErrorCode::BadDoseLevel,
                             "row " + std::to_string(row) + ", column 'Dose': '" + dose_text +
                                 "' is not a positive integer dose level",
                             row, header[*dose_col]);
        }
        rec.dose_level = *dose;
        rec.outcomes.reserve(endpoint_cols.size());
        for (std::size_t e = 0; e < endpoint_cols.size(); ++e) {
            const std::string& cell = fields[endpoint_cols[e]];
            if (cell == "0" || cell == "1") {
                rec.outcomes.push_back(static_cast<std::uint8_t>(cell[0] - '0'));
            } else {
                throw data_error(ErrorCode::NonBinaryValue,
                                 "row " + std::to_string(row) + ", column '" + endpoint_names[e] + "': " +
                                     (cell.empty() ? std::string("missing value") : "'" + cell + "' is not 0 or 1"),
                                 row, endpoint_names[e]);
            }
        }
        records.push_back(std::move(rec));
    }

    TrialDataset ds = TrialDataset::from_raw(std::move(endpoint_names), std::move(records));
    if (options.require_contiguous_doses && !ds.warnings().empty())
        throw data_error(ErrorCode::BadDoseLevel, ds.warnings().front(), std::nullopt, "Dose");
    return ds;
}

TrialDataset load_dataset(const std::filesystem::path& path, const ParseOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Module::TrialData, ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), options);
}

std::string to_csv(const TrialDataset& dataset) {
    std::string out = "ID,Dose";
    for (const auto& ep : dataset.endpoints()) {
        out += ',';
        out += quote_if_needed(ep.name);
    }
    out += '\n';
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        const auto& rec = dataset.records()[r];
        out += quote_if_needed(rec.id);
        out += ',';
        out += std::to_string(rec.dose_level);
        for (std::size_t k = 0; k < dataset.num_endpoints(); ++k) {
            out += ',';
            out += static_cast<char>('0' + dataset.raw_outcome(r, k));
        }
        out += '\n';
    }
    return out;
}

double raw_event_rate(const TrialDataset& dataset, std::size_t endpoint, int dose) {
    if (endpoint >= dataset.num_endpoints())
        throw data_error(ErrorCode::IndexOutOfRange, "endpoint index " + std::to_string(endpoint) + " out of range");
    const auto arm = dataset.arm(dataset.dose_position(dose));
    std::size_t events = 0;
    for (std::size_t r : arm) events += dataset.raw_outcome(r, endpoint);
    return static_cast<double>(events) / static_cast<double>(arm.size());
}

}  // namespace cuimet
