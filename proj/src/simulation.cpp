#include "cuimet/simulation.hpp"

#include "cuimet/error.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace cuimet {

namespace {

Error scenario_error(const std::string& message) {
    return Error(Module::Simulation, ErrorCode::InvalidScenario, message);
}

// Acklam's rational approximation, |relative error| < 1.15e-9 before refinement.
double acklam(double p) {
    static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                                -2.759285104469687e+02, 1.383577518672690e+02,
                                                -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                                -1.556989798598866e+02, 6.680131188771972e+01,
                                                -1.328068155288572e+01};
    static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                                -2.400758277161838e+00, -2.549732539343734e+00,
                                                4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                                2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t end = s.find(delim, start);
        out.emplace_back(trim(s.substr(start, end == std::string_view::npos ? s.size() - start : end - start)));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

double parse_number(const std::string& token, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw scenario_error("cannot parse '" + token + "' in " + what);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw Error(Module::Simulation, ErrorCode::OutOfDomain, "inverse_normal_cdf needs 0 < p < 1");
    // Work in the lower half, where p carries full relative precision.
    if (p > 0.5) return -inverse_normal_cdf(1.0 - p);
    double x = acklam(p);
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

void ScenarioSpec::validate() const {
    const auto J = static_cast<Eigen::Index>(doses.size());
    const auto K = static_cast<Eigen::Index>(endpoint_names.size());
    if (J < 2) throw scenario_error("a scenario needs at least two dose levels");
    if (K < 1) throw scenario_error("a scenario needs at least one endpoint");
    for (std::size_t j = 0; j < doses.size(); ++j) {
        if (doses[j] < 1) throw scenario_error("dose levels must be positive integers");
        if (j > 0 && doses[j] <= doses[j - 1]) throw scenario_error("dose levels must be strictly increasing");
    }
    if (n_per_dose < 1) throw scenario_error("n_per_dose must be >= 1");
    if (target_probs.rows() != J || target_probs.cols() != K)
        throw scenario_error("target_probs must be " + std::to_string(J) + " x " + std::to_string(K));
    for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index k = 0; k < K; ++k)
            if (!(target_probs(j, k) > 0.0 && target_probs(j, k) < 1.0))
                throw scenario_error("target probabilities must lie strictly between 0 and 1");
    if (correlation.rows() != K || correlation.cols() != K)
        throw scenario_error("correlation must be " + std::to_string(K) + " x " + std::to_string(K));
    correlation_factor(correlation);
}

std::optional<BuiltinScenario> parse_builtin(std::string_view name) {
    std::string s;
    for (char c : name)
        if (c != '_' && c != '-' && c != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "example1") return BuiltinScenario::Example1;
    if (s == "example2") return BuiltinScenario::Example2;
    if (s == "example3") return BuiltinScenario::Example3;
    return std::nullopt;
}

std::string_view to_string(BuiltinScenario scenario) {
    switch (scenario) {
        case BuiltinScenario::Example1: return "example1";
        case BuiltinScenario::Example2: return "example2";
        case BuiltinScenario::Example3: return "example3";
    }
    return "unknown";
}

ScenarioSpec builtin_scenario(BuiltinScenario scenario, std::uint64_t seed) {
    ScenarioSpec spec;
    spec.doses = {1, 2, 3, 4, 5};
    spec.n_per_dose = 30;
    spec.endpoint_names = {"Toxicity", "Efficacy", "Tolerability"};
    spec.correlation = Eigen::MatrixXd::Identity(3, 3);
    spec.seed = seed;
    spec.target_probs.resize(5, 3);
    // Columns: P(Toxicity = 1), P(Efficacy = 1), P(Tolerability = 1).
    switch (scenario) {
        case BuiltinScenario::Example1:
            spec.target_probs << 0.038, 0.022, 0.147,
                                 0.058, 0.119, 0.206,
                                 0.106, 0.343, 0.280,
                                 0.232, 0.568, 0.368,
                                 0.533, 0.681, 0.466;
            break;
        case BuiltinScenario::Example2:
            spec.target_probs << 0.095, 0.414, 0.285,
                                 0.149, 0.568, 0.653,
                                 0.224, 0.618, 0.760,
                                 0.323, 0.642, 0.804,
                                 0.442, 0.657, 0.828;
            break;
        case BuiltinScenario::Example3:
            spec.target_probs << 0.105, 0.223, 0.705,
                                 0.152, 0.387, 0.607,
                                 0.233, 0.470, 0.500,
                                 0.374, 0.442, 0.393,
                                 0.583, 0.312, 0.295;
            break;
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& correlation) {
    const Eigen::Index K = correlation.rows();
    if (K == 0 || correlation.cols() != K)
        throw Error(Module::Simulation, ErrorCode::NotPositiveSemiDefinite, "correlation matrix must be square");
    for (Eigen::Index i = 0; i < K; ++i) {
        if (std::abs(correlation(i, i) - 1.0) > 1e-12)
            throw Error(Module::Simulation, ErrorCode::NotPositiveSemiDefinite,
                        "correlation matrix must have a unit diagonal");
        for (Eigen::Index j = 0; j < K; ++j) {
            if (!std::isfinite(correlation(i, j)) || std::abs(correlation(i, j) - correlation(j, i)) > 1e-12 ||
                std::abs(correlation(i, j)) > 1.0)
                throw Error(Module::Simulation, ErrorCode::NotPositiveSemiDefinite,
                            "correlation matrix must be symmetric with entries in [-1, 1]");
        }
    }
    constexpr double kZeroPivot = 1e-12;
    constexpr double kNegativeTol = 1e-10;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, K);
    for (Eigen::Index j = 0; j < K; ++j) {
        double d = correlation(j, j);
        for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (d < -kNegativeTol)
            throw Error(Module::Simulation, ErrorCode::NotPositiveSemiDefinite,
                        "correlation matrix is not positive semi-definite");
        if (d <= kZeroPivot) {
            // Zero pivot: the rest of this column must vanish as well.
            for (Eigen::Index i = j + 1; i < K; ++i) {
                double s = correlation(i, j);
                for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
                if (std::abs(s) > 1e-8)
                    throw Error(Module::Simulation, ErrorCode::NotPositiveSemiDefinite,
                                "correlation matrix is not positive semi-definite");
            }
            continue;
        }
        L(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < K; ++i) {
            double s = correlation(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

Eigen::MatrixXd sample_mvn(const Eigen::MatrixXd& correlation, std::size_t count, Rng& rng) {
    const Eigen::MatrixXd L = correlation_factor(correlation);
    const Eigen::Index K = L.rows();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), K);
    Eigen::VectorXd z(K);
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(count); ++r) {
        for (Eigen::Index k = 0; k < K; ++k) z[k] = inverse_normal_cdf(rng.uniform01());
        for (Eigen::Index i = 0; i < K; ++i) {
            double s = 0.0;
            for (Eigen::Index k = 0; k <= i; ++k) s += L(i, k) * z[k];
            out(r, i) = s;
        }
    }
    return out;
}

TrialDataset simulate_dataset(const ScenarioSpec& spec) {
    spec.validate();
    const auto K = static_cast<Eigen::Index>(spec.endpoint_names.size());
    std::vector<PatientRecord> records;
    records.reserve(spec.doses.size() * static_cast<std::size_t>(spec.n_per_dose));
    std::size_t next_id = 1;
    for (std::size_t j = 0; j < spec.doses.size(); ++j) {
        Rng rng(spec.seed, j);
        const Eigen::MatrixXd latent = sample_mvn(spec.correlation, static_cast<std::size_t>(spec.n_per_dose), rng);
        std::vector<double> thresholds(static_cast<std::size_t>(K));
        for (Eigen::Index k = 0; k < K; ++k)
            thresholds[static_cast<std::size_t>(k)] =
                inverse_normal_cdf(spec.target_probs(static_cast<Eigen::Index>(j), k));
        for (Eigen::Index i = 0; i < latent.rows(); ++i) {
            PatientRecord rec;
            rec.id = std::to_string(next_id++);
            rec.dose_level = spec.doses[j];
            rec.outcomes.resize(static_cast<std::size_t>(K));
            for (Eigen::Index k = 0; k < K; ++k)
                rec.outcomes[static_cast<std::size_t>(k)] = latent(i, k) < thresholds[static_cast<std::size_t>(k)] ? 1 : 0;
            records.push_back(std::move(rec));
        }
    }
    return TrialDataset::from_raw(spec.endpoint_names, std::move(records));
}

// ---------------------------------------------------------------------------
// Scenario text format
// ---------------------------------------------------------------------------

std::string write_scenario(const ScenarioSpec& spec) {
    std::ostringstream out;
    out << "# cuimet scenario\n";
    out << "seed = " << spec.seed << "\n";
    out << "n_per_dose = " << spec.n_per_dose << "\n";
    out << "doses = ";
    for (std::size_t j = 0; j < spec.doses.size(); ++j) out << (j ? "," : "") << spec.doses[j];
    out << "\nendpoints = ";
    for (std::size_t k = 0; k < spec.endpoint_names.size(); ++k) out << (k ? "," : "") << spec.endpoint_names[k];
    const auto block = [&](const char* name, const Eigen::MatrixXd& m) {
        out << "\n" << name << " =\n";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
            out << "\n";
        }
    };
    block("target_probs", spec.target_probs);
    block("correlation", spec.correlation);
    return out.str();
}

ScenarioSpec parse_scenario(std::string_view text) {
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto t = trim(line);
            if (!t.empty()) lines.emplace_back(t);
        }
    }

    ScenarioSpec spec;
    bool have_seed = false, have_n = false, have_doses = false, have_endpoints = false;
    std::vector<std::vector<double>> probs_rows, corr_rows;
    std::vector<std::vector<double>>* block = nullptr;

    for (const auto& line : lines) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!block) throw scenario_error("unexpected line '" + line + "'");
            std::vector<double> row;
            std::istringstream in(line);
            std::string tok;
            while (in >> tok) row.push_back(parse_number(tok, "matrix row"));
            block->push_back(std::move(row));
            continue;
        }
        block = nullptr;
        const std::string key(trim(std::string_view(line).substr(0, eq)));
        const std::string value(trim(std::string_view(line).substr(eq + 1)));
        if (key == "seed") {
            try {
                std::size_t used = 0;
                spec.seed = std::stoull(value, &used);
                if (used != value.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw scenario_error("cannot parse seed '" + value + "'");
            }
            have_seed = true;
        } else if (key == "n_per_dose") {
            const double v = parse_number(value, "n_per_dose");
            if (v != std::floor(v) || v < 1 || v > 1e8) throw scenario_error("n_per_dose must be a positive integer");
            spec.n_per_dose = static_cast<int>(v);
            have_n = true;
        } else if (key == "doses") {
            for (const auto& tok : split(value, ',')) {
                const double v = parse_number(tok, "doses");
                if (v != std::floor(v) || std::abs(v) > 1e9) throw scenario_error("dose levels must be integers");
                spec.doses.push_back(static_cast<int>(v));
            }
            have_doses = true;
        } else if (key == "endpoints") {
            spec.endpoint_names = split(value, ',');
            have_endpoints = true;
        } else if (key == "target_probs" && value.empty()) {
            block = &probs_rows;
        } else if (key == "correlation" && value.empty()) {
            block = &corr_rows;
        } else {
            throw scenario_error("unknown key '" + key + "'");
        }
    }
    if (!have_seed || !have_n || !have_doses || !have_endpoints || probs_rows.empty() || corr_rows.empty())
        throw scenario_error("scenario needs seed, n_per_dose, doses, endpoints, target_probs and correlation");

    const auto to_matrix = [](const std::vector<std::vector<double>>& rows, const char* name) {
        const std::size_t cols = rows.front().size();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != cols) throw scenario_error(std::string(name) + " rows have unequal length");
            for (std::size_t c = 0; c < cols; ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        return m;
    };
    spec.target_probs = to_matrix(probs_rows, "target_probs");
    spec.correlation = to_matrix(corr_rows, "correlation");
    spec.validate();
    return spec;
}

}  // namespace cuimet
