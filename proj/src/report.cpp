#include "cuimet/report.hpp"

#include "cuimet/error.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace cuimet {

namespace {

constexpr int kMaxGridPoints = 10000;
constexpr int kMaxReplicates = 100000;

Error request_error(const std::string& message) { return Error(Module::App, ErrorCode::InvalidRequest, message); }

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw request_error(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw request_error("unknown key '" + key + "' in " + where);
    }
}

double get_number(const Json& v, const std::string& what) {
    if (!v.is_number()) throw request_error(what + " must be a number");
    return v.get<double>();
}

long long get_integer(const Json& v, const std::string& what) {
    if (v.is_number_integer() || v.is_number_unsigned()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
    }
    throw request_error(what + " must be an integer");
}

bool get_bool(const Json& v, const std::string& what) {
    if (!v.is_boolean()) throw request_error(what + " must be true or false");
    return v.get<bool>();
}

std::string get_string(const Json& v, const std::string& what) {
    if (!v.is_string()) throw request_error(what + " must be a string");
    return v.get<std::string>();
}

Interval get_interval(const Json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 2) throw request_error(what + " must be a [lower, upper] pair");
    return {get_number(v[0], what), get_number(v[1], what)};
}

ModelKind model_from_json(const Json& v, const std::string& what) {
    if (v.is_string()) return parse_model_kind(v.get<std::string>());
    check_keys(v, {"model", "monotone"}, what);
    if (!v.contains("model")) throw request_error(what + " needs a 'model'");
    ModelKind kind = parse_model_kind(get_string(v["model"], what + ".model"));
    if (v.contains("monotone")) kind.monotone = get_bool(v["monotone"], what + ".monotone");
    return kind;
}

FitConfig fit_from_json(const Json& v) {
    check_keys(v,
               {"max_iterations", "convergence_tol", "penalty_weight", "derivative_grid_points",
                "continuity_correction", "ed50_bounds", "sigma_bounds", "ridge"},
               "fit");
    FitConfig cfg;
    if (v.contains("max_iterations")) cfg.max_iterations = static_cast<int>(get_integer(v["max_iterations"], "fit.max_iterations"));
    if (v.contains("convergence_tol")) cfg.convergence_tol = get_number(v["convergence_tol"], "fit.convergence_tol");
    if (v.contains("penalty_weight")) cfg.penalty_weight = get_number(v["penalty_weight"], "fit.penalty_weight");
    if (v.contains("derivative_grid_points"))
        cfg.derivative_grid_points = static_cast<int>(get_integer(v["derivative_grid_points"], "fit.derivative_grid_points"));
    if (v.contains("continuity_correction"))
        cfg.continuity_correction = get_number(v["continuity_correction"], "fit.continuity_correction");
    if (v.contains("ed50_bounds") && !v["ed50_bounds"].is_null()) cfg.ed50_bounds = get_interval(v["ed50_bounds"], "fit.ed50_bounds");
    if (v.contains("sigma_bounds") && !v["sigma_bounds"].is_null())
        cfg.sigma_bounds = get_interval(v["sigma_bounds"], "fit.sigma_bounds");
    if (v.contains("ridge")) cfg.ridge = get_number(v["ridge"], "fit.ridge");
    cfg.validate();
    return cfg;
}

BootstrapConfig bootstrap_from_json(const Json& v) {
    check_keys(v, {"replicates", "alpha", "seed", "policy", "threads"}, "bootstrap");
    BootstrapConfig cfg;
    cfg.threads = 0;
    if (v.contains("replicates")) {
        const auto b = get_integer(v["replicates"], "bootstrap.replicates");
        if (b < 1 || b > kMaxReplicates)
            throw request_error("bootstrap.replicates must lie in [1, " + std::to_string(kMaxReplicates) + "]");
        cfg.replicates = static_cast<int>(b);
    }
    if (v.contains("alpha")) cfg.alpha = get_number(v["alpha"], "bootstrap.alpha");
    if (v.contains("seed")) {
        const auto& s = v["seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            throw request_error("bootstrap.seed must be a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    if (v.contains("policy")) cfg.fit_failure_policy = parse_policy(get_string(v["policy"], "bootstrap.policy"));
    if (v.contains("threads")) {
        const auto t = get_integer(v["threads"], "bootstrap.threads");
        if (t < 0 || t > 1024) throw request_error("bootstrap.threads must lie in [0, 1024]");
        cfg.threads = static_cast<unsigned>(t);
    }
    return cfg;
}

std::string direction_name(const std::optional<Direction>& d) {
    if (!d) return "none";
    return *d == Direction::Increasing ? "increasing" : "decreasing";
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string event_label(const EndpointSpec& ep) { return ep.is_toxicity ? "Tox" : ep.name; }

}  // namespace

ModelKind parse_model_kind(std::string_view text) {
    std::string name(text);
    bool monotone = false;
    if (const auto colon = name.find(':'); colon != std::string::npos) {
        const std::string flag = lower(name.substr(colon + 1));
        if (flag != "mono" && flag != "monotone")
            throw request_error("unknown model flag '" + name.substr(colon + 1) + "' (expected 'mono')");
        monotone = true;
        name.erase(colon);
    }
    const auto model = parse_model(name);
    if (!model) throw request_error("unknown model '" + name + "'");
    return {*model, monotone};
}

Metric parse_metric(std::string_view text) {
    const std::string m = lower(text);
    if (m == "um") return Metric::UM;
    if (m == "uwm") return Metric::UWM;
    throw request_error("metric must be 'um' or 'uwm'");
}

FitFailurePolicy parse_policy(std::string_view text) {
    const std::string p = lower(text);
    if (p == "fallback_empirical" || p == "fallback") return FitFailurePolicy::FallbackEmpirical;
    if (p == "exclude_replicate" || p == "exclude") return FitFailurePolicy::ExcludeReplicate;
    throw request_error("policy must be 'fallback_empirical' or 'exclude_replicate'");
}

AnalysisRequest parse_analysis_request(const Json& body) {
    check_keys(body, {"dataset_id", "csv", "models", "weights", "metric", "bootstrap", "fit", "curve_grid_points"},
               "request");
    AnalysisRequest req;
    if (body.contains("dataset_id") && !body["dataset_id"].is_null())
        req.dataset_id = get_string(body["dataset_id"], "dataset_id");
    if (body.contains("csv") && !body["csv"].is_null()) req.csv = get_string(body["csv"], "csv");

    if (body.contains("models") && !body["models"].is_null()) {
        const auto& m = body["models"];
        if (m.is_object()) {
            std::map<std::string, ModelKind> by_name;
            for (const auto& [name, v] : m.items()) by_name[name] = model_from_json(v, "models." + name);
            req.models = std::move(by_name);
        } else if (m.is_array()) {
            std::vector<ModelKind> list;
            for (std::size_t i = 0; i < m.size(); ++i) list.push_back(model_from_json(m[i], "models[" + std::to_string(i) + "]"));
            req.models = std::move(list);
        } else {
            throw request_error("models must be an object keyed by endpoint or an array");
        }
    }
    if (body.contains("weights") && !body["weights"].is_null()) {
        const auto& w = body["weights"];
        if (w.is_object()) {
            std::map<std::string, double> by_name;
            for (const auto& [name, v] : w.items()) by_name[name] = get_number(v, "weights." + name);
            req.weights = std::move(by_name);
        } else if (w.is_array()) {
            std::vector<double> list;
            for (std::size_t i = 0; i < w.size(); ++i) list.push_back(get_number(w[i], "weights[" + std::to_string(i) + "]"));
            req.weights = std::move(list);
        } else {
            throw request_error("weights must be an object keyed by endpoint or an array");
        }
    }
    if (body.contains("metric")) req.metric = parse_metric(get_string(body["metric"], "metric"));
    if (body.contains("fit") && !body["fit"].is_null()) req.fit = fit_from_json(body["fit"]);
    if (body.contains("bootstrap") && !body["bootstrap"].is_null() && body["bootstrap"] != false) {
        req.bootstrap = body["bootstrap"] == true ? BootstrapConfig{} : bootstrap_from_json(body["bootstrap"]);
        if (body["bootstrap"] == true) req.bootstrap->threads = 0;
        req.bootstrap->fit = req.fit;
    }
    if (body.contains("curve_grid_points")) {
        const auto g = get_integer(body["curve_grid_points"], "curve_grid_points");
        if (g < 2 || g > kMaxGridPoints)
            throw request_error("curve_grid_points must lie in [2, " + std::to_string(kMaxGridPoints) + "]");
        req.curve_grid_points = static_cast<int>(g);
    }
    return req;
}

std::vector<ModelKind> resolve_models(const TrialDataset& dataset, const AnalysisRequest& request) {
    const std::size_t K = dataset.num_endpoints();
    std::vector<ModelKind> out(K);
    if (const auto* list = std::get_if<std::vector<ModelKind>>(&request.models)) {
        if (!list->empty() && list->size() != K)
            throw Error(Module::App, ErrorCode::InvalidRequest,
                        "got " + std::to_string(list->size()) + " models for " + std::to_string(K) + " endpoints");
        if (!list->empty()) out = *list;
    } else {
        for (const auto& [name, kind] : std::get<std::map<std::string, ModelKind>>(request.models)) {
            const auto k = dataset.endpoint_index(name);
            if (!k) throw request_error("models: no endpoint named '" + name + "'");
            out[*k] = kind;
        }
    }
    return out;
}

WeightScheme resolve_weights(const TrialDataset& dataset, const AnalysisRequest& request) {
    const std::size_t K = dataset.num_endpoints();
    WeightScheme scheme{std::vector<double>(K, 1.0)};
    if (const auto* list = std::get_if<std::vector<double>>(&request.weights)) {
        if (!list->empty() && list->size() != K)
            throw Error(Module::Utility, ErrorCode::DimensionMismatch,
                        "got " + std::to_string(list->size()) + " weights for " + std::to_string(K) + " endpoints");
        if (!list->empty()) scheme.raw_weights = *list;
    } else {
        for (const auto& [name, w] : std::get<std::map<std::string, double>>(request.weights)) {
            const auto k = dataset.endpoint_index(name);
            if (!k) throw request_error("weights: no endpoint named '" + name + "'");
            scheme.raw_weights[*k] = w;
        }
    }
    return scheme;
}

std::string dataset_id(const TrialDataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_csv(dataset)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

AnalysisReport build_report(std::shared_ptr<const TrialDataset> dataset, const AnalysisRequest& request) {
    if (!dataset) throw request_error("no dataset");
    if (request.curve_grid_points < 2) throw request_error("curve_grid_points must be >= 2");
    AnalysisReport report;
    report.dataset = dataset;
    report.dataset_id = dataset_id(*dataset);
    report.models = resolve_models(*dataset, request);
    report.raw_weights = resolve_weights(*dataset, request);
    report.analysis = analyze(*dataset, report.models, report.raw_weights, request.metric, request.fit);
    if (request.bootstrap) {
        BootstrapConfig cfg = *request.bootstrap;
        cfg.fit = request.fit;
        report.bootstrap = run_bootstrap(*dataset, report.models, report.raw_weights, cfg);
        report.policy = cfg.fit_failure_policy;
    }
    const double lo = static_cast<double>(dataset->dose_levels().front());
    const double hi = static_cast<double>(dataset->dose_levels().back());
    const int g = request.curve_grid_points;
    for (int i = 0; i < g; ++i) report.dose_grid.push_back(i == g - 1 ? hi : lo + (hi - lo) * i / (g - 1));
    return report;
}

Json to_json(const AnalysisReport& report) {
    const TrialDataset& ds = *report.dataset;
    const auto& a = report.analysis;
    const auto& doses = ds.dose_levels();
    const std::size_t J = doses.size();

    Json out;
    Json names = Json::array();
    for (const auto& ep : ds.endpoints()) names.push_back(ep.name);
    out["dataset"] = {{"id", report.dataset_id},
                      {"endpoints", names},
                      {"doses", doses},
                      {"per_dose_counts", ds.per_dose_counts()},
                      {"patients", ds.size()},
                      {"warnings", ds.warnings()}};

    Json endpoints = Json::array();
    Json plot_endpoints = Json::array();
    for (std::size_t k = 0; k < ds.num_endpoints(); ++k) {
        const auto& ep = ds.endpoints()[k];
        const auto& fit = a.fits[k];
        const auto empirical = estimate_empirical(ds, k);
        Json params = Json::object();
        for (const auto& [name, value] : fit.params) params[name] = value;
        Json per_dose = Json::array();
        Json points = Json::array();
        for (std::size_t j = 0; j < J; ++j) {
            const double marginal = fit.fitted_probs[j];
            per_dose.push_back({{"dose", doses[j]},
                                {"n", ds.per_dose_counts()[j]},
                                {"raw_event_rate", raw_event_rate(ds, k, doses[j])},
                                {"empirical", empirical.fitted_probs[j]},
                                {"marginal", marginal},
                                {"event_probability", ep.positive_is_event ? marginal : 1.0 - marginal}});
            points.push_back({{"dose", doses[j]}, {"p", empirical.fitted_probs[j]}});
        }
        endpoints.push_back({{"name", ep.name},
                             {"is_toxicity", ep.is_toxicity},
                             {"model", to_string(fit.model.variant)},
                             {"monotone", fit.model.monotone},
                             {"direction", direction_name(fit.direction)},
                             {"params", params},
                             {"converged", fit.converged},
                             {"degenerate", fit.degenerate},
                             {"objective", fit.objective},
                             {"log_likelihood", fit.log_likelihood ? Json(*fit.log_likelihood) : Json()},
                             {"iterations", fit.iterations},
                             {"per_dose", per_dose}});
        Json curve;
        if (fit.model.variant != Model::Empirical) curve = predict_curve(fit, report.dose_grid);
        plot_endpoints.push_back({{"name", ep.name}, {"empirical", points}, {"curve", curve}});
    }
    out["endpoints"] = endpoints;

    out["weights"] = {{"raw", report.raw_weights.raw_weights}, {"normalized", a.weights.weights}};

    const auto& t = a.table;
    out["utility"] = {{"metric", to_string(t.metric)},
                      {"doses", t.doses},
                      {"um", t.um},
                      {"uwm", t.uwm},
                      {"ranking", t.ranking},
                      {"obd", t.obd},
                      {"tie", t.tie},
                      {"obd_um", select_obd(t.um, t.doses).obd},
                      {"obd_uwm", select_obd(t.uwm, t.doses).obd}};

    Json ribbons_um, ribbons_uwm;
    if (report.bootstrap) {
        const auto& b = *report.bootstrap;
        Json um_ci = Json::array(), uwm_ci = Json::array();
        Json um_lo = Json::array(), um_hi = Json::array(), uwm_lo = Json::array(), uwm_hi = Json::array();
        for (std::size_t j = 0; j < J; ++j) {
            um_ci.push_back({b.um_ci[j].lower, b.um_ci[j].upper});
            uwm_ci.push_back({b.uwm_ci[j].lower, b.uwm_ci[j].upper});
            um_lo.push_back(b.um_ci[j].lower);
            um_hi.push_back(b.um_ci[j].upper);
            uwm_lo.push_back(b.uwm_ci[j].lower);
            uwm_hi.push_back(b.uwm_ci[j].upper);
        }
        out["bootstrap"] = {{"replicates", b.replicates},
                            {"alpha", b.alpha},
                            {"seed", b.seed},
                            {"policy", to_string(report.policy.value_or(FitFailurePolicy::FallbackEmpirical))},
                            {"included", b.included},
                            {"fallback_count", b.fallback_count},
                            {"excluded_count", b.excluded_count},
                            {"doses", b.doses},
                            {"um_mean", b.um_mean},
                            {"uwm_mean", b.uwm_mean},
                            {"um_ci", um_ci},
                            {"uwm_ci", uwm_ci},
                            {"pct_obd_um", b.pct_obd_um},
                            {"pct_obd_uwm", b.pct_obd_uwm}};
        ribbons_um = {{"lower", um_lo}, {"upper", um_hi}};
        ribbons_uwm = {{"lower", uwm_lo}, {"upper", uwm_hi}};
    } else {
        out["bootstrap"] = nullptr;
    }

    out["plot"] = {{"dose_grid", report.dose_grid},
                   {"endpoints", plot_endpoints},
                   {"um", {{"doses", t.doses}, {"values", t.um}, {"ribbon", ribbons_um}}},
                   {"uwm", {{"doses", t.doses}, {"values", t.uwm}, {"ribbon", ribbons_uwm}}}};
    return out;
}

std::string utility_table_csv(const AnalysisReport& report) {
    const TrialDataset& ds = *report.dataset;
    const auto& t = report.analysis.table;
    std::ostringstream out;
    out << "Dose";
    for (const auto& ep : ds.endpoints()) {
        const std::string label = event_label(ep);
        if (ep.is_toxicity)
            out << ',' << csv_field("P(" + label + "=1)") << ',' << csv_field("1-P(" + label + "=1)");
        else
            out << ',' << csv_field("P(" + label + "=1)");
    }
    out << ",UM,UWM\n";
    for (std::size_t j = 0; j < t.doses.size(); ++j) {
        out << t.doses[j];
        for (std::size_t k = 0; k < ds.num_endpoints(); ++k) {
            const double m = t.marginals(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
            if (ds.endpoints()[k].is_toxicity) out << ',' << format_number(1.0 - m);
            out << ',' << format_number(m);
        }
        out << ',' << format_number(t.um[j]) << ',' << format_number(t.uwm[j]) << '\n';
    }
    return out.str();
}

std::string bootstrap_table_csv(const AnalysisReport& report) {
    if (!report.bootstrap) throw request_error("the report has no bootstrap results");
    const auto& b = *report.bootstrap;
    char pct[16];
    std::snprintf(pct, sizeof pct, "%g", 100.0 * (1.0 - b.alpha));
    const std::string level = std::string(pct) + "% CI";
    std::ostringstream out;
    out << "Dose,UM,UM " << level << " lower,UM " << level << " upper,%OBD (UM),UWM,UWM " << level << " lower,UWM "
        << level << " upper,%OBD (UWM)\n";
    for (std::size_t j = 0; j < b.doses.size(); ++j) {
        out << b.doses[j] << ',' << format_number(b.um_mean[j]) << ',' << format_number(b.um_ci[j].lower) << ','
            << format_number(b.um_ci[j].upper) << ',' << format_number(b.pct_obd_um[j]) << ','
            << format_number(b.uwm_mean[j]) << ',' << format_number(b.uwm_ci[j].lower) << ','
            << format_number(b.uwm_ci[j].upper) << ',' << format_number(b.pct_obd_uwm[j]) << '\n';
    }
    return out.str();
}

Json error_json(const Error& error) {
    Json e = {{"code", error.qualified_code()},
              {"module", std::string(to_string(error.module()))},
              {"message", error.what()}};
    if (error.row()) e["row"] = *error.row();
    if (error.column()) e["column"] = *error.column();
    return {{"error", e}};
}

}  // namespace cuimet
