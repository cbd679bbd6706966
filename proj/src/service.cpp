#include "cuimet/service.hpp"

#include "cuimet/error.hpp"

#include <httplib.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace cuimet {

namespace {

Error request_error(const std::string& message) { return Error(Module::App, ErrorCode::InvalidRequest, message); }

HttpResponse json_response(const Json& body, int status = 200) { return {status, body.dump(), "application/json"}; }

Json parse_body(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw request_error(std::string("request body is not valid JSON: ") + e.what());
    }
}

std::vector<double> number_list(const Json& v, const std::string& what) {
    if (!v.is_array()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, what + " must be an array");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, what + " must hold numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

Eigen::MatrixXd matrix_from_json(const Json& v, const std::string& what) {
    if (!v.is_array() || v.empty()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, what + " must be a list of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto first = number_list(v[0], what);
    Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(first.size()));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = number_list(v[static_cast<std::size_t>(r)], what);
        if (row.size() != first.size()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, what + " rows differ in length");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

std::uint64_t seed_from_json(const Json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw request_error("seed must be a non-negative integer");
    return v.get<std::uint64_t>();
}

ScenarioSpec scenario_object(const Json& v) {
    for (const auto& [key, value] : v.items()) {
        if (key != "doses" && key != "n_per_dose" && key != "endpoints" && key != "target_probs" && key != "correlation" &&
            key != "seed")
            throw request_error("unknown key '" + key + "' in scenario");
    }
    for (const char* key : {"doses", "endpoints", "target_probs"})
        if (!v.contains(key)) throw Error(Module::Simulation, ErrorCode::InvalidScenario, std::string("scenario needs '") + key + "'");
    ScenarioSpec spec;
    for (double d : number_list(v["doses"], "doses")) {
        if (d != static_cast<double>(static_cast<int>(d)))
            throw Error(Module::Simulation, ErrorCode::InvalidScenario, "doses must be integers");
        spec.doses.push_back(static_cast<int>(d));
    }
    if (!v["endpoints"].is_array()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, "endpoints must be an array");
    for (const auto& name : v["endpoints"]) {
        if (!name.is_string()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, "endpoint names must be strings");
        spec.endpoint_names.push_back(name.get<std::string>());
    }
    spec.target_probs = matrix_from_json(v["target_probs"], "target_probs");
    const auto K = static_cast<Eigen::Index>(spec.endpoint_names.size());
    spec.correlation = v.contains("correlation") ? matrix_from_json(v["correlation"], "correlation")
                                                 : Eigen::MatrixXd::Identity(K, K);
    if (v.contains("n_per_dose")) {
        if (!v["n_per_dose"].is_number_integer()) throw Error(Module::Simulation, ErrorCode::InvalidScenario, "n_per_dose must be an integer");
        spec.n_per_dose = v["n_per_dose"].get<int>();
    }
    if (v.contains("seed")) spec.seed = seed_from_json(v["seed"]);
    return spec;
}

}  // namespace

ScenarioSpec scenario_from_json(const Json& body) {
    if (!body.is_object()) throw request_error("simulate request must be a JSON object");
    for (const auto& [key, value] : body.items()) {
        if (key != "builtin" && key != "scenario" && key != "seed" && key != "n_per_dose")
            throw request_error("unknown key '" + key + "' in simulate request");
    }
    if (body.contains("builtin") == body.contains("scenario"))
        throw request_error("give exactly one of 'builtin' and 'scenario'");

    ScenarioSpec spec;
    if (body.contains("builtin")) {
        if (!body["builtin"].is_string()) throw request_error("builtin must be a string");
        const auto b = parse_builtin(body["builtin"].get<std::string>());
        if (!b) throw Error(Module::Simulation, ErrorCode::InvalidScenario, "unknown built-in scenario '" + body["builtin"].get<std::string>() + "'");
        spec = builtin_scenario(*b);
    } else if (body["scenario"].is_string()) {
        spec = parse_scenario(body["scenario"].get<std::string>());
    } else if (body["scenario"].is_object()) {
        spec = scenario_object(body["scenario"]);
    } else {
        throw request_error("scenario must be scenario text or an object");
    }
    if (body.contains("seed")) spec.seed = seed_from_json(body["seed"]);
    if (body.contains("n_per_dose")) {
        if (!body["n_per_dose"].is_number_integer()) throw request_error("n_per_dose must be an integer");
        spec.n_per_dose = body["n_per_dose"].get<int>();
    }
    if (spec.n_per_dose > 1000000) throw request_error("n_per_dose is limited to 1000000");
    spec.validate();
    return spec;
}

Json dataset_summary(const TrialDataset& dataset) {
    Json rows = Json::array();
    for (std::size_t j = 0; j < dataset.num_doses(); ++j) {
        const int dose = dataset.dose_levels()[j];
        Json rates = Json::object();
        for (std::size_t k = 0; k < dataset.num_endpoints(); ++k)
            rates[dataset.endpoints()[k].name] = raw_event_rate(dataset, k, dose);
        rows.push_back({{"dose", dose}, {"n", dataset.per_dose_counts()[j]}, {"event_rates", rates}});
    }
    return rows;
}

DatasetStore::DatasetStore(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
    if (!dir_) return;
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw Error(Module::App, ErrorCode::Io, "cannot create store directory " + dir_->string() + ": " + ec.message());
    for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
        if (entry.path().extension() != ".csv") continue;
        try {
            auto ds = std::make_shared<const TrialDataset>(load_dataset(entry.path()));
            datasets_[entry.path().stem().string()] = std::move(ds);
        } catch (const Error& e) {
            std::cerr << "skipping stored dataset " << entry.path() << ": " << e.what() << '\n';
        }
    }
}

std::string DatasetStore::put(TrialDataset dataset) {
    const std::string id = dataset_id(dataset);
    std::lock_guard lock(mutex_);
    if (datasets_.contains(id)) return id;
    if (dir_) {
        const auto path = *dir_ / (id + ".csv");
        std::ofstream out(path, std::ios::binary);
        out << to_csv(dataset);
        if (!out) throw Error(Module::App, ErrorCode::Io, "cannot write " + path.string());
    }
    datasets_.emplace(id, std::make_shared<const TrialDataset>(std::move(dataset)));
    return id;
}

std::shared_ptr<const TrialDataset> DatasetStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = datasets_.find(id);
    if (it == datasets_.end()) throw Error(Module::App, ErrorCode::UnknownDataset, "no dataset with id '" + id + "'");
    return it->second;
}

std::size_t DatasetStore::size() const {
    std::lock_guard lock(mutex_);
    return datasets_.size();
}

Service::Service(ServiceOptions options) : options_(std::move(options)), store_(options_.store_dir) {}

HttpResponse Service::health() const { return json_response({{"status", "ok"}, {"datasets", store_.size()}}); }

HttpResponse Service::upload(const std::string& csv) {
    try {
        if (csv.size() > options_.max_upload_bytes)
            throw Error(Module::App, ErrorCode::PayloadTooLarge,
                        "upload of " + std::to_string(csv.size()) + " bytes exceeds the limit of " +
                            std::to_string(options_.max_upload_bytes));
        auto ds = parse_dataset(csv);
        Json info = {{"endpoints", Json::array()},
                     {"doses", ds.dose_levels()},
                     {"per_dose_counts", ds.per_dose_counts()},
                     {"patients", ds.size()},
                     {"warnings", ds.warnings()}};
        for (const auto& ep : ds.endpoints()) info["endpoints"].push_back(ep.name);
        info["dataset_id"] = store_.put(std::move(ds));
        return json_response(info, 201);
    } catch (const Error& e) {
        return error_response(e);
    }
}

HttpResponse Service::analyze(const std::string& json_body) {
    try {
        if (json_body.size() > options_.max_upload_bytes)
            throw Error(Module::App, ErrorCode::PayloadTooLarge, "request body exceeds the upload limit");
        const auto request = parse_analysis_request(parse_body(json_body));
        std::shared_ptr<const TrialDataset> ds;
        if (request.csv && request.dataset_id) throw request_error("give either 'dataset_id' or 'csv', not both");
        if (request.csv)
            ds = store_.get(store_.put(parse_dataset(*request.csv)));
        else if (request.dataset_id)
            ds = store_.get(*request.dataset_id);
        else
            throw request_error("request needs 'dataset_id' or 'csv'");
        const auto report = build_report(ds, request);
        Json body = to_json(report);
        body["exports"] = {{"utility_table_csv", utility_table_csv(report)},
                           {"bootstrap_table_csv", report.bootstrap ? Json(bootstrap_table_csv(report)) : Json()}};
        return json_response(body);
    } catch (const Error& e) {
        return error_response(e);
    }
}

HttpResponse Service::simulate(const std::string& json_body) {
    try {
        const auto spec = scenario_from_json(parse_body(json_body));
        auto ds = simulate_dataset(spec);
        Json body = {{"csv", to_csv(ds)}, {"summary", dataset_summary(ds)}, {"seed", spec.seed}, {"scenario", write_scenario(spec)}};
        body["dataset_id"] = store_.put(std::move(ds));
        return json_response(body);
    } catch (const Error& e) {
        return error_response(e);
    }
}

int http_status(const Error& error) {
    switch (error.code()) {
        case ErrorCode::UnknownDataset:
            return 404;
        case ErrorCode::PayloadTooLarge:
            return 413;
        case ErrorCode::Io:
            return 500;
        default:
            return 400;
    }
}

HttpResponse error_response(const Error& error) { return json_response(error_json(error), http_status(error)); }

struct HttpServer::Impl {
    explicit Impl(ServiceOptions options) : service(std::move(options)) {}
    Service service;
    httplib::Server server;
};

HttpServer::HttpServer(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
    auto& server = impl_->server;
    Service& service = impl_->service;
    server.set_payload_max_length(service.options().max_upload_bytes + 64 * 1024);

    const auto reply = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get("/health", [&service, reply](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
    server.Post("/datasets", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) {
            reply(res, service.upload(req.body));
        } else if (req.has_file("file")) {
            reply(res, service.upload(req.get_file_value("file").content));
        } else {
            reply(res, error_response(request_error("multipart upload needs a 'file' part")));
        }
    });
    server.Post("/analyze", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.analyze(req.body));
    });
    server.Post("/simulate", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.simulate(req.body));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(Json{{"error", {{"code", "app.Internal"}, {"module", "app"}, {"message", message}}}}.dump(),
                        "application/json");
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Module::App, ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

Service& HttpServer::service() { return impl_->service; }

void serve(const std::string& host, int port, ServiceOptions options) {
    HttpServer server(std::move(options));
    const int bound = server.bind(host, port);
    std::cerr << "cuimet listening on " << host << ':' << bound << '\n';
    server.listen();
}

}  // namespace cuimet
