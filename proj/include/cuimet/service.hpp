#pragma once

#include "cuimet/report.hpp"
#include "cuimet/simulation.hpp"
#include "cuimet/trial_data.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace cuimet {

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

struct ServiceOptions {
    std::size_t max_upload_bytes = 10 * 1024 * 1024;
    /// Uploaded datasets are also written here as <id>.csv when set.
    std::optional<std::filesystem::path> store_dir;
};

/// Thread-safe map from dataset id to parsed dataset.
class DatasetStore {
public:
    explicit DatasetStore(std::optional<std::filesystem::path> dir = std::nullopt);

    /// Returns the content id; storing the same data twice is a no-op.
    std::string put(TrialDataset dataset);
    /// Throws app.UnknownDataset.
    std::shared_ptr<const TrialDataset> get(const std::string& id) const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const TrialDataset>> datasets_;
    std::optional<std::filesystem::path> dir_;
};

/// Transport-independent request handlers behind the HTTP endpoints.
class Service {
public:
    explicit Service(ServiceOptions options = {});

    HttpResponse health() const;
    /// Body is the CSV text.
    HttpResponse upload(const std::string& csv);
    HttpResponse analyze(const std::string& json_body);
    HttpResponse simulate(const std::string& json_body);

    const ServiceOptions& options() const noexcept { return options_; }
    DatasetStore& store() noexcept { return store_; }

private:
    ServiceOptions options_;
    DatasetStore store_;
};

/// {"builtin": "example1", "seed": 7, "n_per_dose": 30} or {"scenario": text | object}.
ScenarioSpec scenario_from_json(const Json& body);
/// Observed event rate per dose and endpoint, in the recorded convention.
Json dataset_summary(const TrialDataset& dataset);

int http_status(const Error& error);
HttpResponse error_response(const Error& error);

/// GET /health, POST /datasets, POST /analyze, POST /simulate over HTTP.
class HttpServer {
public:
    explicit HttpServer(ServiceOptions options = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Port 0 picks a free port. Returns the bound port; throws app.Io.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void listen();
    void stop();
    Service& service();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// bind + listen; blocks.
void serve(const std::string& host, int port, ServiceOptions options);

}  // namespace cuimet
