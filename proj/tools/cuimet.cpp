// Command-line front end: analyze a trial CSV, simulate a scenario, or run the HTTP service.
#include "cuimet/error.hpp"
#include "cuimet/report.hpp"
#include "cuimet/service.hpp"
#include "cuimet/simulation.hpp"
#include "cuimet/trial_data.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace cuimet;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Module::App, ErrorCode::Io, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(Module::App, ErrorCode::Io, "cannot write " + path);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::pair<std::string, std::string> key_value(const std::string& item, const std::string& what) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(Module::App, ErrorCode::InvalidRequest, what + " entries look like name=value, got '" + item + "'");
    return {item.substr(0, eq), item.substr(eq + 1)};
}

struct AnalyzeArgs {
    std::string csv;
    std::string config;
    std::string weights;
    std::string models;
    std::string metric;
    int bootstrap = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::string policy;
    unsigned threads = 0;
    int grid = 0;
    std::string out;
    std::string utility_csv;
    std::string bootstrap_csv;
    bool seed_set = false;
};

int run_analyze(const AnalyzeArgs& a) {
    auto ds = std::make_shared<const TrialDataset>(load_dataset(a.csv));
    Json body = a.config.empty() ? Json::object() : Json::parse(read_file(a.config));

    if (!a.models.empty()) {
        Json m = Json::object();
        for (const auto& item : split(a.models, ',')) {
            const auto [name, model] = key_value(item, "--models");
            m[name] = model;
        }
        body["models"] = m;
    }
    if (!a.weights.empty()) {
        const auto items = split(a.weights, ',');
        const bool named = !items.empty() && items[0].find('=') != std::string::npos;
        Json w = named ? Json::object() : Json::array();
        for (const auto& item : items) {
            if (named) {
                const auto [name, value] = key_value(item, "--weights");
                w[name] = std::stod(value);
            } else {
                w.push_back(std::stod(item));
            }
        }
        body["weights"] = w;
    }
    if (!a.metric.empty()) body["metric"] = a.metric;
    if (a.grid > 0) body["curve_grid_points"] = a.grid;
    if (a.bootstrap > 0) {
        Json b = body.contains("bootstrap") && body["bootstrap"].is_object() ? body["bootstrap"] : Json::object();
        b["replicates"] = a.bootstrap;
        b["alpha"] = a.alpha;
        b["threads"] = a.threads;
        if (a.seed_set) b["seed"] = a.seed;
        if (!a.policy.empty()) b["policy"] = a.policy;
        body["bootstrap"] = b;
    }

    const auto request = parse_analysis_request(body);
    const auto report = build_report(ds, request);
    write_output(a.out, to_json(report).dump(2) + "\n");
    if (!a.utility_csv.empty()) write_output(a.utility_csv, utility_table_csv(report));
    if (!a.bootstrap_csv.empty()) write_output(a.bootstrap_csv, bootstrap_table_csv(report));
    return 0;
}

struct SimulateArgs {
    std::string builtin;
    std::string scenario;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int n = 0;
    std::string out;
    std::string write_scenario_to;
};

int run_simulate(const SimulateArgs& a) {
    if (a.builtin.empty() == a.scenario.empty())
        throw Error(Module::App, ErrorCode::InvalidRequest, "give exactly one of --builtin and --scenario");
    ScenarioSpec spec;
    if (!a.builtin.empty()) {
        const auto b = parse_builtin(a.builtin);
        if (!b) throw Error(Module::Simulation, ErrorCode::InvalidScenario, "unknown built-in scenario '" + a.builtin + "'");
        spec = builtin_scenario(*b);
    } else {
        spec = parse_scenario(read_file(a.scenario));
    }
    if (a.seed_set) spec.seed = a.seed;
    if (a.n > 0) spec.n_per_dose = a.n;
    const auto ds = simulate_dataset(spec);
    write_output(a.out, to_csv(ds));
    if (!a.write_scenario_to.empty()) write_output(a.write_scenario_to, write_scenario(spec));

    // Summary goes to stderr when the CSV itself is on stdout.
    std::ostream& log = (a.out.empty() || a.out == "-") ? std::cerr : std::cout;
    log << "seed " << spec.seed << ", " << ds.size() << " patients\n";
    for (const auto& row : dataset_summary(ds)) {
        log << "dose " << row["dose"].get<int>() << " (n=" << row["n"].get<std::size_t>() << "):";
        for (const auto& ep : ds.endpoints()) log << ' ' << ep.name << '=' << row["event_rates"][ep.name].get<double>();
        log << '\n';
    }
    return 0;
}

int run_serve(const std::string& bind, const std::string& store_dir, std::size_t max_upload) {
    std::string host = bind;
    int port = 8080;
    if (const auto colon = bind.rfind(':'); colon != std::string::npos) {
        host = bind.substr(0, colon);
        port = std::stoi(bind.substr(colon + 1));
    }
    ServiceOptions opts;
    opts.max_upload_bytes = max_upload;
    if (!store_dir.empty()) opts.store_dir = store_dir;
    serve(host, port, std::move(opts));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clinical utility index dose selection"};
    app.require_subcommand(1);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Fit marginal models and rank doses by utility");
    analyze->add_option("csv", an.csv, "Trial CSV (ID, Dose, Toxicity, Efficacy, ...)")->required()->check(CLI::ExistingFile);
    analyze->add_option("--config", an.config, "JSON request with models, weights, metric, fit and bootstrap settings")
        ->check(CLI::ExistingFile);
    analyze->add_option("--weights", an.weights, "Weights, e.g. 1,2.5,1.5 or Toxicity=1,Efficacy=2.5");
    analyze->add_option("--models", an.models, "Models, e.g. Toxicity=exponential,Efficacy=logit_quadratic:mono");
    analyze->add_option("--metric", an.metric, "um or uwm (default uwm)");
    analyze->add_option("--bootstrap", an.bootstrap, "Bootstrap replicates (0 = none)")->check(CLI::Range(0, 100000));
    auto* an_seed = analyze->add_option("--seed", an.seed, "Bootstrap seed");
    analyze->add_option("--alpha", an.alpha, "CI level is 1 - alpha")->check(CLI::Range(0.0, 1.0));
    analyze->add_option("--policy", an.policy, "fallback_empirical or exclude_replicate");
    analyze->add_option("--threads", an.threads, "Bootstrap threads (0 = all cores)");
    analyze->add_option("--grid", an.grid, "Points on the plotted dose grid");
    analyze->add_option("--out,-o", an.out, "JSON report path (default stdout)");
    analyze->add_option("--utility-csv", an.utility_csv, "Write per-dose marginals and utilities as CSV");
    analyze->add_option("--bootstrap-csv", an.bootstrap_csv, "Write bootstrap summary as CSV");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trial dataset");
    simulate->add_option("--builtin", sim.builtin, "example1, example2 or example3");
    simulate->add_option("--scenario", sim.scenario, "Scenario file")->check(CLI::ExistingFile);
    auto* sim_seed = simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--n", sim.n, "Patients per dose")->check(CLI::Range(1, 1000000));
    simulate->add_option("--out,-o", sim.out, "CSV path (default stdout)");
    simulate->add_option("--write-scenario", sim.write_scenario_to, "Also write the resolved scenario file");

    std::string bind = "127.0.0.1:8080";
    if (const char* env = std::getenv("CUIMET_BIND")) bind = env;
    std::string store_dir;
    std::size_t max_upload = 10 * 1024 * 1024;
    auto* srv = app.add_subcommand("serve", "Run the JSON HTTP service");
    srv->add_option("--bind", bind, "host:port (env CUIMET_BIND)");
    srv->add_option("--store-dir", store_dir, "Directory for uploaded datasets");
    srv->add_option("--max-upload", max_upload, "Upload limit in bytes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            an.seed_set = an_seed->count() > 0;
            return run_analyze(an);
        }
        if (*simulate) {
            sim.seed_set = sim_seed->count() > 0;
            return run_simulate(sim);
        }
        if (*srv) return run_serve(bind, store_dir, max_upload);
    } catch (const Error& e) {
        std::cerr << error_json(e).dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << Json{{"error", {{"code", "app.Internal"}, {"module", "app"}, {"message", e.what()}}}}.dump() << '\n';
        return 3;
    }
    return 0;
}
