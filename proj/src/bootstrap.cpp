#include "cuimet/bootstrap.hpp"

#include "cuimet/analysis.hpp"
#include "cuimet/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace cuimet {

namespace {

struct ReplicateOutcome {
    std::vector<double> um;
    std::vector<double> uwm;
    int obd_um = 0;
    int obd_uwm = 0;
    int fallbacks = 0;
    bool excluded = false;
};

bool is_fit_failure(const Error& e) { return e.module() == Module::Estimation; }

ReplicateOutcome run_replicate(const TrialDataset& dataset, std::span<const ModelKind> models,
                               const NormalizedWeights& weights, const BootstrapConfig& config, std::uint64_t b) {
    Rng rng(config.seed, b);
    const TrialDataset sample = resample_stratified(dataset, rng);

    ReplicateOutcome out;
    std::vector<MarginalFit> fits;
    fits.reserve(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) {
        bool failed = false;
        try {
            fits.push_back(fit_marginal(sample, k, models[k], config.fit));
            failed = !fits.back().converged;
            if (failed) fits.pop_back();
        } catch (const Error& e) {
            if (!is_fit_failure(e)) throw;
            failed = true;
        }
        if (!failed) continue;
        if (config.fit_failure_policy == FitFailurePolicy::ExcludeReplicate) {
            out.excluded = true;
            return out;
        }
        MarginalFit fallback = estimate_empirical(sample, k);
        fallback.fallback_used = true;
        fits.push_back(std::move(fallback));
        ++out.fallbacks;
    }

    const Eigen::MatrixXd m = marginal_matrix(fits);
    out.um = compute_um(m);
    out.uwm = compute_uwm(m, weights);
    out.obd_um = select_obd(out.um, dataset.dose_levels()).obd;
    out.obd_uwm = select_obd(out.uwm, dataset.dose_levels()).obd;
    return out;
}

}  // namespace

std::string_view to_string(FitFailurePolicy policy) {
    return policy == FitFailurePolicy::FallbackEmpirical ? "fallback_empirical" : "exclude_replicate";
}

void BootstrapConfig::validate() const {
    if (replicates < 1) throw Error(Module::Bootstrap, ErrorCode::InvalidConfig, "replicates must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(Module::Bootstrap, ErrorCode::InvalidConfig, "alpha must lie strictly between 0 and 1");
    fit.validate();
}

TrialDataset resample_stratified(const TrialDataset& dataset, Rng& rng) {
    std::vector<PatientRecord> records;
    records.reserve(dataset.size());
    for (std::size_t j = 0; j < dataset.num_doses(); ++j) {
        const auto arm = dataset.arm(j);
        for (std::size_t i = 0; i < arm.size(); ++i)
            records.push_back(dataset.records()[arm[rng.uniform_index(arm.size())]]);
    }
    return TrialDataset::from_normalized(dataset.endpoints(), std::move(records));
}

double quantile_sorted(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw Error(Module::Bootstrap, ErrorCode::EmptySampleList, "no samples");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

ConfidenceInterval percentile_ci(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw Error(Module::Bootstrap, ErrorCode::EmptySampleList, "no bootstrap samples");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(Module::Bootstrap, ErrorCode::InvalidConfig, "alpha must lie strictly between 0 and 1");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return {quantile_sorted(sorted, alpha / 2.0), quantile_sorted(sorted, 1.0 - alpha / 2.0)};
}

BootstrapResult run_bootstrap(const TrialDataset& dataset, std::span<const ModelKind> models,
                              const WeightScheme& scheme, const BootstrapConfig& config) {
    config.validate();
    Analysis baseline;
    try {
        baseline = analyze(dataset, models, scheme, Metric::UWM, config.fit);
    } catch (const Error& e) {
        if (!is_fit_failure(e)) throw;
        throw Error(Module::Bootstrap, ErrorCode::BaselineFitFailed,
                    std::string("baseline fit failed: ") + e.what());
    }
    for (std::size_t k = 0; k < baseline.fits.size(); ++k) {
        if (!baseline.fits[k].converged)
            throw Error(Module::Bootstrap, ErrorCode::BaselineFitFailed,
                        "baseline fit for endpoint '" + dataset.endpoints()[k].name + "' did not converge");
    }

    const auto B = static_cast<std::size_t>(config.replicates);
    std::vector<ReplicateOutcome> outcomes(B);

    unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, B));
    std::vector<std::exception_ptr> errors(threads);
    const auto worker = [&](unsigned t) {
        try {
            for (std::size_t b = t; b < B; b += threads)
                outcomes[b] = run_replicate(dataset, models, baseline.weights, config, b);
        } catch (...) {
            errors[t] = std::current_exception();
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    // Reduction in replicate order.
    const std::size_t J = dataset.num_doses();
    BootstrapResult res;
    res.doses = dataset.dose_levels();
    res.replicates = config.replicates;
    res.alpha = config.alpha;
    res.seed = config.seed;
    std::vector<std::vector<double>> um(J), uwm(J);
    std::vector<int> count_um(J, 0), count_uwm(J, 0);
    for (const auto& o : outcomes) {
        res.fallback_count += o.fallbacks;
        if (o.excluded) {
            ++res.excluded_count;
            continue;
        }
        ++res.included;
        for (std::size_t j = 0; j < J; ++j) {
            um[j].push_back(o.um[j]);
            uwm[j].push_back(o.uwm[j]);
        }
        ++count_um[dataset.dose_position(o.obd_um)];
        ++count_uwm[dataset.dose_position(o.obd_uwm)];
    }
    if (res.included == 0)
        throw Error(Module::Bootstrap, ErrorCode::AllReplicatesExcluded, "every bootstrap replicate was excluded");

    const double denom = static_cast<double>(res.included);
    for (std::size_t j = 0; j < J; ++j) {
        res.um_ci.push_back(percentile_ci(um[j], config.alpha));
        res.uwm_ci.push_back(percentile_ci(uwm[j], config.alpha));
        double su = 0.0, sw = 0.0;
        for (std::size_t i = 0; i < um[j].size(); ++i) {
            su += um[j][i];
            sw += uwm[j][i];
        }
        res.um_mean.push_back(su / denom);
        res.uwm_mean.push_back(sw / denom);
        res.pct_obd_um.push_back(100.0 * count_um[j] / denom);
        res.pct_obd_uwm.push_back(100.0 * count_uwm[j] / denom);
    }
    return res;
}

}  // namespace cuimet
