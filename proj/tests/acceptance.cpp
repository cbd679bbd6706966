// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include "cuimet/analysis.hpp"
#include "cuimet/bootstrap.hpp"
#include "cuimet/error.hpp"
#include "cuimet/estimation.hpp"
#include "cuimet/simulation.hpp"
#include "cuimet/utility.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

using namespace cuimet;
using namespace cuimet::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (ok) return;
        if (pass) detail << what;
        else if (detail.tellp() < 600) detail << "; " << what;
        pass = false;
    }
};

int failures = 0;

void run(const std::string& name, double time_limit_s, const std::function<void(Outcome&)>& body) {
    Outcome out;
    const auto start = Clock::now();
    try {
        body(out);
    } catch (const std::exception& e) {
        out.require(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (time_limit_s > 0) out.require(secs < time_limit_s, "runtime " + std::to_string(secs) + " s over the limit");
    std::printf("%s %s (%.2f s)%s%s\n", out.pass ? "PASS" : "FAIL", name.c_str(), secs, out.pass ? "" : ": ",
                out.detail.str().c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
}

Eigen::MatrixXd example_matrix(const ReferenceExample& ex) {
    Eigen::MatrixXd m(5, 3);
    for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 3; ++k) m(j, k) = ex.marginals[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    return m;
}

NormalizedWeights weights_of(const std::array<double, 3>& w) { return normalize_weights({{w.begin(), w.end()}}); }

std::vector<double> grid(double lo, double hi, int points) {
    std::vector<double> g;
    for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * i / (points - 1));
    return g;
}

bool monotone(const std::vector<double>& p, Direction dir, double slack) {
    const double s = static_cast<int>(dir);
    for (std::size_t i = 1; i < p.size(); ++i)
        if (s * (p[i] - p[i - 1]) < -slack) return false;
    return true;
}

double norm(const std::vector<double>& g) { return std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

const std::vector<ModelKind> kReferenceModels = {
    {Model::Exponential, true}, {Model::LogitQuadratic, false}, {Model::LogitLinear, false}};

void reference_utility_arithmetic(Outcome& out) {
    const char* columns[] = {"UM", "UWM scheme 1", "UWM scheme 2"};
    int cells = 0;
    for (std::size_t e = 0; e < 3; ++e) {
        const auto& ex = reference_examples()[e];
        const auto m = example_matrix(ex);
        const std::vector<double> computed[] = {compute_um(m), compute_uwm(m, weights_of(ex.scheme1)),
                                                compute_uwm(m, weights_of(ex.scheme2))};
        const std::array<double, 5>* reference[] = {&ex.um, &ex.uwm1, &ex.uwm2};
        for (int c = 0; c < 3; ++c) {
            for (std::size_t j = 0; j < 5; ++j) {
                ++cells;
                const double want = (*reference[c])[j];
                const double got = computed[c][j];
                out.require(std::abs(got - want) <= 0.0005 + 1e-12,
                            "example " + std::to_string(e + 1) + " dose " + std::to_string(j + 1) + " " + columns[c] +
                                ": reference " + fmt(want) + ", computed " + fmt(got));
            }
        }
    }
    out.require(cells == 45, "expected 45 cells");
}

void obd_narrative(Outcome& out) {
    struct Expect {
        int um, scheme1, scheme2;
    };
    const Expect expect[] = {{4, 5, 4}, {-1, 4, 3}, {-1, 2, 1}};
    const std::vector<int> doses = {1, 2, 3, 4, 5};
    for (std::size_t e = 0; e < 3; ++e) {
        const auto& ex = reference_examples()[e];
        const auto m = example_matrix(ex);
        const int s1 = build_utility_table(doses, m, weights_of(ex.scheme1), Metric::UWM).obd;
        const int s2 = build_utility_table(doses, m, weights_of(ex.scheme2), Metric::UWM).obd;
        const std::string tag = "example " + std::to_string(e + 1);
        out.require(s1 == expect[e].scheme1, tag + " scheme 1 OBD " + std::to_string(s1));
        out.require(s2 == expect[e].scheme2, tag + " scheme 2 OBD " + std::to_string(s2));
        if (expect[e].um > 0) {
            const int um = build_utility_table(doses, m, weights_of({1, 1, 1}), Metric::UM).obd;
            out.require(um == expect[e].um, tag + " UM OBD " + std::to_string(um));
        }
    }
}

void weight_identity(Outcome& out) {
    Rng rng(20240601);
    for (int t = 0; t < 1000; ++t) {
        const auto J = static_cast<Eigen::Index>(2 + rng.uniform_index(7));
        const auto K = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
        Eigen::MatrixXd m(J, K);
        for (Eigen::Index j = 0; j < J; ++j)
            for (Eigen::Index k = 0; k < K; ++k) m(j, k) = rng.uniform01();

        const double w = 0.01 + 4.99 * rng.uniform01();
        const auto um = compute_um(m);
        const auto eq = compute_uwm(m, normalize_weights({std::vector<double>(static_cast<std::size_t>(K), w)}));
        for (std::size_t j = 0; j < um.size(); ++j)
            out.require(std::abs(eq[j] - um[j]) <= 1e-12, "trial " + std::to_string(t) + ": equal weights UWM != UM");

        std::vector<double> raw(static_cast<std::size_t>(K));
        for (double& v : raw) v = 5.0 * rng.uniform01();
        raw[0] = std::max(raw[0], 0.01);
        const double max_raw = *std::max_element(raw.begin(), raw.end());
        const double c = (0.01 + rng.uniform01() * (5.0 / max_raw - 0.01));
        std::vector<double> scaled = raw;
        for (double& v : scaled) v *= c;
        const auto u1 = compute_uwm(m, normalize_weights({raw}));
        const auto u2 = compute_uwm(m, normalize_weights({scaled}));
        for (std::size_t j = 0; j < u1.size(); ++j)
            out.require(std::abs(u1[j] - u2[j]) <= 1e-12, "trial " + std::to_string(t) + ": rescaling changed UWM");
        out.require(select_obd(u1).obd == select_obd(u2).obd, "trial " + std::to_string(t) + ": rescaling changed OBD");
    }
}

void estimation_oracle(Outcome& out) {
    Rng rng(4242);
    double worst_param = 0.0, worst_sat = 0.0, worst_grad = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t J = 3 + static_cast<std::size_t>(t % 3);
        const auto arms = random_arms(rng, J, 40);
        const auto nll = [&](const std::vector<double>& x) { return logit_nll(arms, x); };

        const auto lin = fit_logit_linear(arms, false, Direction::Increasing);
        const auto beta = irls_oracle(arms, 1);
        worst_param = std::max({worst_param, std::abs(lin.param("beta0") - beta[0]), std::abs(lin.param("beta1") - beta[1])});
        worst_grad = std::max(worst_grad, norm(fd_gradient(nll, {lin.param("beta0"), lin.param("beta1")})));

        const auto quad = fit_logit_quadratic(arms, false, Direction::Increasing);
        worst_grad =
            std::max(worst_grad, norm(fd_gradient(nll, {quad.param("beta0"), quad.param("beta1"), quad.param("beta2")})));

        // saturated fits: quadratic on three doses, linear on the first two
        if (J == 3) {
            for (std::size_t j = 0; j < 3; ++j) worst_sat = std::max(worst_sat, std::abs(quad.fitted_probs[j] - arms[j].rate()));
        }
        const std::vector<DoseArm> two(arms.begin(), arms.begin() + 2);
        const auto sat = fit_logit_linear(two, false, Direction::Increasing);
        for (std::size_t j = 0; j < 2; ++j) worst_sat = std::max(worst_sat, std::abs(sat.fitted_probs[j] - two[j].rate()));
        worst_grad = std::max(
            worst_grad,
            norm(fd_gradient([&](const std::vector<double>& x) { return logit_nll(two, x); }, {sat.param("beta0"), sat.param("beta1")})));
    }
    out.require(worst_param < 1e-4, "IRLS parameter gap " + fmt(worst_param));
    out.require(worst_sat <= 1e-6, "saturated rate gap " + fmt(worst_sat));
    out.require(worst_grad < 1e-3, "gradient norm " + fmt(worst_grad));
}

void monotonicity(Outcome& out) {
    Rng rng(777);
    const auto g = grid(1, 5, 101);
    int fits = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<DoseArm> arms = make_arms({1, 2, 3, 4, 5}, {10, 10, 10, 10, 10}, {0, 0, 0, 0, 0});
        switch (t % 5) {
            case 0:  // flat
                for (auto& a : arms) a.positives = 4;
                break;
            case 1:  // separated
                for (std::size_t j = 0; j < 5; ++j) arms[j].positives = j < 1 + t % 4 ? 0 : 10;
                break;
            case 2:  // reverse separated
                for (std::size_t j = 0; j < 5; ++j) arms[j].positives = j < 1 + t % 4 ? 10 : 0;
                break;
            default:
                for (auto& a : arms) {
                    a.n = 5 + rng.uniform_index(36);
                    a.positives = rng.uniform_index(a.n + 1);
                }
        }
        const std::string tag = "dataset " + std::to_string(t);
        for (Direction dir : {Direction::Increasing, Direction::Decreasing}) {
            out.require(monotone(predict_curve(fit_logit_linear(arms, true, dir), g), dir, 1e-6), tag + " monotone linear");
            out.require(monotone(predict_curve(fit_logit_quadratic(arms, true, dir), g), dir, 1e-6), tag + " monotone quadratic");
            fits += 2;
        }
        const auto s1 = stage_one_logodds(arms);
        for (const auto& fit : {fit_emax(s1), fit_exponential(s1)}) {
            const Direction dir = fit.params[1].second >= 0 ? Direction::Increasing : Direction::Decreasing;
            out.require(monotone(predict_curve(fit, g), dir, 1e-6), tag + " " + std::string(to_string(fit.model.variant)));
            ++fits;
        }
        // toxicity column: every model must come out non-increasing on the flipped scale
        std::vector<PatientRecord> recs;
        int id = 0;
        for (const auto& a : arms)
            for (std::size_t i = 0; i < a.n; ++i)
                recs.push_back({std::to_string(++id), a.dose, {static_cast<std::uint8_t>(i < a.positives ? 1 : 0), 1}});
        const auto ds = TrialDataset::from_raw({"Toxicity", "Efficacy"}, recs);
        for (Model m : {Model::LogitLinear, Model::LogitQuadratic, Model::Emax, Model::Exponential}) {
            const auto fit = fit_marginal(ds, 0, ModelKind{m, false});
            out.require(monotone(predict_curve(fit, g), Direction::Decreasing, 1e-6),
                        tag + " toxicity " + std::string(to_string(m)));
            ++fits;
        }
    }
    out.require(fits >= 200, "too few fits");
}

void two_stage_recovery(Outcome& out) {
    StageOneEstimates emax_s1, exp_s1;
    for (int d = 1; d <= 5; ++d) {
        emax_s1.doses.push_back(d);
        exp_s1.doses.push_back(d);
        emax_s1.logits.push_back(-2.0 + 3.0 * d / (2.0 + d));
        exp_s1.logits.push_back(-1.0 + 0.1 * std::expm1(d / 2.0));
    }
    emax_s1.covariance = exp_s1.covariance = Eigen::MatrixXd::Identity(5, 5) * 0.2;
    const auto emax = fit_emax(emax_s1);
    const auto expo = fit_exponential(exp_s1);
    const auto near = [&](const MarginalFit& f, const char* name, double want) {
        const double got = f.param(name);
        out.require(std::abs(got - want) < 1e-3, std::string(name) + " = " + fmt(got));
    };
    near(emax, "e0", -2.0);
    near(emax, "emax", 3.0);
    near(emax, "ed50", 2.0);
    near(expo, "e0", -1.0);
    near(expo, "e1", 0.1);
    near(expo, "sigma", 2.0);
    out.require(emax.objective < 1e-8, "Emax residual " + fmt(emax.objective));
    out.require(expo.objective < 1e-8, "exponential residual " + fmt(expo.objective));
}

void bootstrap_properties(Outcome& out) {
    const auto ds = simulate_dataset(builtin_scenario(BuiltinScenario::Example1, 2024));
    out.require(ds.size() == 150, "dataset size");
    BootstrapConfig cfg;
    cfg.replicates = 1000;
    cfg.alpha = 0.05;
    cfg.seed = 31337;
    cfg.threads = 1;
    const WeightScheme scheme{{0.2, 0.5, 0.3}};
    const auto serial = run_bootstrap(ds, kReferenceModels, scheme, cfg);
    cfg.threads = 4;
    const auto parallel = run_bootstrap(ds, kReferenceModels, scheme, cfg);
    out.require(serial == parallel, "serial and parallel results differ");

    const double s_um = std::accumulate(serial.pct_obd_um.begin(), serial.pct_obd_um.end(), 0.0);
    const double s_uwm = std::accumulate(serial.pct_obd_uwm.begin(), serial.pct_obd_uwm.end(), 0.0);
    out.require(std::abs(s_um - 100.0) <= 0.01, "%OBD (UM) sums to " + fmt(s_um));
    out.require(std::abs(s_uwm - 100.0) <= 0.01, "%OBD (UWM) sums to " + fmt(s_uwm));
    for (std::size_t j = 0; j < serial.doses.size(); ++j)
        for (const auto& ci : {serial.um_ci[j], serial.uwm_ci[j]})
            out.require(ci.lower <= ci.upper && ci.lower >= 0.0 && ci.upper <= 1.0, "bad CI at dose " + std::to_string(j + 1));

    std::vector<PatientRecord> recs;
    int id = 0;
    for (int d = 1; d <= 5; ++d)
        for (int i = 0; i < 30; ++i) recs.push_back({std::to_string(++id), d, {0, 1, 1}});
    const auto flat = TrialDataset::from_raw({"Toxicity", "Efficacy", "Tolerability"}, recs);
    cfg.threads = 1;
    const auto z = run_bootstrap(flat, kReferenceModels, scheme, cfg);
    for (std::size_t j = 0; j < 5; ++j) {
        out.require(z.um_ci[j].lower == z.um_ci[j].upper, "zero-variability UM CI has width");
        out.require(z.uwm_ci[j].lower == z.uwm_ci[j].upper, "zero-variability UWM CI has width");
    }
    out.require(std::count(z.pct_obd_um.begin(), z.pct_obd_um.end(), 100.0) == 1, "zero-variability %OBD (UM)");
    out.require(std::count(z.pct_obd_uwm.begin(), z.pct_obd_uwm.end(), 100.0) == 1, "zero-variability %OBD (UWM)");
}

void simulation_calibration(Outcome& out) {
    for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        ScenarioSpec s;
        s.doses = {1, 2};
        s.n_per_dose = 10000;
        s.endpoint_names = {"Efficacy"};
        s.target_probs = Eigen::MatrixXd::Constant(2, 1, p);
        s.correlation = Eigen::MatrixXd::Identity(1, 1);
        s.seed = 2;
        const auto ds = simulate_dataset(s);
        const double bound = 3.0 * std::sqrt(p * (1 - p) / 10000.0);
        for (const auto& arm : ds.arm_summary(0))
            out.require(std::abs(arm.rate() - p) <= bound, "p = " + fmt(p) + " realized " + fmt(arm.rate()));
    }

    Rng rng(5);
    const auto x = sample_mvn(Eigen::MatrixXd::Ones(3, 3), 5000, rng);
    out.require(x.col(0) == x.col(1) && x.col(1) == x.col(2), "rho = 1 columns differ");
    ScenarioSpec s = builtin_scenario(BuiltinScenario::Example1, 9);
    s.correlation = Eigen::MatrixXd::Ones(3, 3);
    s.target_probs.col(2) = s.target_probs.col(1);
    const auto ds = simulate_dataset(s);
    bool same = true;
    for (std::size_t r = 0; r < ds.size(); ++r) same = same && ds.raw_outcome(r, 1) == ds.raw_outcome(r, 2);
    out.require(same, "rho = 1 binary columns differ");

    double worst = 0.0;
    for (int i = 1; i < 100000; ++i) {
        const double p = i / 100000.0;
        worst = std::max(worst, std::abs(phi_reference(inverse_normal_cdf(p)) - p));
        if (i % 100 == 0) worst = std::max(worst, std::abs(inverse_normal_cdf(p) - quantile_bisection(p)));
    }
    for (const auto& a : kQuantileAnchors) worst = std::max(worst, std::abs(inverse_normal_cdf(a.p) - a.x));
    out.require(worst < 1e-9, "inverse normal error " + fmt(worst));
}

void end_to_end(Outcome& out) {
    const WeightScheme scheme{{0.2, 0.5, 0.3}};
    int hits = 0;
    std::vector<int> counts(6, 0);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto ds = simulate_dataset(builtin_scenario(BuiltinScenario::Example1, seed));
        const int obd = analyze(ds, kReferenceModels, scheme, Metric::UWM).table.obd;
        ++counts[static_cast<std::size_t>(obd)];
        hits += (obd == 4 || obd == 5);
    }
    std::ostringstream tally;
    for (int d = 1; d <= 5; ++d) tally << (d > 1 ? ", " : "") << "dose " << d << ": " << counts[static_cast<std::size_t>(d)];
    out.require(hits >= 48, "dose 4 or 5 chosen in " + std::to_string(hits) + "/50 runs (" + tally.str() + ")");
}

}  // namespace

int main() {
    run("utility arithmetic on reference marginals within 0.0005", 1.0, reference_utility_arithmetic);
    run("OBD selections on reference marginals", 1.0, obd_narrative);
    run("weight-reduction identity over 1000 random matrices", 0.0, weight_identity);
    run("estimation oracle equivalence on 100 random datasets", 0.0, estimation_oracle);
    run("monotonicity across 200 randomized datasets", 0.0, monotonicity);
    run("two-stage GLS parameter recovery", 0.0, two_stage_recovery);
    run("bootstrap properties at B = 1000", 30.0, bootstrap_properties);
    run("simulation calibration", 5.0, simulation_calibration);
    run("end-to-end dose selection on simulated increasing-response data", 0.0, end_to_end);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
