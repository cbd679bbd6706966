#include "cuimet/estimation.hpp"

#include "cuimet/error.hpp"
#include "newton.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace cuimet {

namespace {

Error estimation_error(ErrorCode code, const std::string& message) {
    return Error(Module::Estimation, code, message);
}

double softplus(double eta) {
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

std::size_t count_distinct_doses(std::span<const DoseArm> arms) {
    std::vector<int> d;
    for (const auto& a : arms)
        if (a.n > 0) d.push_back(a.dose);
    std::sort(d.begin(), d.end());
    return static_cast<std::size_t>(std::unique(d.begin(), d.end()) - d.begin());
}

std::vector<double> dose_values(std::span<const DoseArm> arms) {
    std::vector<double> d;
    d.reserve(arms.size());
    for (const auto& a : arms) d.push_back(static_cast<double>(a.dose));
    return d;
}

std::vector<double> even_grid(double lo, double hi, int points) {
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        g[static_cast<std::size_t>(i)] = (i == points - 1) ? hi : lo + (hi - lo) * i / (points - 1);
    return g;
}

struct Totals {
    double n = 0.0;
    double y = 0.0;
};

Totals totals(std::span<const DoseArm> arms) {
    Totals t;
    for (const auto& a : arms) {
        t.n += static_cast<double>(a.n);
        t.y += static_cast<double>(a.positives);
    }
    return t;
}

bool all_identical(const Totals& t) { return t.y == 0.0 || t.y == t.n; }

// Negative log-likelihood of a logit-linear predictor sum_c coef_c * x_c(dose)
// over grouped binomial data, plus ridge. `design` maps dose -> covariates.
struct GroupedLogit {
    std::span<const DoseArm> arms;
    std::vector<std::vector<double>> rows;  // covariates per arm
    double ridge = 0.0;

    double operator()(const Eigen::VectorXd& beta, Eigen::VectorXd* g, Eigen::MatrixXd* H) const {
        const Eigen::Index p = beta.size();
        double f = 0.5 * ridge * beta.squaredNorm();
        if (g) *g = ridge * beta;
        if (H) *H = ridge * Eigen::MatrixXd::Identity(p, p);
        for (std::size_t j = 0; j < arms.size(); ++j) {
            const double n = static_cast<double>(arms[j].n);
            const double y = static_cast<double>(arms[j].positives);
            double eta = 0.0;
            for (Eigen::Index c = 0; c < p; ++c) eta += beta[c] * rows[j][static_cast<std::size_t>(c)];
            f += n * softplus(eta) - y * eta;
            if (g || H) {
                const double prob = logistic(eta);
                const double r = n * prob - y;
                const double w = n * prob * (1.0 - prob);
                for (Eigen::Index a = 0; a < p; ++a) {
                    const double xa = rows[j][static_cast<std::size_t>(a)];
                    if (g) (*g)[a] += r * xa;
                    if (H)
                        for (Eigen::Index b = 0; b < p; ++b) (*H)(a, b) += w * xa * rows[j][static_cast<std::size_t>(b)];
                }
            }
        }
        return f;
    }
};

MarginalFit base_fit(ModelKind kind, std::span<const DoseArm> arms) {
    MarginalFit fit;
    fit.model = kind;
    fit.doses = dose_values(arms);
    return fit;
}

double start_intercept(const Totals& t) { return logit((t.y + 0.5) / (t.n + 1.0)); }

// Ridge-capped intercept-only fit used when every outcome is identical.
double degenerate_intercept(const Totals& t, double ridge, const FitConfig& config) {
    GroupedLogit one;
    DoseArm pooled{1, static_cast<std::size_t>(t.n), static_cast<std::size_t>(t.y)};
    one.arms = std::span<const DoseArm>(&pooled, 1);
    one.rows = {{1.0}};
    one.ridge = std::max(ridge, 1e-12);
    Eigen::VectorXd x0(1);
    x0 << start_intercept(t);
    auto res = detail::minimize_newton(one, x0, std::max(config.max_iterations, 200), config.convergence_tol);
    return res.x[0];
}

void finish_logit(MarginalFit& fit, std::span<const DoseArm> arms) {
    fit.fitted_probs = predict_curve(fit, fit.doses);
    fit.log_likelihood = binomial_log_likelihood(arms, fit.fitted_probs);
}

// Largest amount by which consecutive grid probabilities move against `dir`.
double grid_violation(const MarginalFit& fit, std::span<const double> grid, Direction dir) {
    const auto p = predict_curve(fit, grid);
    const double s = static_cast<double>(static_cast<int>(dir));
    double worst = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) worst = std::max(worst, s * (p[i - 1] - p[i]));
    return worst;
}

// ---------------------------------------------------------------------------
// Two-stage profile GLS
// ---------------------------------------------------------------------------

struct ProfileSolution {
    double theta = 0.0;
    double intercept = 0.0;
    double effect = 0.0;
    double rss = std::numeric_limits<double>::infinity();
};

class ProfileGls {
public:
    // basis(dose, theta) is the nonlinear regressor; the intercept and its
    // coefficient are profiled out by weighted least squares.
    ProfileGls(const StageOneEstimates& s1, std::function<double(double, double)> basis,
               std::optional<Direction> direction)
        : basis_(std::move(basis)), direction_(direction) {
        const auto J = static_cast<Eigen::Index>(s1.doses.size());
        doses_ = s1.doses;
        Eigen::LLT<Eigen::MatrixXd> llt(s1.covariance);
        if (llt.info() != Eigen::Success)
            throw estimation_error(ErrorCode::InvalidConfig, "stage-one covariance is not positive definite");
        L_ = llt.matrixL();
        Eigen::VectorXd l = Eigen::Map<const Eigen::VectorXd>(s1.logits.data(), J);
        y_ = L_.triangularView<Eigen::Lower>().solve(l);
        one_ = L_.triangularView<Eigen::Lower>().solve(Eigen::VectorXd::Ones(J));
    }

    ProfileSolution solve(double theta) const {
        const auto J = static_cast<Eigen::Index>(doses_.size());
        Eigen::VectorXd b(J);
        for (Eigen::Index j = 0; j < J; ++j) b[j] = basis_(doses_[static_cast<std::size_t>(j)], theta);
        double scale = b.cwiseAbs().maxCoeff();
        ProfileSolution sol;
        sol.theta = theta;
        const auto intercept_only = [&] {
            sol.intercept = one_.dot(y_) / one_.squaredNorm();
            sol.effect = 0.0;
            sol.rss = (y_ - sol.intercept * one_).squaredNorm();
        };
        if (!(scale > 0.0) || !std::isfinite(scale)) {
            intercept_only();
            return sol;
        }
        Eigen::MatrixXd X(J, 2);
        X.col(0) = one_;
        X.col(1) = L_.triangularView<Eigen::Lower>().solve(b / scale);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < 2) {
            intercept_only();
            return sol;
        }
        Eigen::Vector2d c = qr.solve(y_);
        if (direction_ && static_cast<int>(*direction_) * c[1] < 0.0) {
            intercept_only();
            return sol;
        }
        sol.intercept = c[0];
        sol.effect = c[1] / scale;
        sol.rss = (y_ - X * c).squaredNorm();
        return sol;
    }

    // Log-spaced grid search followed by Brent refinement inside the best bracket.
    ProfileSolution minimize(Interval bounds, int max_iterations, bool& converged, int& iterations) const {
        constexpr int kGrid = 200;
        const double llo = std::log(bounds.lower), lhi = std::log(bounds.upper);
        std::vector<double> thetas(kGrid);
        std::size_t best = 0;
        double best_rss = std::numeric_limits<double>::infinity();
        for (int i = 0; i < kGrid; ++i) {
            thetas[static_cast<std::size_t>(i)] =
                (i == kGrid - 1) ? bounds.upper : std::exp(llo + (lhi - llo) * i / (kGrid - 1));
            const double r = solve(thetas[static_cast<std::size_t>(i)]).rss;
            if (r < best_rss) {
                best_rss = r;
                best = static_cast<std::size_t>(i);
            }
        }
        const double a = thetas[best == 0 ? 0 : best - 1];
        const double b = thetas[std::min<std::size_t>(best + 1, kGrid - 1)];
        std::uintmax_t iters = static_cast<std::uintmax_t>(std::max(1, max_iterations));
        const auto r = boost::math::tools::brent_find_minima(
            [this](double t) { return solve(t).rss; }, a, b, std::numeric_limits<double>::digits, iters);
        iterations = static_cast<int>(iters);
        converged = iters < static_cast<std::uintmax_t>(std::max(1, max_iterations));
        ProfileSolution refined = solve(r.first);
        ProfileSolution grid_best = solve(thetas[best]);
        return refined.rss <= grid_best.rss ? refined : grid_best;
    }

private:
    std::vector<double> doses_;
    std::function<double(double, double)> basis_;
    std::optional<Direction> direction_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd y_;
    Eigen::VectorXd one_;
};

void check_stage_one(const StageOneEstimates& s1) {
    const auto J = s1.doses.size();
    if (s1.logits.size() != J || static_cast<std::size_t>(s1.covariance.rows()) != J ||
        static_cast<std::size_t>(s1.covariance.cols()) != J)
        throw Error(Module::Estimation, ErrorCode::DimensionMismatch, "stage-one dimensions do not agree");
    if (J < 3)
        throw estimation_error(ErrorCode::TooFewDoseLevels,
                               "two-stage models need at least 3 dose levels, got " + std::to_string(J));
    for (std::size_t j = 0; j < J; ++j) {
        if (!std::isfinite(s1.logits[j]) || !std::isfinite(s1.doses[j]))
            throw estimation_error(ErrorCode::InvalidConfig, "stage-one estimates must be finite");
    }
}

double max_dose(const std::vector<double>& doses) { return *std::max_element(doses.begin(), doses.end()); }

double max_spacing(std::vector<double> doses) {
    std::sort(doses.begin(), doses.end());
    double s = 0.0;
    for (std::size_t i = 1; i < doses.size(); ++i) s = std::max(s, doses[i] - doses[i - 1]);
    return s > 0.0 ? s : 1.0;
}

void finish_two_stage(MarginalFit& fit, const StageOneEstimates& s1) {
    fit.doses = s1.doses;
    fit.fitted_probs = predict_curve(fit, fit.doses);
    const auto [lo, hi] = std::minmax_element(s1.logits.begin(), s1.logits.end());
    fit.degenerate = (*hi - *lo) < 1e-12;
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and helpers
// ---------------------------------------------------------------------------

std::string_view to_string(Model model) {
    switch (model) {
        case Model::Empirical: return "empirical";
        case Model::LogitLinear: return "logit_linear";
        case Model::LogitQuadratic: return "logit_quadratic";
        case Model::Emax: return "emax";
        case Model::Exponential: return "exponential";
    }
    return "unknown";
}

std::optional<Model> parse_model(std::string_view name) {
    std::string s;
    for (char c : name) s.push_back(c == '-' || c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "empirical") return Model::Empirical;
    if (s == "logit_linear" || s == "linear") return Model::LogitLinear;
    if (s == "logit_quadratic" || s == "quadratic") return Model::LogitQuadratic;
    if (s == "emax") return Model::Emax;
    if (s == "exponential" || s == "exp") return Model::Exponential;
    return std::nullopt;
}

double logistic(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void FitConfig::validate() const {
    auto bad = [](const std::string& m) { return estimation_error(ErrorCode::InvalidConfig, m); };
    if (max_iterations < 1) throw bad("max_iterations must be >= 1");
    if (!(convergence_tol > 0.0)) throw bad("convergence_tol must be > 0");
    if (!(penalty_weight > 0.0)) throw bad("penalty_weight must be > 0");
    if (derivative_grid_points < 2) throw bad("derivative_grid_points must be >= 2");
    if (!(continuity_correction > 0.0)) throw bad("continuity_correction must be > 0");
    if (!(ridge >= 0.0)) throw bad("ridge must be >= 0");
    for (const auto& [name, iv] : {std::pair{"ed50_bounds", ed50_bounds}, std::pair{"sigma_bounds", sigma_bounds}}) {
        if (iv && !(iv->lower > 0.0 && iv->lower < iv->upper && std::isfinite(iv->upper)))
            throw bad(std::string(name) + " must satisfy 0 < lower < upper");
    }
}

double MarginalFit::param(std::string_view name) const {
    for (const auto& [n, v] : params)
        if (n == name) return v;
    throw estimation_error(ErrorCode::IndexOutOfRange, "fit has no parameter '" + std::string(name) + "'");
}

double binomial_log_likelihood(std::span<const DoseArm> arms, std::span<const double> probs) {
    if (arms.size() != probs.size())
        throw Error(Module::Estimation, ErrorCode::DimensionMismatch, "arms and probabilities differ in length");
    double ll = 0.0;
    for (std::size_t j = 0; j < arms.size(); ++j) {
        const double y = static_cast<double>(arms[j].positives);
        const double n = static_cast<double>(arms[j].n);
        const double p = probs[j];
        if (y > 0.0) ll += y * std::log(p);
        if (n - y > 0.0) ll += (n - y) * std::log1p(-p);
    }
    return ll;
}

// ---------------------------------------------------------------------------
// Empirical
// ---------------------------------------------------------------------------

MarginalFit estimate_empirical(std::span<const DoseArm> arms) {
    MarginalFit fit = base_fit({Model::Empirical, false}, arms);
    fit.fitted_probs.reserve(arms.size());
    for (const auto& a : arms) fit.fitted_probs.push_back(a.rate());
    fit.log_likelihood = binomial_log_likelihood(arms, fit.fitted_probs);
    fit.objective = -*fit.log_likelihood;
    fit.degenerate = all_identical(totals(arms));
    return fit;
}

MarginalFit estimate_empirical(const TrialDataset& dataset, std::size_t endpoint) {
    const auto arms = dataset.arm_summary(endpoint);
    return estimate_empirical(arms);
}

// Re-runs `objective` with the ridge switched off, starting from the ridged
// optimum. The unpenalized answer is kept only when it stays close, which is
// the case whenever a finite maximum likelihood estimate exists. Under
// separation the ridge is instead shrunk 100x at a time (warm started) so the
// fitted probabilities approach the boundary rates while staying finite.
template <typename Objective>
detail::NewtonResult polish_without_ridge(GroupedLogit& nll, const Objective& objective,
                                          const detail::NewtonResult& ridged, const FitConfig& config) {
    if (nll.ridge == 0.0 || !ridged.converged) return ridged;
    const double saved = nll.ridge;
    nll.ridge = 0.0;
    auto res = detail::minimize_newton(objective, ridged.x, config.max_iterations, config.convergence_tol);
    const double drift = (res.x - ridged.x).cwiseAbs().maxCoeff();
    if (res.converged && drift <= 1e-3 * (1.0 + ridged.x.cwiseAbs().maxCoeff())) {
        nll.ridge = saved;
        res.iterations += ridged.iterations;
        return res;
    }

    detail::NewtonResult best = ridged;
    for (double r = saved * 1e-2; r >= saved * 1e-6; r *= 1e-2) {
        nll.ridge = r;
        auto step = detail::minimize_newton(objective, best.x, config.max_iterations, config.convergence_tol);
        if (!step.converged) break;
        step.iterations += best.iterations;
        best = step;
    }
    nll.ridge = saved;
    return best;
}

// ---------------------------------------------------------------------------
// Logit linear
// ---------------------------------------------------------------------------

MarginalFit fit_logit_linear(std::span<const DoseArm> arms, bool monotone, Direction direction,
                             const FitConfig& config) {
    config.validate();
    if (count_distinct_doses(arms) < 2)
        throw estimation_error(ErrorCode::TooFewDoseLevels, "logit linear model needs at least 2 dose levels");

    MarginalFit fit = base_fit({Model::LogitLinear, monotone}, arms);
    if (monotone) fit.direction = direction;
    const Totals tot = totals(arms);

    if (all_identical(tot)) {
        fit.params = {{"beta0", degenerate_intercept(tot, config.ridge, config)}, {"beta1", 0.0}};
        fit.degenerate = true;
        fit.converged = true;
        finish_logit(fit, arms);
        fit.objective = -*fit.log_likelihood + 0.5 * config.ridge * fit.params[0].second * fit.params[0].second;
        return fit;
    }

    GroupedLogit nll;
    nll.arms = arms;
    nll.ridge = config.ridge;
    for (const auto& a : arms) nll.rows.push_back({1.0, static_cast<double>(a.dose)});

    Eigen::VectorXd x0(2);
    x0 << start_intercept(tot), 0.0;

    if (!monotone) {
        auto res = detail::minimize_newton(nll, x0, config.max_iterations, config.convergence_tol);
        res = polish_without_ridge(nll, nll, res, config);
        fit.params = {{"beta0", res.x[0]}, {"beta1", res.x[1]}};
        fit.converged = res.converged;
        fit.iterations = res.iterations;
        fit.objective = res.value;
    } else {
        // beta1 = s * exp(gamma); chain rule onto (beta0, gamma).
        const double s = static_cast<double>(static_cast<int>(direction));
        auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g, Eigen::MatrixXd* H) {
            const double beta1 = s * std::exp(x[1]);
            Eigen::Vector2d beta(x[0], beta1);
            Eigen::VectorXd gb;
            Eigen::MatrixXd Hb;
            const double f = nll(beta, (g || H) ? &gb : nullptr, H ? &Hb : nullptr);
            if (g) {
                g->resize(2);
                (*g)[0] = gb[0];
                (*g)[1] = gb[1] * beta1;
            }
            if (H) {
                H->resize(2, 2);
                (*H)(0, 0) = Hb(0, 0);
                (*H)(0, 1) = (*H)(1, 0) = Hb(0, 1) * beta1;
                (*H)(1, 1) = Hb(1, 1) * beta1 * beta1 + gb[1] * beta1;
            }
            return f;
        };
        auto res = detail::minimize_newton(objective, x0, config.max_iterations, config.convergence_tol);
        res = polish_without_ridge(nll, objective, res, config);
        fit.params = {{"beta0", res.x[0]}, {"beta1", s * std::exp(res.x[1])}};
        fit.converged = res.converged;
        fit.iterations = res.iterations;
        fit.objective = res.value;
    }
    finish_logit(fit, arms);
    return fit;
}

MarginalFit fit_logit_linear(const TrialDataset& dataset, std::size_t endpoint, bool monotone,
                             Direction direction, const FitConfig& config) {
    const auto arms = dataset.arm_summary(endpoint);
    return fit_logit_linear(arms, monotone, direction, config);
}

// ---------------------------------------------------------------------------
// Logit quadratic
// ---------------------------------------------------------------------------

MarginalFit fit_logit_quadratic(std::span<const DoseArm> arms, bool monotone, Direction direction,
                                const FitConfig& config) {
    config.validate();
    if (count_distinct_doses(arms) < 3)
        throw estimation_error(ErrorCode::TooFewDoseLevels, "logit quadratic model needs at least 3 dose levels");

    MarginalFit fit = base_fit({Model::LogitQuadratic, monotone}, arms);
    if (monotone) fit.direction = direction;
    const Totals tot = totals(arms);

    if (all_identical(tot)) {
        fit.params = {{"beta0", degenerate_intercept(tot, config.ridge, config)}, {"beta1", 0.0}, {"beta2", 0.0}};
        fit.degenerate = true;
        finish_logit(fit, arms);
        fit.objective = -*fit.log_likelihood + 0.5 * config.ridge * fit.params[0].second * fit.params[0].second;
        return fit;
    }

    GroupedLogit nll;
    nll.arms = arms;
    nll.ridge = config.ridge;
    for (const auto& a : arms) {
        const double d = static_cast<double>(a.dose);
        nll.rows.push_back({1.0, d, d * d});
    }
    Eigen::VectorXd x(3);
    x << start_intercept(tot), 0.0, 0.0;

    const auto [dmin_it, dmax_it] = std::minmax_element(fit.doses.begin(), fit.doses.end());
    const std::vector<double> grid = even_grid(*dmin_it, *dmax_it, config.derivative_grid_points);
    const double s = static_cast<double>(static_cast<int>(direction));

    const auto set_params = [&](const Eigen::VectorXd& b) {
        fit.params = {{"beta0", b[0]}, {"beta1", b[1]}, {"beta2", b[2]}};
    };

    if (!monotone) {
        auto res = detail::minimize_newton(nll, x, config.max_iterations, config.convergence_tol);
        res = polish_without_ridge(nll, nll, res, config);
        set_params(res.x);
        fit.converged = res.converged;
        fit.iterations = res.iterations;
        fit.objective = res.value;
        finish_logit(fit, arms);
        return fit;
    }

    // Penalized fit. The penalty weight is raised by 100x (warm-started) while
    // the grid predictions still move against the required direction.
    constexpr double kMaxWeight = 1e12;
    constexpr double kGridSlack = 1e-10;
    double weight = config.penalty_weight;
    fit.converged = true;
    fit.iterations = 0;
    for (;;) {
        auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd* g, Eigen::MatrixXd* H) {
            double f = nll(b, g, H);
            for (double d : grid) {
                const double v = -s * (b[1] + 2.0 * b[2] * d);
                if (v <= 0.0) continue;
                f += weight * v * v;
                const Eigen::Vector3d dv(0.0, -s, -2.0 * s * d);
                if (g) *g += 2.0 * weight * v * dv;
                if (H) *H += 2.0 * weight * dv * dv.transpose();
            }
            return f;
        };
        auto res = detail::minimize_newton(objective, x, config.max_iterations, config.convergence_tol);
        res = polish_without_ridge(nll, objective, res, config);
        x = res.x;
        fit.iterations += res.iterations;
        fit.converged = res.converged;
        fit.objective = res.value;
        set_params(x);
        if (!res.converged || weight >= kMaxWeight || grid_violation(fit, grid, direction) <= kGridSlack) break;
        weight = std::min(weight * 100.0, kMaxWeight);
    }
    finish_logit(fit, arms);
    return fit;
}

MarginalFit fit_logit_quadratic(const TrialDataset& dataset, std::size_t endpoint, bool monotone,
                                Direction direction, const FitConfig& config) {
    const auto arms = dataset.arm_summary(endpoint);
    return fit_logit_quadratic(arms, monotone, direction, config);
}

// ---------------------------------------------------------------------------
// Two-stage models
// ---------------------------------------------------------------------------

StageOneEstimates stage_one_logodds(std::span<const DoseArm> arms, const FitConfig& config) {
    config.validate();
    const auto J = static_cast<Eigen::Index>(arms.size());
    StageOneEstimates s1;
    s1.doses = dose_values(arms);
    s1.logits.resize(arms.size());
    s1.covariance = Eigen::MatrixXd::Zero(J, J);
    for (Eigen::Index j = 0; j < J; ++j) {
        const auto& a = arms[static_cast<std::size_t>(j)];
        if (a.n == 0) throw Error(Module::Estimation, ErrorCode::EmptyDataset, "dose arm has no patients");
        const double y = static_cast<double>(a.positives);
        const double n = static_cast<double>(a.n);
        const double c = (a.positives == 0 || a.positives == a.n) ? config.continuity_correction : 0.0;
        s1.logits[static_cast<std::size_t>(j)] = std::log((y + c) / (n - y + c));
        s1.covariance(j, j) = 1.0 / (y + c) + 1.0 / (n - y + c);
    }
    return s1;
}

StageOneEstimates stage_one_logodds(const TrialDataset& dataset, std::size_t endpoint, const FitConfig& config) {
    const auto arms = dataset.arm_summary(endpoint);
    return stage_one_logodds(arms, config);
}

MarginalFit fit_emax(const StageOneEstimates& stage_one, const FitConfig& config,
                     std::optional<Direction> direction) {
    config.validate();
    check_stage_one(stage_one);
    const double dmax = max_dose(stage_one.doses);
    const Interval bounds = config.ed50_bounds.value_or(Interval{1e-3, 1.5 * dmax});

    ProfileGls gls(stage_one, [](double d, double ed50) { return d / (ed50 + d); }, direction);
    MarginalFit fit;
    fit.model = {Model::Emax, true};
    fit.direction = direction;
    const auto sol = gls.minimize(bounds, config.max_iterations, fit.converged, fit.iterations);
    fit.params = {{"e0", sol.intercept}, {"emax", sol.effect}, {"ed50", sol.theta}};
    fit.objective = sol.rss;
    finish_two_stage(fit, stage_one);
    return fit;
}

MarginalFit fit_exponential(const StageOneEstimates& stage_one, const FitConfig& config,
                            std::optional<Direction> direction) {
    config.validate();
    check_stage_one(stage_one);
    const double dmax = max_dose(stage_one.doses);
    Interval bounds = config.sigma_bounds.value_or(Interval{0.1 * max_spacing(stage_one.doses), 10.0 * dmax});
    // exp(dose / sigma) must stay representable.
    bounds.lower = std::max(bounds.lower, std::abs(dmax) / 700.0);
    if (!(bounds.lower < bounds.upper))
        throw estimation_error(ErrorCode::InvalidConfig, "sigma bounds are empty after overflow guard");

    ProfileGls gls(stage_one, [](double d, double sigma) { return std::expm1(d / sigma); }, direction);
    MarginalFit fit;
    fit.model = {Model::Exponential, true};
    fit.direction = direction;
    const auto sol = gls.minimize(bounds, config.max_iterations, fit.converged, fit.iterations);
    fit.params = {{"e0", sol.intercept}, {"e1", sol.effect}, {"sigma", sol.theta}};
    fit.objective = sol.rss;
    finish_two_stage(fit, stage_one);
    return fit;
}

// ---------------------------------------------------------------------------
// Curves and dispatch
// ---------------------------------------------------------------------------

std::vector<double> predict_curve(const MarginalFit& fit, std::span<const double> dose_grid) {
    std::vector<double> out;
    out.reserve(dose_grid.size());
    switch (fit.model.variant) {
        case Model::Empirical:
            throw estimation_error(ErrorCode::EmpiricalHasNoCurve, "empirical estimates have no model curve");
        case Model::LogitLinear: {
            const double b0 = fit.param("beta0"), b1 = fit.param("beta1");
            for (double d : dose_grid) out.push_back(logistic(b0 + b1 * d));
            break;
        }
        case Model::LogitQuadratic: {
            const double b0 = fit.param("beta0"), b1 = fit.param("beta1"), b2 = fit.param("beta2");
            for (double d : dose_grid) out.push_back(logistic(b0 + b1 * d + b2 * d * d));
            break;
        }
        case Model::Emax: {
            const double e0 = fit.param("e0"), emax = fit.param("emax"), ed50 = fit.param("ed50");
            for (double d : dose_grid) out.push_back(logistic(e0 + emax * d / (ed50 + d)));
            break;
        }
        case Model::Exponential: {
            const double e0 = fit.param("e0"), e1 = fit.param("e1"), sigma = fit.param("sigma");
            for (double d : dose_grid) out.push_back(logistic(e1 == 0.0 ? e0 : e0 + e1 * std::expm1(d / sigma)));
            break;
        }
    }
    return out;
}

MarginalFit fit_marginal(const TrialDataset& dataset, std::size_t endpoint, const ModelKind& kind,
                         const FitConfig& config) {
    if (endpoint >= dataset.num_endpoints())
        throw estimation_error(ErrorCode::IndexOutOfRange, "endpoint index " + std::to_string(endpoint) + " out of range");
    const bool toxicity = dataset.endpoints()[endpoint].is_toxicity;
    const auto arms = dataset.arm_summary(endpoint);
    const Direction dir = toxicity ? Direction::Decreasing : Direction::Increasing;

    MarginalFit fit;
    switch (kind.variant) {
        case Model::Empirical:
            return estimate_empirical(arms);
        case Model::LogitLinear:
            return fit_logit_linear(arms, toxicity || kind.monotone, dir, config);
        case Model::LogitQuadratic:
            return fit_logit_quadratic(arms, toxicity || kind.monotone, dir, config);
        case Model::Emax:
            fit = fit_emax(stage_one_logodds(arms, config), config,
                           toxicity ? std::optional<Direction>(dir) : std::nullopt);
            break;
        case Model::Exponential:
            fit = fit_exponential(stage_one_logodds(arms, config), config,
                                  toxicity ? std::optional<Direction>(dir) : std::nullopt);
            break;
    }
    fit.log_likelihood = binomial_log_likelihood(arms, fit.fitted_probs);
    return fit;
}

}  // namespace cuimet
