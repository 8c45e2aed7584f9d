#include "wpcausal/msm.hpp"

#include "wpcausal/errors.hpp"
#include "wpcausal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wpcausal {

namespace {

std::string column_name(const ScoreSet& scores, int v, int t) {
    return scores.variables[static_cast<std::size_t>(v)].name + "_" + std::to_string(t);
}

}  // namespace

Design treatment_denominator_design(const ScoreSet& scores, int t, bool quadratic) {
    const int a = scores.index_of(Role::treatment);
    const int y = scores.index_of(Role::outcome);
    const auto confounders = scores.confounder_indices();
    Design d(scores.n_persons());
    if (t > 0) d.add(column_name(scores, a, t - 1), scores.series(a).col(t - 1));
    d.add(column_name(scores, y, t), scores.series(y).col(t));
    for (int c : confounders) d.add(column_name(scores, c, t), scores.series(c).col(t));
    if (quadratic) {
        d.add(column_name(scores, y, t) + "^2", scores.series(y).col(t).array().square().matrix());
        for (int c : confounders) d.add(column_name(scores, c, t) + "^2", scores.series(c).col(t).array().square().matrix());
    }
    return d;
}

Design treatment_numerator_design(const ScoreSet& scores, int t) {
    const int a = scores.index_of(Role::treatment);
    Design d(scores.n_persons());
    if (t > 0) d.add(column_name(scores, a, t - 1), scores.series(a).col(t - 1));
    return d;
}

TreatmentModel fit_treatment_models(const ScoreSet& scores, const TreatmentModelOptions& options) {
    if (scores.last_time() < 1) throw IdentificationError("treatment models need K >= 1");
    const int a = scores.index_of(Role::treatment);
    TreatmentModel model;
    model.options = options;
    for (int t = 0; t < scores.last_time(); ++t) {
        const VectorXd target = scores.series(a).col(t);
        TreatmentTimeModel tm;
        tm.time = t;
        tm.denominator = least_squares(treatment_denominator_design(scores, t, options.quadratic_confounders), target);
        tm.numerator = least_squares(treatment_numerator_design(scores, t), target);
        if (!(tm.denominator.residual_variance > 0.0) || !(tm.numerator.residual_variance > 0.0)) {
            throw IdentificationError("treatment model at time " + std::to_string(t) + " has zero residual variance");
        }
        model.times.push_back(std::move(tm));
    }
    return model;
}

double log_normal_density(double x, double mean, double variance) {
    const double z = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * z * z / variance;
}

VectorXd stabilized_weights(const ScoreSet& scores, const TreatmentModel& model, int outcome_time,
                            const InterventionWindow& window) {
    const int a = scores.index_of(Role::treatment);
    const int n = scores.n_persons();
    static const double kLogDensityFloor = std::log(1e-300);
    int first = window.first_treatment;
    if (first == 0 && !model.options.include_baseline) first = 1;
    VectorXd log_w = VectorXd::Zero(n);
    for (int t = first; t < outcome_time; ++t) {
        const auto& tm = model.at(t);
        const auto& treat = scores.series(a);
        for (int i = 0; i < n; ++i) {
            const double x = treat(i, t);
            const double den = log_normal_density(x, tm.denominator.fitted(i), tm.denominator.residual_variance);
            if (den < kLogDensityFloor) {
                throw PositivityError("treatment density below 1e-300 for person " + std::to_string(i) + " at time " +
                                      std::to_string(t));
            }
            log_w(i) += log_normal_density(x, tm.numerator.fitted(i), tm.numerator.residual_variance) - den;
        }
    }
    return log_w.array().exp();
}

CausalEstimates fit_msm(const ScoreSet& scores, const std::vector<VectorXd>& weights, const MsmOptions& options) {
    const int kk = scores.last_time();
    options.window.validate(kk);
    const int first = options.window.first_treatment;
    const int a = scores.index_of(Role::treatment);
    const int y = scores.index_of(Role::outcome);
    if (static_cast<int>(weights.size()) != kk + 1) throw ConfigError("fit_msm needs one weight vector per time point");

    CausalEstimates out;
    out.method = Method::msm;
    out.centering = scores.centering;
    const auto skipped = unidentified_outcome_times(scores, options.window);
    std::vector<std::string> names;
    std::vector<double> est;
    std::vector<double> se;
    for (int m = first + 1; m <= kk; ++m) {
        if (std::find(skipped.begin(), skipped.end(), m) != skipped.end()) {
            for (int t = first; t < m; ++t) out.absent.push_back(beta_name(m, t));
            continue;
        }
        VectorXd w = weights[static_cast<std::size_t>(m)];
        if (w.size() != scores.n_persons() || (w.array() <= 0.0).any() || !w.allFinite()) {
            throw ConfigError("weights for outcome time " + std::to_string(m) + " must be positive and finite");
        }
        if (options.truncate_percentile > 0.0) {
            std::vector<double> sorted(w.data(), w.data() + w.size());
            std::sort(sorted.begin(), sorted.end());
            const auto idx = static_cast<std::size_t>(options.truncate_percentile * (sorted.size() - 1));
            w = w.cwiseMin(sorted[idx]);
            out.warnings.push_back("weights truncated at percentile for outcome time " + std::to_string(m));
        }
        const double mean_w = w.mean();
        const double ratio = w.maxCoeff() / mean_w;
        out.diagnostics.emplace_back("weight_mean_" + std::to_string(m), mean_w);
        out.diagnostics.emplace_back("weight_max_" + std::to_string(m), w.maxCoeff());
        out.diagnostics.emplace_back("weight_max_over_mean_" + std::to_string(m), ratio);
        if (ratio > options.extreme_weight_ratio) {
            out.warnings.push_back("extreme weights for outcome time " + std::to_string(m));
        }

        Design d(scores.n_persons());
        for (int t = 0; t < m; ++t) d.add(column_name(scores, a, t), scores.series(a).col(t));
        const LinearFit fit = least_squares(d, scores.series(y).col(m), w);
        const MatrixXd cov = sandwich_covariance(d, fit, w);
        names.push_back("alpha_" + std::to_string(m));
        est.push_back(fit.coef(0));
        se.push_back(std::sqrt(cov(0, 0)));
        for (int t = first; t < m; ++t) {
            const int j = t + 1;  // column after the intercept
            names.push_back(beta_name(m, t));
            est.push_back(fit.coef(j));
            se.push_back(std::sqrt(cov(j, j)));
        }
    }
    out.names = std::move(names);
    out.estimates = Eigen::Map<VectorXd>(est.data(), static_cast<Eigen::Index>(est.size()));
    out.standard_errors = Eigen::Map<VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
    return out;
}

CausalEstimates estimate_msm(const ScoreSet& scores, const MsmOptions& options) {
    const int kk = scores.last_time();
    options.window.validate(kk);
    const TreatmentModel model = fit_treatment_models(scores, options.treatment);
    std::vector<VectorXd> weights(static_cast<std::size_t>(kk + 1));
    for (int m = options.window.first_treatment + 1; m <= kk; ++m) {
        weights[static_cast<std::size_t>(m)] = stabilized_weights(scores, model, m, options.window);
    }
    for (int m = 0; m <= options.window.first_treatment; ++m) weights[static_cast<std::size_t>(m)] = VectorXd::Ones(scores.n_persons());
    CausalEstimates out = fit_msm(scores, weights, options);
    for (const auto& tm : model.times) {
        out.diagnostics.emplace_back("treatment_r2_" + std::to_string(tm.time), tm.denominator.r_squared);
    }
    return out;
}

}  // namespace wpcausal
