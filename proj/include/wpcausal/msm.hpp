#pragma once

// Marginal structural models fitted by stabilized inverse-probability-weighted
// least squares on within-person scores.

#include "wpcausal/estimates.hpp"
#include "wpcausal/regression.hpp"

#include <vector>

namespace wpcausal {

struct TreatmentModelOptions {
    /// Weight the first intervened treatment at t = 0 by f(A*_0) / f(A*_0 | Y*_0, L*_0).
    bool include_baseline = true;
    /// Add squared concurrent confounders (Y*_t^2, L*_t^2) to the denominator model.
    bool quadratic_confounders = false;
};

/// Gaussian linear models for one treatment time.
struct TreatmentTimeModel {
    int time = 0;
    LinearFit denominator;  // A*_t on (A*_{t-1}, Y*_t, L*_t)
    LinearFit numerator;    // A*_t on A*_{t-1}
};

struct TreatmentModel {
    TreatmentModelOptions options;
    std::vector<TreatmentTimeModel> times;  // t = 0..K-1

    const TreatmentTimeModel& at(int t) const { return times.at(static_cast<std::size_t>(t)); }
};

Design treatment_denominator_design(const ScoreSet& scores, int t, bool quadratic);
Design treatment_numerator_design(const ScoreSet& scores, int t);

TreatmentModel fit_treatment_models(const ScoreSet& scores, const TreatmentModelOptions& options = {});

/// Log of the N(mean, variance) density.
double log_normal_density(double x, double mean, double variance);

/// Stabilized weight of every person for outcome time k: product over the
/// intervened treatments t < k of f(A*_t | A*_{t-1}) / f(A*_t | A*_{t-1}, Y*_t, L*_t).
VectorXd stabilized_weights(const ScoreSet& scores, const TreatmentModel& model, int outcome_time,
                            const InterventionWindow& window = {});

struct MsmOptions {
    InterventionWindow window;
    TreatmentModelOptions treatment;
    /// Diagnostics only: cap weights at this percentile (e.g. 0.99); 0 disables.
    double truncate_percentile = 0.0;
    double extreme_weight_ratio = 1000.0;
};

/// Weighted least squares of Y*_m on (1, controls A*_0..A*_{first-1},
/// A*_first..A*_{m-1}) for every outcome time m with HC0 standard errors.
/// `weights[m]` holds the weights for outcome time m.
CausalEstimates fit_msm(const ScoreSet& scores, const std::vector<VectorXd>& weights, const MsmOptions& options = {});

/// Treatment models, weights and the weighted fits in one call.
CausalEstimates estimate_msm(const ScoreSet& scores, const MsmOptions& options = {});

}  // namespace wpcausal
