#pragma once

// Monte Carlo study driver: replications of generate -> step 1 -> centering ->
// MSM / SNMM, reduced to bias, RMSE and Monte Carlo standard errors.

#include "wpcausal/msm.hpp"
#include "wpcausal/scores.hpp"
#include "wpcausal/simulate.hpp"
#include "wpcausal/snmm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace wpcausal {

struct CellSpec {
    SimConfig sim;  // sim.seed is the master seed of the cell
    int replications = 200;
    std::vector<Method> methods{Method::msm, Method::snmm};
    std::vector<Centering> centerings{Centering::true_scores, Centering::proposed, Centering::observed_mean,
                                      Centering::none, Centering::trait_predictor};
    /// First intervened treatment; -1 picks 0 for K < 8 and K - 4 otherwise.
    int first_treatment = -1;
    MsmOptions msm;
    NuisanceConfig nuisance;
    bool confounder_interactions = false;
    FitOptions fit;

    InterventionWindow window() const;
    std::string label() const;
};

struct ParameterSummary {
    std::string name;
    double truth = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    double mc_se = 0.0;
    int used = 0;  // replications contributing (absent estimates excluded)
};

struct ArmResult {
    Method method = Method::msm;
    Centering centering = Centering::none;
    int discarded = 0;  // step-1 improper / non-converged discards for this arm
    int errors = 0;     // estimation failures (positivity, convergence, ...)
    MatrixXd estimates; // replications x parameters; NaN when discarded or absent
    std::vector<ParameterSummary> parameters;

    int discards() const { return discarded + errors; }
};

struct CellResult {
    CellSpec spec;
    int replications = 0;
    int discarded_improper = 0;  // replications whose step 1 was unusable
    NamedVector truth;
    std::vector<ArmResult> arms;
    std::vector<std::string> messages;  // first few estimation errors
    bool failed = false;

    const ArmResult& arm(Method method, Centering centering) const;
    const ParameterSummary& summary(Method method, Centering centering, const std::string& parameter) const;
};

/// Runs every replication of a cell. Replication r uses seed
/// derive_seed(spec.sim.seed, r); results are identical for any worker count.
CellResult run_cell(const CellSpec& spec, int workers = 1);

/// Bias, RMSE and MC standard error over the non-NaN rows of each column.
std::vector<ParameterSummary> summarize_estimates(const MatrixXd& estimates, const NamedVector& truth);

struct Report {
    std::string csv;
    std::string markdown;
};

/// Long-format table sorted by (phi2, K, N, scenario, method, centering, parameter).
Report summarize(const std::vector<CellResult>& results);

}  // namespace wpcausal
