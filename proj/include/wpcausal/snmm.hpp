#pragma once

// Linear structural nested mean models with doubly robust G-estimation.
//
// The blip of treatment A*_t on outcome Y*_m (later treatments at zero) is
//   (beta_{m,t} + sum_c gamma_{m,t,c} L*_{c,t}) A*_t.
// For each intervened time t and each later outcome m the blipped-down outcome
//   U_{t,m}(tau) = Y*_m - sum_{l=t}^{m-1} blip_{m,l}
// must be mean-independent of A*_t given the history H_t (scores through
// Y*_t, L*_t and treatments through A*_{t-1}). The estimating function is
//   sum_i sum_{t,m} [d - E(d | H_t)] / v_{t,m} * [U_{t,m} - E(U_{t,m} | H_t)]
// with nuisance model A for E(A*_t | H_t), nuisance model B (least squares on
// H_t) for E(U | H_t), and v_{t,m} the variance of the centred U element.

#include "wpcausal/estimates.hpp"
#include "wpcausal/msm.hpp"
#include "wpcausal/regression.hpp"

#include <span>
#include <string>
#include <vector>

namespace wpcausal {

struct BlipSpec {
    InterventionWindow window;
    /// Adds gamma terms for every confounder-role variable.
    bool confounder_interactions = false;
};

struct BlipParameter {
    int outcome_time = 0;
    int treatment_time = 0;
    int modifier = -1;  // position in the confounder list, -1 for the main effect
    std::string name;
};

/// Parameters ordered by outcome time, then treatment time, then beta before gammas.
std::vector<BlipParameter> blip_parameters(const ScoreSet& scores, const BlipSpec& spec);

/// Blip of A*_t = `treatment` on Y*_m. `confounders` are the confounder values
/// at time t in confounder-list order.
double blip(std::span<const BlipParameter> params, const VectorXd& tau, int outcome_time, int treatment_time,
            double treatment, std::span<const double> confounders);

/// N x (K - t) matrix of U_{t,m}(tau) for m = t+1..K (t = k-1 >= window start).
MatrixXd compute_U(const ScoreSet& scores, const VectorXd& tau, const BlipSpec& spec, int treatment_time);

enum class DFunction {
    efficient,   // E[dU/dtau | H_t, A*_t], later treatments projected linearly on (H_t, A*_t)
    blip_only,   // only the derivative of the time-t blip
};

struct NuisanceConfig {
    bool quadratic_a = false;  // squared concurrent confounders in model A
    bool intercept_only_a = false;  // model A ignores the history, for robustness checks
    bool quadratic_b = false;  // squared concurrent confounders in model B
    bool intercept_only_b = false;  // deliberately misspecified model B, for robustness checks
    DFunction d_function = DFunction::efficient;
    int max_iterations = 100;
    double tolerance = 1e-8;
    double variance_floor = 1e-8;
};

/// History design H_t: intercept, Y*_0..Y*_t, L*_0..L*_t, A*_0..A*_{t-1}.
Design history_design(const ScoreSet& scores, int treatment_time, bool quadratic);

/// Regressors of model B at time t under `config`.
Design nuisance_b_design(const ScoreSet& scores, int treatment_time, const NuisanceConfig& config);

/// Model B: least squares of each U_{t,m}(tau) component on H_t.
std::vector<LinearFit> fit_nuisance_b(const ScoreSet& scores, const VectorXd& tau, const BlipSpec& spec,
                                      int treatment_time, const NuisanceConfig& config = {});

struct NewtonStep {
    int iteration = 0;
    VectorXd tau;
    double equation_norm = 0.0;
    double step_norm = 0.0;
};

struct NuisanceBSummary {
    int treatment_time = 0;
    int outcome_time = 0;
    std::vector<std::string> names;
    VectorXd coef;
    double r_squared = 0.0;
};

struct ElementVariance {
    int treatment_time = 0;
    int outcome_time = 0;
    double variance = 0.0;
};

struct GEstimationResult {
    CausalEstimates tau;
    std::vector<NewtonStep> newton_trace;
    TreatmentModel nuisance_a;
    std::vector<NuisanceBSummary> nuisance_b;
    std::vector<ElementVariance> v_weights;
    MatrixXd jacobian;
    bool converged = false;

    std::string trace_text() const;
};

/// One (treatment time, outcome time) component of the estimating function.
struct Element {
    int treatment_time = 0;
    int outcome_time = 0;
    std::vector<int> parameters;  // indices into the parameter list
};

/// Precomputed G-estimation system. U is affine in tau and model B is a
/// linear projection, so U - E(U | H) = r0 - M tau for fixed residual makers;
/// the problem keeps the small cross-products needed for Newton steps.
class GEstimationProblem {
public:
    GEstimationProblem(const ScoreSet& scores, const BlipSpec& spec, const NuisanceConfig& config = {});

    const std::vector<BlipParameter>& parameters() const { return params_; }
    const std::vector<Element>& elements() const { return elements_; }
    const std::vector<std::string>& absent() const { return absent_; }
    int n_persons() const { return n_; }

    /// Variance of every centred U element at tau, floored.
    VectorXd element_variances(const VectorXd& tau) const;
    /// Estimating function divided by N, with element variances held at v.
    VectorXd estimating_function(const VectorXd& tau, const VectorXd& v) const;
    /// Derivative of estimating_function with respect to tau (v held fixed).
    MatrixXd jacobian(const VectorXd& v) const;

    GEstimationResult solve() const;

private:
    struct Gram {
        double r0r0 = 0.0;
        VectorXd mr0, dr0;
        MatrixXd mm, dm;
    };

    struct ElementData {
        VectorXd r0;  // Q_H Y_m
        MatrixXd m;   // Q_H (A_l z) columns
        MatrixXd d;   // centred d columns
    };

    ElementData build(std::size_t e) const;

    const ScoreSet* scores_;
    BlipSpec spec_;
    NuisanceConfig config_;
    int n_ = 0;
    std::vector<BlipParameter> params_;
    std::vector<Element> elements_;
    std::vector<std::string> absent_;
    std::vector<Gram> grams_;
    TreatmentModel model_a_;
};

/// Estimating function (divided by N) recomputed from scratch: U from
/// compute_U, model B refitted by fit_nuisance_b, model A from the treatment
/// models. Independent route used to check the precomputed system.
VectorXd estimating_function_direct(const ScoreSet& scores, const BlipSpec& spec, const NuisanceConfig& config,
                                    const VectorXd& tau, const VectorXd& v);

GEstimationResult g_estimate(const ScoreSet& scores, const BlipSpec& spec = {}, const NuisanceConfig& config = {});

}  // namespace wpcausal
