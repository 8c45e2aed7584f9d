#pragma once

// Step 1 output: trait covariance, within-score covariance, the
// correlation-preserving weight matrix and centred score sets.

#include "wpcausal/measurement.hpp"
#include "wpcausal/panel.hpp"
#include "wpcausal/spd.hpp"

#include <optional>
#include <vector>

namespace wpcausal {

/// Correlation-preserving trait prediction for one variable:
///   I_i = phi / sqrt(1' Sigma^-1 1) * 1' Sigma^-1 (x_i - xbar),
/// with Sigma the model-implied covariance of the fit.
VectorXd trait_predictor(const MatrixXd& series, const MeasurementFit& fit);

struct TraitCovariance {
    MatrixXd phi;       // V x V
    MatrixXd phi_plus;  // phi (x) 1 1^T in the stacked ordering
};

/// Diagonal from the fits' phi2, off-diagonals from the sample covariance of
/// the predicted traits. Refuses improper fits.
TraitCovariance assemble_trait_covariance(const std::vector<MeasurementFit>& fits, const MatrixXd& trait_scores,
                                          int n_times);

inline constexpr double kPsiClipLimit = 0.05;

/// Psi = S - Phi+, repaired to PSD. Clipping more than 5% of the trace is an error.
PsdRepair estimate_psi(const MatrixXd& s, const TraitCovariance& trait);

/// W with W' Sigma W = Psi:
///   W' = Psi^1/2 (Psi^3/2 Sigma^-1 Psi^3/2)^-1/2 Psi^3/2 Sigma^-1.
MatrixXd weight_matrix(const MatrixXd& psi, const MatrixXd& sigma);

/// Everything step 1 produces for one panel.
struct Step1Result {
    std::vector<MeasurementFit> fits;  // one per variable, dataset order
    MatrixXd trait_scores;             // N x V predicted traits
    StackedMoments moments;
    std::optional<TraitCovariance> trait;
    std::optional<PsdRepair> psi;
    MatrixXd weights;                  // W (stacked dimension), empty if unavailable
    std::vector<std::string> problems; // reasons the proposed scores are unavailable

    bool fits_usable() const;
    bool proposed_available() const { return weights.size() > 0; }
};

/// Fits every variable, then builds W when all fits are usable. Problems are
/// recorded instead of thrown so callers can decide on discards.
Step1Result run_step1(const PanelDataset& data, const FitOptions& options = {});

struct CenteringInputs {
    const Step1Result* step1 = nullptr;
    const MatrixXd* true_traits = nullptr;  // N x V simulator ground truth
};

/// Within-person scores under the requested centering.
ScoreSet center(const PanelDataset& data, Centering method, const CenteringInputs& inputs = {});

}  // namespace wpcausal
