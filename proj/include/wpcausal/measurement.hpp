#pragma once

// Per-variable measurement model: one stable trait factor with unit loadings
// plus within-person scores following an AR(1) recursion with time-varying
// coefficients and innovation variances,
//
//   Sigma = phi2 * 1 1^T + Psi,   Psi from  X*_0 ~ (0, psi00),
//                                            X*_k = a_k X*_{k-1} + e_k, Var(e_k) = s2_k.
//
// The mean structure is saturated, so means are the sample means and the
// covariance parameters are fitted by minimizing the Wishart ML discrepancy.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace wpcausal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MeasurementParams {
    VectorXd mu;          // K+1 temporal means
    double phi2 = 0.0;    // trait variance
    double psi00 = 0.0;   // initial within-variance
    VectorXd ar_coefs;    // a_1..a_K
    VectorXd resid_vars;  // s2_1..s2_K

    int n_times() const { return static_cast<int>(ar_coefs.size()) + 1; }

    /// Covariance parameters packed as [phi2, psi00, a_1..a_K, s2_1..s2_K].
    VectorXd pack() const;
    static MeasurementParams unpack(const VectorXd& theta, VectorXd mu = {});
};

inline int covariance_parameter_count(int n_times) { return 2 * n_times; }

/// Psi built by the AR(1) recursion.
MatrixXd within_covariance(const MeasurementParams& params);
/// Sigma = phi2 * 1 1^T + Psi.
MatrixXd implied_sigma(const MeasurementParams& params);
/// dSigma / dtheta_j for every packed covariance parameter.
std::vector<MatrixXd> implied_sigma_jacobian(const MeasurementParams& params);

/// F = ln|Sigma| + tr(S Sigma^-1) - ln|S| - p. Throws SingularityError if
/// either matrix is not positive definite.
double ml_discrepancy(const MatrixXd& s, const MatrixXd& sigma);
/// Gradient of F with respect to the packed covariance parameters.
VectorXd ml_discrepancy_gradient(const MatrixXd& s, const MeasurementParams& params);

struct ChiSquare {
    double statistic = 0.0;
    int df = 0;
};

struct FitIndices {
    double cfi = 1.0;
    double rmsea = 0.0;
    double srmr = 0.0;
};

double comparative_fit_index(ChiSquare model, ChiSquare baseline);
/// Defined as 0 when df = 0.
double rmsea(ChiSquare model, int n_persons);
/// Root mean square of (s_jk - sigma_jk) / sqrt(s_jj s_kk) over the lower triangle.
double srmr(const MatrixXd& s, const MatrixXd& sigma);
FitIndices fit_indices(ChiSquare model, ChiSquare baseline, int n_persons, const MatrixXd& s, const MatrixXd& sigma);

/// Independence (diagonal) model on the same S, saturated means.
ChiSquare independence_baseline(const MatrixXd& s, int n_persons);

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    double relative_change_tolerance = 1e-10;
};

struct MeasurementFit {
    MeasurementParams params;
    MatrixXd implied_sigma;
    MatrixXd sample_covariance;
    int n_persons = 0;
    double discrepancy = 0.0;
    ChiSquare chi_square;
    ChiSquare baseline;
    FitIndices indices;
    bool converged = false;
    bool improper = false;
    int n_iterations = 0;
    double gradient_norm = 0.0;

    bool usable() const { return converged && !improper; }
};

/// Documented method-of-moments starting values.
MeasurementParams starting_values(const MatrixXd& s, const VectorXd& mean);

/// Fits one variable's N x (K+1) slice by Fisher scoring on F.
MeasurementFit fit_measurement(const MatrixXd& series, const FitOptions& options = {});

/// Short human-readable summary line.
std::string describe(const MeasurementFit& fit);

}  // namespace wpcausal
