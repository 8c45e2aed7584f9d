#pragma once

// Least squares with named columns, shared by the treatment, outcome and
// nuisance regressions.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace wpcausal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Design {
public:
    explicit Design(Eigen::Index n_rows, bool intercept = true);

    Design& add(std::string name, const VectorXd& column);
    Eigen::Index rows() const { return n_rows_; }
    Eigen::Index cols() const { return static_cast<Eigen::Index>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    int index_of(const std::string& name) const;

    /// Materialized N x p matrix.
    MatrixXd matrix() const;

private:
    Eigen::Index n_rows_;
    std::vector<std::string> names_;
    std::vector<VectorXd> columns_;
};

struct LinearFit {
    std::vector<std::string> names;
    VectorXd coef;
    VectorXd fitted;
    VectorXd residuals;
    double residual_variance = 0.0;  // weighted RSS / (N - p)
    double r_squared = 0.0;

    double coefficient(const std::string& name) const;
};

/// Ordinary (or weighted, when `weights` is non-empty) least squares.
/// Throws CollinearityError naming the dependent columns.
LinearFit least_squares(const Design& design, const VectorXd& y, const VectorXd& weights = {});

/// Heteroskedasticity-robust (HC0) covariance of a weighted LS fit.
MatrixXd sandwich_covariance(const Design& design, const LinearFit& fit, const VectorXd& weights = {});

/// True when y lies in the column span of the design (R^2 numerically 1).
bool in_column_span(const Design& design, const VectorXd& y, double tolerance = 1e-9);

}  // namespace wpcausal
