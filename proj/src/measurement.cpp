#include "wpcausal/measurement.hpp"

#include "wpcausal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace wpcausal {

VectorXd MeasurementParams::pack() const {
    const int k = static_cast<int>(ar_coefs.size());
    VectorXd theta(2 * k + 2);
    theta(0) = phi2;
    theta(1) = psi00;
    theta.segment(2, k) = ar_coefs;
    theta.segment(2 + k, k) = resid_vars;
    return theta;
}

MeasurementParams MeasurementParams::unpack(const VectorXd& theta, VectorXd mu) {
    const auto k = (theta.size() - 2) / 2;
    MeasurementParams p;
    p.phi2 = theta(0);
    p.psi00 = theta(1);
    p.ar_coefs = theta.segment(2, k);
    p.resid_vars = theta.segment(2 + k, k);
    p.mu = mu.size() == k + 1 ? std::move(mu) : VectorXd::Zero(k + 1);
    return p;
}

MatrixXd within_covariance(const MeasurementParams& params) {
    const int t = params.n_times();
    MatrixXd psi = MatrixXd::Zero(t, t);
    psi(0, 0) = params.psi00;
    for (int k = 1; k < t; ++k) {
        const double a = params.ar_coefs(k - 1);
        for (int j = 0; j < k; ++j) psi(j, k) = a * psi(j, k - 1);
        psi(k, k) = a * a * psi(k - 1, k - 1) + params.resid_vars(k - 1);
        for (int j = 0; j < k; ++j) psi(k, j) = psi(j, k);
    }
    return psi;
}

MatrixXd implied_sigma(const MeasurementParams& params) {
    const int t = params.n_times();
    return within_covariance(params) + MatrixXd::Constant(t, t, params.phi2);
}

std::vector<MatrixXd> implied_sigma_jacobian(const MeasurementParams& params) {
    const int t = params.n_times();
    const int kk = t - 1;
    const int p = covariance_parameter_count(t);
    const MatrixXd psi = within_covariance(params);
    // Forward-mode derivatives of the upper triangle of Psi.
    std::vector<MatrixXd> d(static_cast<std::size_t>(p), MatrixXd::Zero(t, t));
    d[0].setOnes();  // phi2
    d[1](0, 0) = 1.0;
    for (int k = 1; k < t; ++k) {
        const double a = params.ar_coefs(k - 1);
        const int ia = 2 + (k - 1);
        const int is = 2 + kk + (k - 1);
        for (int q = 1; q < p; ++q) {
            auto& m = d[static_cast<std::size_t>(q)];
            for (int j = 0; j < k; ++j) m(j, k) = a * m(j, k - 1);
            m(k, k) = a * a * m(k - 1, k - 1);
        }
        auto& da = d[static_cast<std::size_t>(ia)];
        for (int j = 0; j < k; ++j) da(j, k) += psi(j, k - 1);
        da(k, k) += 2.0 * a * psi(k - 1, k - 1);
        d[static_cast<std::size_t>(is)](k, k) += 1.0;
    }
    for (int q = 1; q < p; ++q) {
        auto& m = d[static_cast<std::size_t>(q)];
        m.triangularView<Eigen::StrictlyLower>() = m.transpose();
    }
    return d;
}

namespace {

// Cholesky-based log determinant; returns false when not positive definite.
bool log_det(const Eigen::LLT<MatrixXd>& llt, double& out) {
    if (llt.info() != Eigen::Success) return false;
    const VectorXd diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any()) return false;
    out = 2.0 * diag.array().log().sum();
    return true;
}

bool log_det(const MatrixXd& m, double& out) { return log_det(Eigen::LLT<MatrixXd>(m), out); }

double discrepancy_or_inf(const MatrixXd& s, double log_det_s, const MatrixXd& sigma) {
    double ld = 0.0;
    const Eigen::LLT<MatrixXd> llt(sigma);
    if (!log_det(llt, ld)) return std::numeric_limits<double>::infinity();
    const double tr = llt.solve(s).trace();
    return ld + tr - log_det_s - static_cast<double>(s.rows());
}

}  // namespace

double ml_discrepancy(const MatrixXd& s, const MatrixXd& sigma) {
    double ld_s = 0.0;
    if (!log_det(s, ld_s)) throw SingularityError("sample covariance is not positive definite", 0.0);
    const double f = discrepancy_or_inf(s, ld_s, sigma);
    if (!std::isfinite(f)) throw SingularityError("implied covariance is not positive definite", 0.0);
    return std::max(f, 0.0);
}

VectorXd ml_discrepancy_gradient(const MatrixXd& s, const MeasurementParams& params) {
    const MatrixXd sigma = implied_sigma(params);
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw SingularityError("implied covariance is not positive definite", 0.0);
    const MatrixXd inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
    const MatrixXd core = inv * (sigma - s) * inv;
    const auto jac = implied_sigma_jacobian(params);
    VectorXd g(static_cast<Eigen::Index>(jac.size()));
    for (std::size_t j = 0; j < jac.size(); ++j) g(static_cast<Eigen::Index>(j)) = (core.cwiseProduct(jac[j])).sum();
    return g;
}

// -------------------------------------------------------------------------
// Fit indices
// -------------------------------------------------------------------------

double comparative_fit_index(ChiSquare model, ChiSquare baseline) {
    if (model.df <= 0) return 1.0;  // saturated model, by convention
    const double num = std::max(model.statistic - model.df, 0.0);
    const double den = std::max({model.statistic - model.df, baseline.statistic - baseline.df, 0.0});
    if (den <= 0.0) return 1.0;
    return std::clamp(1.0 - num / den, 0.0, 1.0);
}

double rmsea(ChiSquare model, int n_persons) {
    if (model.df <= 0) return 0.0;
    return std::sqrt(std::max(model.statistic - model.df, 0.0) / (model.df * (n_persons - 1.0)));
}

double srmr(const MatrixXd& s, const MatrixXd& sigma) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
        for (Eigen::Index k = 0; k <= j; ++k) {
            const double r = (s(j, k) - sigma(j, k)) / std::sqrt(s(j, j) * s(k, k));
            sum += r * r;
            ++count;
        }
    }
    return count ? std::sqrt(sum / count) : 0.0;
}

FitIndices fit_indices(ChiSquare model, ChiSquare baseline, int n_persons, const MatrixXd& s, const MatrixXd& sigma) {
    return {comparative_fit_index(model, baseline), rmsea(model, n_persons), srmr(s, sigma)};
}

ChiSquare independence_baseline(const MatrixXd& s, int n_persons) {
    double ld_s = 0.0;
    if (!log_det(s, ld_s)) throw SingularityError("sample covariance is not positive definite", 0.0);
    const double f = s.diagonal().array().log().sum() - ld_s;
    const int p = static_cast<int>(s.rows());
    return {(n_persons - 1.0) * std::max(f, 0.0), p * (p - 1) / 2};
}

// -------------------------------------------------------------------------
// Fitting
// -------------------------------------------------------------------------

MeasurementParams starting_values(const MatrixXd& s, const VectorXd& mean) {
    const int t = static_cast<int>(s.rows());
    MeasurementParams p;
    p.mu = mean;
    p.psi00 = 0.5 * s(0, 0);
    double off = 0.0;
    for (int j = 0; j < t; ++j)
        for (int k = 0; k < j; ++k) off += s(j, k);
    p.phi2 = std::max(off / (t * (t - 1) / 2.0), 0.01);
    p.ar_coefs.resize(t - 1);
    p.resid_vars.resize(t - 1);
    double prev_var = p.psi00;
    for (int k = 1; k < t; ++k) {
        const double a = s(k - 1, k) / std::sqrt(s(k - 1, k - 1) * s(k, k));
        const double target = s(k, k) - p.phi2;
        const double s2 = std::max(target - a * a * prev_var, 0.05 * s(k, k));
        p.ar_coefs(k - 1) = a;
        p.resid_vars(k - 1) = s2;
        prev_var = a * a * prev_var + s2;
    }
    return p;
}

MeasurementFit fit_measurement(const MatrixXd& series, const FitOptions& options) {
    const int n = static_cast<int>(series.rows());
    const int t = static_cast<int>(series.cols());
    if (t < 3) throw IdentificationError("measurement model needs K >= 2 (three or more time points)");
    const int n_par = covariance_parameter_count(t);
    if (n <= n_par) {
        throw IdentificationError("measurement model needs more persons (" + std::to_string(n) + ") than parameters (" +
                                  std::to_string(n_par) + ")");
    }

    MeasurementFit fit;
    fit.n_persons = n;
    const VectorXd mean = series.colwise().mean().transpose();
    const MatrixXd centered = series.rowwise() - mean.transpose();
    fit.sample_covariance = centered.transpose() * centered / (n - 1.0);
    const MatrixXd& s = fit.sample_covariance;
    double ld_s = 0.0;
    if (!log_det(s, ld_s)) throw DataError("sample covariance of the series is singular (degenerate data)");

    MeasurementParams params = starting_values(s, mean);
    VectorXd theta = params.pack();
    double f = discrepancy_or_inf(s, ld_s, implied_sigma(params));
    if (!std::isfinite(f)) {
        // Fall back to a white-noise start that is always positive definite.
        params.phi2 = 0.01;
        params.ar_coefs.setZero();
        params.psi00 = s(0, 0);
        for (int k = 1; k < t; ++k) params.resid_vars(k - 1) = s(k, k);
        theta = params.pack();
        f = discrepancy_or_inf(s, ld_s, implied_sigma(params));
    }

    int iter = 0;
    double grad_norm = std::numeric_limits<double>::infinity();
    for (; iter < options.max_iterations; ++iter) {
        params = MeasurementParams::unpack(theta, mean);
        const MatrixXd sigma = implied_sigma(params);
        Eigen::LLT<MatrixXd> llt(sigma);
        const MatrixXd inv = llt.solve(MatrixXd::Identity(t, t));
        const auto jac = implied_sigma_jacobian(params);
        const MatrixXd core = inv * (sigma - s) * inv;
        VectorXd g(n_par);
        std::vector<MatrixXd> inv_jac(jac.size());
        for (int j = 0; j < n_par; ++j) {
            g(j) = core.cwiseProduct(jac[static_cast<std::size_t>(j)]).sum();
            inv_jac[static_cast<std::size_t>(j)] = inv * jac[static_cast<std::size_t>(j)];
        }
        grad_norm = g.cwiseAbs().maxCoeff();
        if (grad_norm < options.gradient_tolerance) break;

        // Expected information of F: tr(Sigma^-1 dSigma_j Sigma^-1 dSigma_l).
        MatrixXd info(n_par, n_par);
        for (int j = 0; j < n_par; ++j)
            for (int l = 0; l <= j; ++l)
                info(j, l) = info(l, j) =
                    (inv_jac[static_cast<std::size_t>(j)].cwiseProduct(inv_jac[static_cast<std::size_t>(l)].transpose())).sum();
        Eigen::LDLT<MatrixXd> ldlt(info);
        VectorXd step = ldlt.solve(-g);
        if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) >= 0.0) step = -g;

        double scale = 1.0;
        bool moved = false;
        double f_new = f;
        for (int half = 0; half < 40; ++half, scale *= 0.5) {
            const VectorXd trial = theta + scale * step;
            f_new = discrepancy_or_inf(s, ld_s, implied_sigma(MeasurementParams::unpack(trial, mean)));
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * scale * g.dot(step)) {
                theta = trial;
                moved = true;
                break;
            }
        }
        if (!moved) break;
        const double rel = std::abs(f - f_new) / std::max(std::abs(f), 1e-300);
        f = f_new;
        if (rel < options.relative_change_tolerance && scale < 1.0) break;
    }

    params = MeasurementParams::unpack(theta, mean);
    fit.params = params;
    fit.implied_sigma = implied_sigma(params);
    fit.gradient_norm = ml_discrepancy_gradient(s, params).cwiseAbs().maxCoeff();
    fit.converged = fit.gradient_norm < options.gradient_tolerance;
    fit.n_iterations = iter;
    fit.discrepancy = std::max(discrepancy_or_inf(s, ld_s, fit.implied_sigma), 0.0);
    fit.chi_square = {(n - 1.0) * fit.discrepancy, t * (t + 1) / 2 - n_par};
    fit.baseline = independence_baseline(s, n);
    fit.indices = fit_indices(fit.chi_square, fit.baseline, n, s, fit.implied_sigma);
    fit.improper = params.phi2 < 0.0 || params.psi00 < 0.0 || (params.resid_vars.array() < 0.0).any();
    return fit;
}

std::string describe(const MeasurementFit& fit) {
    std::ostringstream out;
    out << "phi2=" << fit.params.phi2 << " psi00=" << fit.params.psi00 << " chisq=" << fit.chi_square.statistic
        << " df=" << fit.chi_square.df << " cfi=" << fit.indices.cfi << " rmsea=" << fit.indices.rmsea
        << " srmr=" << fit.indices.srmr << (fit.converged ? "" : " [not converged]")
        << (fit.improper ? " [improper]" : "");
    return out.str();
}

}  // namespace wpcausal
