#include "wpcausal/scores.hpp"

#include "wpcausal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wpcausal {

VectorXd trait_predictor(const MatrixXd& series, const MeasurementFit& fit) {
    if (fit.improper) throw ConfigError("trait prediction needs a proper measurement fit");
    const Eigen::Index t = series.cols();
    Eigen::LLT<MatrixXd> llt(fit.implied_sigma);
    if (llt.info() != Eigen::Success) throw SingularityError("implied covariance is singular", 0.0);
    const VectorXd w = llt.solve(VectorXd::Ones(t));  // Sigma^-1 1
    const double norm = std::sqrt(w.sum());
    const double phi = std::sqrt(std::max(fit.params.phi2, 0.0));
    const VectorXd mean = series.colwise().mean().transpose();
    const MatrixXd centered = series.rowwise() - mean.transpose();
    return (phi / norm) * (centered * w);
}

TraitCovariance assemble_trait_covariance(const std::vector<MeasurementFit>& fits, const MatrixXd& trait_scores,
                                          int n_times) {
    const auto v = static_cast<Eigen::Index>(fits.size());
    if (trait_scores.cols() != v) throw ConfigError("trait score columns do not match the number of fits");
    for (Eigen::Index j = 0; j < v; ++j) {
        if (fits[static_cast<std::size_t>(j)].improper) {
            throw ConfigError("measurement fit for variable " + std::to_string(j) + " is improper");
        }
    }
    TraitCovariance out;
    const Eigen::Index n = trait_scores.rows();
    if (n >= 2) {
        const MatrixXd centered = trait_scores.rowwise() - trait_scores.colwise().mean();
        out.phi = centered.transpose() * centered / static_cast<double>(n - 1);
    } else {
        out.phi = MatrixXd::Zero(v, v);
    }
    for (Eigen::Index j = 0; j < v; ++j) out.phi(j, j) = fits[static_cast<std::size_t>(j)].params.phi2;
    out.phi_plus.resize(v * n_times, v * n_times);
    for (Eigen::Index a = 0; a < v; ++a)
        for (Eigen::Index b = 0; b < v; ++b)
            out.phi_plus.block(a * n_times, b * n_times, n_times, n_times).setConstant(out.phi(a, b));
    return out;
}

PsdRepair estimate_psi(const MatrixXd& s, const TraitCovariance& trait) {
    if (s.rows() != trait.phi_plus.rows() || s.cols() != trait.phi_plus.cols()) {
        throw ConfigError("sample covariance and trait covariance have different shapes");
    }
    PsdRepair out = repair_psd(s - trait.phi_plus);
    if (out.clipped_fraction() > kPsiClipLimit) {
        std::ostringstream msg;
        msg << "within-score covariance needed " << 100.0 * out.clipped_fraction()
            << "% of its trace clipped; estimates are untrustworthy";
        throw SingularityError(msg.str(), -out.clipped_mass);
    }
    return out;
}

MatrixXd weight_matrix(const MatrixXd& psi, const MatrixXd& sigma) {
    if (psi.rows() != sigma.rows() || psi.cols() != sigma.cols()) {
        throw ConfigError("Psi and Sigma have different shapes");
    }
    const Eigen::Index p = psi.rows();
    Eigen::LLT<MatrixXd> llt(0.5 * (sigma + sigma.transpose()));
    if (llt.info() != Eigen::Success) throw SingularityError("Sigma is not positive definite", 0.0);
    const MatrixXd sigma_inv = llt.solve(MatrixXd::Identity(p, p));
    const MatrixXd psi_half = spd_power(psi, 0.5);
    const MatrixXd psi_three_halves = spd_power(psi, 1.5);
    MatrixXd inner = psi_three_halves * sigma_inv * psi_three_halves;
    inner = 0.5 * (inner + inner.transpose()).eval();
    MatrixXd inner_inv_half;
    try {
        inner_inv_half = spd_power(inner, -0.5);
    } catch (const SingularityError&) {
        // A repaired Psi can sit on the boundary of the PSD cone. On the range
        // of Psi the pseudo-inverse root still gives W' Sigma W = Psi.
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(psi);
        const double top = es.eigenvalues().cwiseAbs().maxCoeff();
        if (!(es.eigenvalues().minCoeff() <= 10.0 * kEigenFloor * top)) throw;
        inner_inv_half = spd_pseudo_power(inner, -0.5);
    }
    const MatrixXd wt = psi_half * inner_inv_half * psi_three_halves * sigma_inv;
    return wt.transpose();
}

bool Step1Result::fits_usable() const {
    return !fits.empty() && std::all_of(fits.begin(), fits.end(), [](const MeasurementFit& f) { return f.usable(); });
}

Step1Result run_step1(const PanelDataset& data, const FitOptions& options) {
    Step1Result out;
    const int v = data.n_variables();
    const int t = data.n_times();
    out.moments = stacked_moments(data);
    out.trait_scores = MatrixXd::Zero(data.n_persons(), v);
    for (int j = 0; j < v; ++j) {
        const auto& name = data.variables()[static_cast<std::size_t>(j)].name;
        try {
            out.fits.push_back(fit_measurement(data.series(j), options));
        } catch (const Error& e) {
            out.problems.push_back(name + ": " + e.what());
            MeasurementFit failed;
            failed.improper = true;
            out.fits.push_back(std::move(failed));
            continue;
        }
        const auto& fit = out.fits.back();
        if (!fit.converged) out.problems.push_back(name + ": measurement model did not converge");
        if (fit.improper) out.problems.push_back(name + ": improper solution (" + describe(fit) + ")");
    }
    if (!out.fits_usable()) return out;
    for (int j = 0; j < v; ++j) {
        out.trait_scores.col(j) = trait_predictor(data.series(j), out.fits[static_cast<std::size_t>(j)]);
    }
    try {
        out.trait = assemble_trait_covariance(out.fits, out.trait_scores, t);
        out.psi = estimate_psi(out.moments.covariance, *out.trait);
        out.weights = weight_matrix(out.psi->matrix, out.moments.covariance);
    } catch (const Error& e) {
        out.problems.push_back(std::string("weight matrix: ") + e.what());
        out.weights.resize(0, 0);
    }
    return out;
}

ScoreSet center(const PanelDataset& data, Centering method, const CenteringInputs& inputs) {
    const int n = data.n_persons();
    const int t = data.n_times();
    const int v = data.n_variables();
    ScoreSet out;
    out.variables = data.variables();
    out.centering = method;
    out.trait_scores = MatrixXd::Zero(n, v);
    out.source_means = MatrixXd::Zero(t, v);
    out.within_scores.reserve(static_cast<std::size_t>(v));

    switch (method) {
        case Centering::none:
            out.within_scores = data.all_series();
            break;
        case Centering::observed_mean:
            for (int j = 0; j < v; ++j) {
                const MatrixXd& x = data.series(j);
                const VectorXd person_mean = x.rowwise().mean();
                out.trait_scores.col(j) = person_mean;
                out.within_scores.push_back(x.colwise() - person_mean);
            }
            break;
        case Centering::true_scores: {
            if (inputs.true_traits == nullptr) throw ConfigError("true_scores centering needs simulator ground-truth traits");
            const MatrixXd& traits = *inputs.true_traits;
            if (traits.rows() != n || traits.cols() != v) throw ConfigError("true trait matrix has the wrong shape");
            out.trait_scores = traits;
            for (int j = 0; j < v; ++j) out.within_scores.push_back(data.series(j).colwise() - traits.col(j));
            break;
        }
        case Centering::trait_predictor: {
            if (inputs.step1 == nullptr) throw ConfigError("trait_predictor centering needs step-1 fits");
            const Step1Result& s1 = *inputs.step1;
            if (!s1.fits_usable()) throw ConfigError("trait_predictor centering needs proper, converged step-1 fits");
            out.trait_scores = s1.trait_scores;
            for (int j = 0; j < v; ++j) out.within_scores.push_back(data.series(j).colwise() - s1.trait_scores.col(j));
            break;
        }
        case Centering::proposed: {
            if (inputs.step1 == nullptr) throw ConfigError("proposed centering needs step-1 artifacts");
            const Step1Result& s1 = *inputs.step1;
            if (!s1.proposed_available()) {
                std::string why;
                for (const auto& p : s1.problems) why += (why.empty() ? "" : "; ") + p;
                throw ConfigError("proposed centering unavailable: " + why);
            }
            const MatrixXd x = stack_persons(data.all_series());
            const MatrixXd centered = x.rowwise() - s1.moments.mean.transpose();
            const MatrixXd scores = centered * s1.weights;  // rows are (W'(x_i - xbar))'
            out.within_scores = unstack_persons(scores, v, t);
            out.trait_scores = s1.trait_scores;
            for (int j = 0; j < v; ++j) out.source_means.col(j) = s1.moments.mean.segment(j * t, t);
            if (s1.psi && s1.psi->clipped_mass > 0.0) {
                std::ostringstream msg;
                msg << "psi_repair_clipped_fraction=" << s1.psi->clipped_fraction();
                out.warnings.push_back(msg.str());
            }
            break;
        }
    }
    return out;
}

}  // namespace wpcausal
