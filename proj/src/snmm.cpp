#include "wpcausal/snmm.hpp"

#include "wpcausal/errors.hpp"
#include "wpcausal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wpcausal {

namespace {

std::string column_name(const ScoreSet& scores, int v, int t) {
    return scores.variables[static_cast<std::size_t>(v)].name + "_" + std::to_string(t);
}

// Column multiplying the parameter in the blip: A*_l or L*_{c,l} A*_l.
VectorXd blip_column(const ScoreSet& scores, const BlipParameter& p, const std::vector<int>& confounders) {
    const int a = scores.index_of(Role::treatment);
    VectorXd col = scores.series(a).col(p.treatment_time);
    if (p.modifier >= 0) {
        col.array() *= scores.series(confounders[static_cast<std::size_t>(p.modifier)]).col(p.treatment_time).array();
    }
    return col;
}

// Residual maker for a fixed design: QR factorization reused for every response.
class Projector {
public:
    explicit Projector(const Design& design) : x_(design.matrix()), qr_(x_) {
        qr_.setThreshold(1e-10);
        if (qr_.rank() < x_.cols()) {
            std::vector<std::string> dependent;
            for (Eigen::Index j = qr_.rank(); j < x_.cols(); ++j)
                dependent.push_back(design.names()[static_cast<std::size_t>(qr_.colsPermutation().indices()(j))]);
            throw CollinearityError("collinear history design in nuisance model B", dependent);
        }
    }
    VectorXd coefficients(const VectorXd& y) const { return qr_.solve(y); }
    VectorXd residual(const VectorXd& y) const { return y - x_ * qr_.solve(y); }

private:
    MatrixXd x_;
    Eigen::ColPivHouseholderQR<MatrixXd> qr_;
};

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

TreatmentModel fit_model_a(const ScoreSet& scores, const NuisanceConfig& config) {
    TreatmentModel model = fit_treatment_models(scores, {true, config.quadratic_a});
    if (config.intercept_only_a) {
        const int a = scores.index_of(Role::treatment);
        for (auto& tm : model.times) tm.denominator.fitted.setConstant(scores.series(a).col(tm.time).mean());
    }
    return model;
}

}  // namespace

std::vector<BlipParameter> blip_parameters(const ScoreSet& scores, const BlipSpec& spec) {
    const int kk = scores.last_time();
    spec.window.validate(kk);
    const auto confounders = scores.confounder_indices();
    std::vector<BlipParameter> out;
    for (int m = spec.window.first_treatment + 1; m <= kk; ++m) {
        for (int t = spec.window.first_treatment; t < m; ++t) {
            out.push_back({m, t, -1, beta_name(m, t)});
            if (spec.confounder_interactions) {
                for (std::size_t c = 0; c < confounders.size(); ++c) {
                    out.push_back({m, t, static_cast<int>(c),
                                   "gamma_" + std::to_string(m) + "_" + std::to_string(t) + "_" +
                                       scores.variables[static_cast<std::size_t>(confounders[c])].name});
                }
            }
        }
    }
    return out;
}

double blip(std::span<const BlipParameter> params, const VectorXd& tau, int outcome_time, int treatment_time,
            double treatment, std::span<const double> confounders) {
    double slope = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
        const auto& p = params[j];
        if (p.outcome_time != outcome_time || p.treatment_time != treatment_time) continue;
        const double coef = tau(static_cast<Eigen::Index>(j));
        slope += p.modifier < 0 ? coef : coef * confounders[static_cast<std::size_t>(p.modifier)];
    }
    return slope * treatment;
}

MatrixXd compute_U(const ScoreSet& scores, const VectorXd& tau, const BlipSpec& spec, int treatment_time) {
    const auto params = blip_parameters(scores, spec);
    if (tau.size() != static_cast<Eigen::Index>(params.size())) throw ConfigError("tau has the wrong dimension");
    const int kk = scores.last_time();
    if (treatment_time < spec.window.first_treatment || treatment_time >= kk) {
        throw ConfigError("blip-removal time outside the intervention window");
    }
    const int y = scores.index_of(Role::outcome);
    const auto confounders = scores.confounder_indices();
    const int n = scores.n_persons();
    MatrixXd u(n, kk - treatment_time);
    for (int m = treatment_time + 1; m <= kk; ++m) {
        VectorXd col = scores.series(y).col(m);
        for (std::size_t j = 0; j < params.size(); ++j) {
            const auto& p = params[j];
            if (p.outcome_time != m || p.treatment_time < treatment_time) continue;
            col -= tau(static_cast<Eigen::Index>(j)) * blip_column(scores, p, confounders);
        }
        u.col(m - treatment_time - 1) = col;
    }
    return u;
}

Design history_design(const ScoreSet& scores, int treatment_time, bool quadratic) {
    const int y = scores.index_of(Role::outcome);
    const int a = scores.index_of(Role::treatment);
    const auto confounders = scores.confounder_indices();
    Design d(scores.n_persons());
    for (int k = 0; k <= treatment_time; ++k) d.add(column_name(scores, y, k), scores.series(y).col(k));
    for (int c : confounders)
        for (int k = 0; k <= treatment_time; ++k) d.add(column_name(scores, c, k), scores.series(c).col(k));
    for (int k = 0; k < treatment_time; ++k) d.add(column_name(scores, a, k), scores.series(a).col(k));
    if (quadratic) {
        d.add(column_name(scores, y, treatment_time) + "^2", scores.series(y).col(treatment_time).array().square().matrix());
        for (int c : confounders) {
            d.add(column_name(scores, c, treatment_time) + "^2",
                  scores.series(c).col(treatment_time).array().square().matrix());
        }
    }
    return d;
}

Design nuisance_b_design(const ScoreSet& scores, int treatment_time, const NuisanceConfig& config) {
    if (config.intercept_only_b) return Design(scores.n_persons());
    return history_design(scores, treatment_time, config.quadratic_b);
}

std::vector<LinearFit> fit_nuisance_b(const ScoreSet& scores, const VectorXd& tau, const BlipSpec& spec,
                                      int treatment_time, const NuisanceConfig& config) {
    const MatrixXd u = compute_U(scores, tau, spec, treatment_time);
    const Design h = nuisance_b_design(scores, treatment_time, config);
    std::vector<LinearFit> out;
    for (Eigen::Index j = 0; j < u.cols(); ++j) out.push_back(least_squares(h, u.col(j)));
    return out;
}

// -------------------------------------------------------------------------
// Centred d-function
// -------------------------------------------------------------------------

namespace {

// Per-person slope of d in A*_t for each parameter of the element, times
// the model-A residual A*_t - E(A*_t | H_t).
MatrixXd centred_d(const ScoreSet& scores, const std::vector<BlipParameter>& params, const Element& element,
                   const VectorXd& treatment_residual, const NuisanceConfig& config) {
    const int t = element.treatment_time;
    const int a = scores.index_of(Role::treatment);
    const auto confounders = scores.confounder_indices();
    const int n = scores.n_persons();
    MatrixXd d(n, static_cast<Eigen::Index>(element.parameters.size()));
    std::optional<Design> extended;
    for (std::size_t q = 0; q < element.parameters.size(); ++q) {
        const auto& p = params[static_cast<std::size_t>(element.parameters[q])];
        VectorXd slope;
        if (p.treatment_time == t) {
            // dU/dtau = -A*_t or -L*_{c,t} A*_t; L*_{c,t} belongs to H_t.
            slope = p.modifier < 0 ? VectorXd(VectorXd::Constant(n, -1.0))
                                   : VectorXd(-scores.series(confounders[static_cast<std::size_t>(p.modifier)]).col(t));
        } else if (config.d_function == DFunction::efficient) {
            // E(-A*_l z_l | H_t, A*_t) projected linearly; slope is the A*_t coefficient.
            if (!extended) {
                extended.emplace(history_design(scores, t, false));
                extended->add("A_t", scores.series(a).col(t));
            }
            const LinearFit proj = least_squares(*extended, blip_column(scores, p, confounders));
            slope = VectorXd::Constant(n, -proj.coef(proj.coef.size() - 1));
        } else {
            slope = VectorXd::Zero(n);
        }
        d.col(static_cast<Eigen::Index>(q)) = slope.cwiseProduct(treatment_residual);
    }
    return d;
}

std::vector<Element> enumerate_elements(const ScoreSet& scores, const BlipSpec& spec,
                                        const std::vector<BlipParameter>& params, const std::vector<int>& skipped) {
    std::vector<Element> out;
    for (int t = spec.window.first_treatment; t < scores.last_time(); ++t) {
        for (int m = t + 1; m <= scores.last_time(); ++m) {
            if (contains(skipped, m)) continue;
            Element e{t, m, {}};
            for (std::size_t j = 0; j < params.size(); ++j) {
                if (params[j].outcome_time == m && params[j].treatment_time >= t) e.parameters.push_back(static_cast<int>(j));
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace

// -------------------------------------------------------------------------
// Precomputed system
// -------------------------------------------------------------------------

GEstimationProblem::GEstimationProblem(const ScoreSet& scores, const BlipSpec& spec, const NuisanceConfig& config)
    : scores_(&scores), spec_(spec), config_(config), n_(scores.n_persons()) {
    const int kk = scores.last_time();
    spec.window.validate(kk);
    const auto all_params = blip_parameters(scores, spec);
    const auto skipped = unidentified_outcome_times(scores, spec.window);
    for (const auto& p : all_params) {
        if (contains(skipped, p.outcome_time)) {
            absent_.push_back(p.name);
        } else {
            params_.push_back(p);
        }
    }
    if (params_.empty()) throw IdentificationError("no identifiable blip parameters in the intervention window");
    elements_ = enumerate_elements(scores, spec, params_, skipped);
    model_a_ = fit_model_a(scores, config);

    grams_.resize(elements_.size());
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const ElementData data = build(e);
        Gram& g = grams_[e];
        g.r0r0 = data.r0.squaredNorm();
        g.mr0 = data.m.transpose() * data.r0;
        g.dr0 = data.d.transpose() * data.r0;
        g.mm = data.m.transpose() * data.m;
        g.dm = data.d.transpose() * data.m;
    }
}

GEstimationProblem::ElementData GEstimationProblem::build(std::size_t e) const {
    const ScoreSet& scores = *scores_;
    const Element& element = elements_[e];
    const int t = element.treatment_time;
    const int y = scores.index_of(Role::outcome);
    const int a = scores.index_of(Role::treatment);
    const auto confounders = scores.confounder_indices();
    const Projector h(nuisance_b_design(scores, t, config_));
    ElementData data;
    data.r0 = h.residual(scores.series(y).col(element.outcome_time));
    data.m.resize(n_, static_cast<Eigen::Index>(element.parameters.size()));
    for (std::size_t q = 0; q < element.parameters.size(); ++q) {
        const auto& p = params_[static_cast<std::size_t>(element.parameters[q])];
        data.m.col(static_cast<Eigen::Index>(q)) = h.residual(blip_column(scores, p, confounders));
    }
    const VectorXd residual_a = scores.series(a).col(t) - model_a_.at(t).denominator.fitted;
    data.d = centred_d(scores, params_, element, residual_a, config_);
    return data;
}

VectorXd GEstimationProblem::element_variances(const VectorXd& tau) const {
    VectorXd v(static_cast<Eigen::Index>(elements_.size()));
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const Gram& g = grams_[e];
        VectorXd te(static_cast<Eigen::Index>(elements_[e].parameters.size()));
        for (std::size_t q = 0; q < elements_[e].parameters.size(); ++q)
            te(static_cast<Eigen::Index>(q)) = tau(elements_[e].parameters[q]);
        const double rss = g.r0r0 - 2.0 * te.dot(g.mr0) + te.dot(g.mm * te);
        v(static_cast<Eigen::Index>(e)) = std::max(rss / n_, config_.variance_floor);
    }
    return v;
}

VectorXd GEstimationProblem::estimating_function(const VectorXd& tau, const VectorXd& v) const {
    VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(params_.size()));
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const auto& idx = elements_[e].parameters;
        VectorXd te(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t q = 0; q < idx.size(); ++q) te(static_cast<Eigen::Index>(q)) = tau(idx[q]);
        const VectorXd contrib = (grams_[e].dr0 - grams_[e].dm * te) / v(static_cast<Eigen::Index>(e));
        for (std::size_t q = 0; q < idx.size(); ++q) g(idx[q]) += contrib(static_cast<Eigen::Index>(q));
    }
    return g / n_;
}

MatrixXd GEstimationProblem::jacobian(const VectorXd& v) const {
    const auto p = static_cast<Eigen::Index>(params_.size());
    MatrixXd j = MatrixXd::Zero(p, p);
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const auto& idx = elements_[e].parameters;
        const MatrixXd block = -grams_[e].dm / v(static_cast<Eigen::Index>(e));
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < idx.size(); ++c)
                j(idx[r], idx[c]) += block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
    return j / n_;
}

std::string GEstimationResult::trace_text() const {
    std::ostringstream out;
    out << "iteration,equation_norm,step_norm,tau\n";
    for (const auto& s : newton_trace) {
        out << s.iteration << ',' << s.equation_norm << ',' << s.step_norm << ",\"";
        for (Eigen::Index j = 0; j < s.tau.size(); ++j) out << (j ? " " : "") << s.tau(j);
        out << "\"\n";
    }
    return out.str();
}

GEstimationResult GEstimationProblem::solve() const {
    const auto p = static_cast<Eigen::Index>(params_.size());
    GEstimationResult result;
    VectorXd tau = VectorXd::Zero(p);
    VectorXd v = element_variances(tau);
    MatrixXd jac;
    for (int iter = 0; iter < config_.max_iterations; ++iter) {
        v = element_variances(tau);
        const VectorXd g = estimating_function(tau, v);
        const double norm = g.norm();
        jac = jacobian(v);
        if (norm < config_.tolerance * (1.0 + tau.norm())) {
            result.newton_trace.push_back({iter, tau, norm, 0.0});
            result.converged = true;
            break;
        }
        Eigen::FullPivLU<MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            result.newton_trace.push_back({iter, tau, norm, 0.0});
            throw ConvergenceError("singular G-estimation Jacobian", result.trace_text());
        }
        const VectorXd step = -lu.solve(g);
        result.newton_trace.push_back({iter, tau, norm, step.norm()});
        tau += step;
    }
    if (!result.converged) {
        throw ConvergenceError("G-estimation did not converge in " + std::to_string(config_.max_iterations) +
                                   " Newton iterations",
                               result.trace_text());
    }
    result.jacobian = jac;

    // Sandwich variance from per-person estimating-function contributions.
    MatrixXd contributions = MatrixXd::Zero(n_, p);
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const ElementData data = build(e);
        const auto& idx = elements_[e].parameters;
        VectorXd te(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t q = 0; q < idx.size(); ++q) te(static_cast<Eigen::Index>(q)) = tau(idx[q]);
        const VectorXd r = data.r0 - data.m * te;
        const double ve = v(static_cast<Eigen::Index>(e));
        for (std::size_t q = 0; q < idx.size(); ++q) {
            contributions.col(idx[q]) += data.d.col(static_cast<Eigen::Index>(q)).cwiseProduct(r) / ve;
        }
    }
    const MatrixXd meat = contributions.transpose() * contributions / n_;
    const MatrixXd jinv = jac.inverse();
    const MatrixXd cov = jinv * meat * jinv.transpose() / n_;

    CausalEstimates& est = result.tau;
    est.method = Method::snmm;
    est.centering = scores_->centering;
    for (const auto& prm : params_) est.names.push_back(prm.name);
    est.estimates = tau;
    est.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    est.absent = absent_;
    est.diagnostics.emplace_back("newton_iterations", static_cast<double>(result.newton_trace.size()));
    est.diagnostics.emplace_back("final_equation_norm", result.newton_trace.back().equation_norm);

    result.nuisance_a = model_a_;
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        result.v_weights.push_back({elements_[e].treatment_time, elements_[e].outcome_time, v(static_cast<Eigen::Index>(e))});
    }
    // Model B at the solution, one regression per distinct (t, m).
    VectorXd full_tau = tau;
    BlipSpec spec = spec_;
    const auto all_params = blip_parameters(*scores_, spec);
    if (!absent_.empty()) {
        full_tau = VectorXd::Zero(static_cast<Eigen::Index>(all_params.size()));
        std::size_t q = 0;
        for (std::size_t j = 0; j < all_params.size(); ++j) {
            if (q < params_.size() && all_params[j].name == params_[q].name) full_tau(static_cast<Eigen::Index>(j)) = tau(static_cast<Eigen::Index>(q++));
        }
    }
    for (int t = spec.window.first_treatment; t < scores_->last_time(); ++t) {
        const auto fits = fit_nuisance_b(*scores_, full_tau, spec, t, config_);
        for (std::size_t j = 0; j < fits.size(); ++j) {
            const int m = t + 1 + static_cast<int>(j);
            if (std::find_if(elements_.begin(), elements_.end(), [&](const Element& el) {
                    return el.treatment_time == t && el.outcome_time == m;
                }) == elements_.end()) {
                continue;
            }
            result.nuisance_b.push_back({t, m, fits[j].names, fits[j].coef, fits[j].r_squared});
        }
    }
    return result;
}

VectorXd estimating_function_direct(const ScoreSet& scores, const BlipSpec& spec, const NuisanceConfig& config,
                                    const VectorXd& tau, const VectorXd& v) {
    const auto params = blip_parameters(scores, spec);
    const auto skipped = unidentified_outcome_times(scores, spec.window);
    if (!skipped.empty()) throw IdentificationError("direct estimating function expects every outcome time identified");
    const auto elements = enumerate_elements(scores, spec, params, skipped);
    const TreatmentModel model_a = fit_model_a(scores, config);
    const int a = scores.index_of(Role::treatment);
    const int n = scores.n_persons();
    VectorXd g = VectorXd::Zero(tau.size());
    std::size_t e = 0;
    for (int t = spec.window.first_treatment; t < scores.last_time(); ++t) {
        const MatrixXd u = compute_U(scores, tau, spec, t);
        const auto b = fit_nuisance_b(scores, tau, spec, t, config);
        const VectorXd residual_a = scores.series(a).col(t) - model_a.at(t).denominator.fitted;
        for (int m = t + 1; m <= scores.last_time(); ++m, ++e) {
            const Element& element = elements[e];
            const VectorXd centred_u = u.col(m - t - 1) - b[static_cast<std::size_t>(m - t - 1)].fitted;
            const MatrixXd d = centred_d(scores, params, element, residual_a, config);
            const VectorXd contrib = d.transpose() * centred_u / v(static_cast<Eigen::Index>(e));
            for (std::size_t q = 0; q < element.parameters.size(); ++q)
                g(element.parameters[q]) += contrib(static_cast<Eigen::Index>(q));
        }
    }
    return g / n;
}

GEstimationResult g_estimate(const ScoreSet& scores, const BlipSpec& spec, const NuisanceConfig& config) {
    return GEstimationProblem(scores, spec, config).solve();
}

}  // namespace wpcausal
