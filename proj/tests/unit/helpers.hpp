#pragma once

#include "wpcausal/panel.hpp"
#include "wpcausal/simulate.hpp"

#include <random>

namespace testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Random SPD matrix with eigenvalues spread over [lo, hi].
inline MatrixXd random_spd(int n, std::mt19937_64& rng, double lo = 0.1, double hi = 10.0) {
    std::normal_distribution<double> z;
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = z(rng);
    Eigen::HouseholderQR<MatrixXd> qr(a);
    const MatrixXd q = qr.householderQ();
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    VectorXd lambda(n);
    for (int i = 0; i < n; ++i) lambda(i) = std::exp(u(rng));
    MatrixXd out = q * lambda.asDiagonal() * q.transpose();
    return 0.5 * (out + out.transpose());
}

inline double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

inline wpcausal::ScoreSet true_scores(const wpcausal::SimulatedPanel& sim) {
    wpcausal::ScoreSet s;
    s.variables = sim.observed.variables();
    s.within_scores = sim.true_within;
    s.trait_scores = sim.true_traits;
    s.source_means = MatrixXd::Zero(sim.observed.n_times(), sim.observed.n_variables());
    s.centering = wpcausal::Centering::true_scores;
    return s;
}

inline wpcausal::SimulatedPanel simulate(int n, int k, double phi2, std::uint64_t seed,
                                         wpcausal::Scenario scenario = wpcausal::Scenario::clean) {
    wpcausal::SimConfig c;
    c.n_persons = n;
    c.k_times = k;
    c.phi2 = phi2;
    c.seed = seed;
    c.scenario = scenario;
    return wpcausal::generate(c);
}

// Each variable follows its own stationary AR(1) with variance 10, so the
// trait + AR(1) measurement model holds exactly.
inline wpcausal::SimConfig ar1_config(int n, std::uint64_t seed, double phi2 = 10.0) {
    wpcausal::SimConfig c;
    c.n_persons = n;
    c.seed = seed;
    c.phi2 = phi2;
    c.residual_variance = 7.5;
    c.dynamics = wpcausal::Dynamics{0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.5, 0};
    return c;
}

// Reduced form x_k = F x_{k-1} + G e_k of the within-person recursion, order (Y, A, L).
inline Eigen::Matrix3d transition(const wpcausal::Dynamics& d) {
    Eigen::Matrix3d f;
    f.row(0) << d.yy, d.ya, d.yl;
    f.row(2) << d.ly, d.la, d.ll;
    f.row(1) = d.ay * f.row(0) + d.al * f.row(2);
    f(1, 1) += d.aa;
    return f;
}

// Population covariance of (Y*, A*, L*) at every time.
inline std::vector<Eigen::Matrix3d> within_covariances(const wpcausal::SimConfig& c) {
    const auto& d = c.dynamics;
    const Eigen::Matrix3d f = transition(d);
    Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
    g(1, 0) = d.ay;
    g(1, 2) = d.al;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Constant(c.within_initial_covariance);
    cov.diagonal().setConstant(c.within_initial_variance);
    std::vector<Eigen::Matrix3d> out{cov};
    for (int k = 1; k <= c.k_times; ++k) {
        cov = f * cov * f.transpose() + c.residual_variance * g * g.transpose();
        out.push_back(cov);
    }
    return out;
}

inline std::vector<Eigen::Vector3d> within_variances(const wpcausal::SimConfig& c) {
    std::vector<Eigen::Vector3d> out;
    for (const auto& m : within_covariances(c)) out.push_back(m.diagonal());
    return out;
}

// Population covariance of the stacked within scores (index v * T + k).
inline MatrixXd stacked_within_covariance(const wpcausal::SimConfig& c) {
    const int t = c.k_times + 1;
    const auto cov = within_covariances(c);
    const Eigen::Matrix3d f = transition(c.dynamics);
    MatrixXd out(3 * t, 3 * t);
    for (int j = 0; j < t; ++j) {
        Eigen::Matrix3d lagged = cov[static_cast<std::size_t>(j)];  // Cov(x_k, x_j) for k >= j
        for (int k = j; k < t; ++k) {
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    out(a * t + k, b * t + j) = lagged(a, b);
                    out(b * t + j, a * t + k) = lagged(a, b);
                }
            lagged = f * lagged;
        }
    }
    return out;
}

// Population covariance of the stacked observed values (clean scenario).
inline MatrixXd stacked_total_covariance(const wpcausal::SimConfig& c) {
    const int t = c.k_times + 1;
    MatrixXd out = stacked_within_covariance(c);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            out.block(a * t, b * t, t, t).array() += (a == b ? 1.0 : c.trait_correlation) * c.phi2;
    return out;
}

}  // namespace testing
