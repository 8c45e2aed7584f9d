#include "helpers.hpp"
#include "wpcausal/errors.hpp"
#include "wpcausal/scores.hpp"

#include <doctest.h>

#include <cmath>

using namespace wpcausal;
using testing::max_abs;

namespace {

MatrixXd sample_cov(const MatrixXd& x) {
    const MatrixXd c = x.rowwise() - x.colwise().mean();
    return c.transpose() * c / (x.rows() - 1.0);
}

double corr(const VectorXd& a, const VectorXd& b) {
    const VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("weight_matrix: closed forms") {
    std::mt19937_64 rng(1);
    const MatrixXd sigma = testing::random_spd(5, rng);
    CHECK(max_abs(weight_matrix(sigma, sigma) - MatrixXd::Identity(5, 5)) < 1e-8);
    MatrixXd psi(1, 1), s(1, 1);
    psi << 3.0;
    s << 12.0;
    CHECK(weight_matrix(psi, s)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("weight_matrix: covariance preservation on random pairs") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 6;
        const MatrixXd psi = testing::random_spd(n, rng, 0.5, 5.0);
        const MatrixXd sigma = psi + testing::random_spd(n, rng, 0.01, 3.0);
        const MatrixXd w = weight_matrix(psi, sigma);
        CHECK(max_abs(w.transpose() * sigma * w - psi) < 1e-8);
    }
}

TEST_CASE("trait_predictor: degenerate and scalar cases") {
    const auto sim = testing::simulate(500, 4, 10.0, 9);
    MeasurementFit fit = fit_measurement(sim.observed.series(0));
    MeasurementFit zero = fit;
    zero.params.phi2 = 0.0;
    CHECK(trait_predictor(sim.observed.series(0), zero).cwiseAbs().maxCoeff() == 0.0);

    const VectorXd pred = trait_predictor(sim.observed.series(0), fit);
    CHECK(std::abs(pred.mean()) < 1e-10);

    MatrixXd x(4, 1);
    x << 1, 2, 3, 6;
    MeasurementFit scalar;
    scalar.params.phi2 = 4.0;
    scalar.implied_sigma = MatrixXd::Constant(1, 1, 9.0);
    const VectorXd s = trait_predictor(x, scalar);
    CHECK(s(0) == doctest::Approx(2.0 / 3.0 * (1.0 - 3.0)));
    CHECK(s(3) == doctest::Approx(2.0 / 3.0 * (6.0 - 3.0)));
}

TEST_CASE("assemble_trait_covariance: Kronecker structure") {
    MeasurementFit f;
    f.params.phi2 = 1.0;
    f.converged = true;
    const MatrixXd traits = MatrixXd::Zero(10, 3);
    const TraitCovariance t = assemble_trait_covariance({f, f, f}, traits, 2);
    CHECK(max_abs(t.phi - MatrixXd::Identity(3, 3)) == 0.0);
    MatrixXd expected = MatrixXd::Zero(6, 6);
    for (int v = 0; v < 3; ++v) expected.block(2 * v, 2 * v, 2, 2).setOnes();
    CHECK(max_abs(t.phi_plus - expected) == 0.0);

    MeasurementFit single;
    single.params.phi2 = 2.5;
    single.converged = true;
    CHECK(max_abs(assemble_trait_covariance({single}, MatrixXd::Zero(10, 1), 3).phi_plus -
                  MatrixXd::Constant(3, 3, 2.5)) == 0.0);

    MeasurementFit improper = f;
    improper.improper = true;
    CHECK_THROWS_AS(assemble_trait_covariance({f, improper, f}, traits, 2), Error);
}

TEST_CASE("estimate_psi: population identities") {
    std::mt19937_64 rng(5);
    const MatrixXd s = testing::random_spd(6, rng);
    TraitCovariance none;
    none.phi = MatrixXd::Zero(3, 3);
    none.phi_plus = MatrixXd::Zero(6, 6);
    CHECK(max_abs(estimate_psi(s, none).matrix - s) < 1e-10);

    MeasurementFit f;
    f.params.phi2 = 2.0;
    f.converged = true;
    const TraitCovariance t = assemble_trait_covariance({f, f, f}, MatrixXd::Zero(10, 3), 2);
    CHECK(max_abs(estimate_psi(s + t.phi_plus, t).matrix - s) < 1e-9);

    // clipping more than 5% of the trace is refused
    TraitCovariance big = t;
    big.phi_plus *= 50.0;
    CHECK_THROWS_AS(estimate_psi(s, big), Error);
}

TEST_CASE("step 1 on a simulated panel") {
    const auto sim = generate(testing::ar1_config(1000, 14));
    const Step1Result s1 = run_step1(sim.observed);
    REQUIRE(s1.fits_usable());
    REQUIRE(s1.proposed_available());
    const ScoreSet proposed = center(sim.observed, Centering::proposed, {&s1, nullptr});

    SUBCASE("covariance preservation W'SW = Psi") {
        const MatrixXd& w = s1.weights;
        const MatrixXd lhs = w.transpose() * s1.moments.covariance * w;
        CHECK(max_abs(lhs - s1.psi->matrix) <= 1e-6 * s1.psi->matrix.norm());
        const MatrixXd cov = sample_cov(stack_persons(proposed.within_scores));
        CHECK(max_abs(cov - s1.psi->matrix) <= 1e-6 * s1.psi->matrix.norm());
    }
    SUBCASE("within-variable diagonal of Psi is near 10") {
        const auto n = s1.psi->matrix.rows();
        CHECK(s1.psi->matrix.diagonal().mean() == doctest::Approx(10.0).epsilon(0.15));
        CHECK(n == 15);
    }
    SUBCASE("proposed scores are centred") {
        for (int v = 0; v < 3; ++v) CHECK(proposed.series(v).colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("trait predictor centering") {
        const ScoreSet tp = center(sim.observed, Centering::trait_predictor, {&s1, nullptr});
        for (int v = 0; v < 3; ++v) {
            const MatrixXd expected = sim.observed.series(v).colwise() - s1.trait_scores.col(v);
            CHECK(max_abs(tp.series(v) - expected) < 1e-12);
        }
    }
}

TEST_CASE("W is the identity without traits") {
    // Within-only data: the fitted phi2 is near zero; forcing Phi+ = 0 gives W = I.
    const auto sim = testing::simulate(500, 3, 10.0, 15);
    const MatrixXd x = stack_persons(sim.true_within);
    const MatrixXd s = sample_cov(x);
    TraitCovariance none;
    none.phi = MatrixXd::Zero(3, 3);
    none.phi_plus = MatrixXd::Zero(s.rows(), s.cols());
    const MatrixXd w = weight_matrix(estimate_psi(s, none).matrix, s);
    CHECK(max_abs(w - MatrixXd::Identity(s.rows(), s.cols())) < 1e-10);
}

TEST_CASE("large-N step 1 against population oracles") {
    const SimConfig config = testing::ar1_config(1000000, 16);
    const auto sim = generate(config);
    const Step1Result s1 = run_step1(sim.observed);
    REQUIRE(s1.proposed_available());
    const int t = config.k_times + 1;
    const MatrixXd sigma = testing::stacked_total_covariance(config);
    const MatrixXd psi = testing::stacked_within_covariance(config);

    SUBCASE("trait variances") {
        for (int v = 0; v < 3; ++v) CHECK(std::abs(s1.fits[static_cast<std::size_t>(v)].params.phi2 - 10.0) < 0.2);
    }
    SUBCASE("trait predictor covariances") {
        // Var(I_v) is preserved; cross-covariances follow c_a c_b 1' S_a^-1 S_ab S_b^-1 1.
        std::vector<VectorXd> u;
        std::vector<double> scale;
        for (int v = 0; v < 3; ++v) {
            const MatrixXd block = sigma.block(v * t, v * t, t, t);
            u.push_back(block.llt().solve(VectorXd::Ones(t)));
            scale.push_back(std::sqrt(config.phi2 / u.back().sum()));
        }
        const MatrixXd c = sample_cov(s1.trait_scores);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const double expected = scale[static_cast<std::size_t>(a)] * scale[static_cast<std::size_t>(b)] *
                                        u[static_cast<std::size_t>(a)].dot(sigma.block(a * t, b * t, t, t) * u[static_cast<std::size_t>(b)]);
                CHECK(std::abs(c(a, b) / expected - 1.0) < 0.02);
                if (a == b) CHECK(expected == doctest::Approx(config.phi2));
            }
        }
    }
    SUBCASE("fidelity of the proposed scores") {
        // Cov(X^*, X*) = W' Psi and Var(X^*) = Psi, so Corr_j = (W' Psi)_jj / Psi_jj.
        const MatrixXd w = weight_matrix(psi, sigma);
        const VectorXd expected = (w.transpose() * psi).diagonal().cwiseQuotient(psi.diagonal());
        const ScoreSet proposed = center(sim.observed, Centering::proposed, {&s1, nullptr});
        for (int v = 0; v < 3; ++v)
            for (int k = 0; k < t; ++k) {
                const double r = corr(proposed.series(v).col(k), sim.true_within[static_cast<std::size_t>(v)].col(k));
                CHECK(std::abs(r - expected(v * t + k)) < 0.01);
                CHECK(r > 0.75);
            }
    }
}

TEST_CASE("step 1 under the default dynamics overstates the trait variance") {
    // The default within-person system is not AR(1) per variable; the fitted
    // trait variance absorbs part of the slow within-person dependence.
    const auto sim = testing::simulate(200000, 4, 10.0, 17);
    const Step1Result s1 = run_step1(sim.observed);
    REQUIRE(s1.fits_usable());
    CHECK(s1.fits[0].params.phi2 == doctest::Approx(12.8).epsilon(0.03));
}

TEST_CASE("weight_matrix: Psi on the boundary of the PSD cone") {
    std::mt19937_64 rng(21);
    const int n = 6;
    MatrixXd psi = testing::random_spd(n, rng, 0.5, 5.0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(psi);
    VectorXd lambda = es.eigenvalues();
    lambda(0) = kEigenFloor * lambda.maxCoeff();  // what repair_psd leaves behind
    psi = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    const MatrixXd sigma = psi + testing::random_spd(n, rng, 0.1, 3.0);
    const MatrixXd w = weight_matrix(psi, sigma);
    CHECK(max_abs(w.transpose() * sigma * w - psi) < 1e-8 * psi.norm());
}
