#include "helpers.hpp"
#include "wpcausal/errors.hpp"
#include "wpcausal/regression.hpp"
#include "wpcausal/simulate.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace wpcausal;
using testing::max_abs;

TEST_CASE("seed derivation") {
    CHECK(mix64(0) != mix64(1));
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
    NormalStream a(5), b(5);
    for (int i = 0; i < 11; ++i) CHECK(a.normal() == b.normal());
    NormalStream u(6);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK((x > 0.0 && x < 1.0));
    }
}

TEST_CASE("normal stream moments") {
    NormalStream z(123);
    double s = 0, s2 = 0, s4 = 0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const double x = z.normal();
        s += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.01);
    CHECK(std::abs(s4 / n - 3.0) < 0.05);
}

TEST_CASE("true_tau") {
    const NamedVector t = true_tau(4, 0);
    const std::vector<double> expected{0.40, 0.18, 0.40, 0.09, 0.18, 0.40, 0.0486, 0.09, 0.18, 0.40};
    REQUIRE(t.values.size() == 10);
    for (std::size_t j = 0; j < expected.size(); ++j) CHECK(t.values(static_cast<Eigen::Index>(j)) == doctest::Approx(expected[j]).epsilon(1e-12));
    CHECK(t.names.front() == "beta_1_0");
    CHECK(t.names.back() == "beta_4_3");
    CHECK(t.at("beta_2_0") == doctest::Approx(0.40 * 0.40 + 0.10 * 0.20));

    // K = 8 with the window starting at 4 has the same values
    const NamedVector t8 = true_tau(8, 4);
    REQUIRE(t8.values.size() == 10);
    CHECK(max_abs(t8.values - t.values) < 1e-15);
    CHECK(t8.names.front() == "beta_5_4");

    const auto lags = lag_effects(Dynamics{}, 4);
    CHECK(lags[0] == doctest::Approx(0.40));
    CHECK(lags[3] == doctest::Approx(0.0486));

    CHECK_THROWS_AS(true_tau(4, 4), ConfigError);

    Dynamics none;
    none.ya = none.la = 0.0;
    const NamedVector zero = true_tau(4, 0, none);
    CHECK(zero.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate: deterministic null") {
    SimConfig c;
    c.n_persons = 20;
    c.phi2 = 0.0;
    c.within_initial_variance = 0.0;
    c.within_initial_covariance = 0.0;
    c.residual_variance = 0.0;
    const SimulatedPanel p = generate(c);
    for (int v = 0; v < 3; ++v) CHECK(p.observed.series(v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate: clean panel decomposes exactly") {
    const auto sim = testing::simulate(300, 4, 10.0, 2);
    for (int v = 0; v < 3; ++v) {
        const MatrixXd rebuilt = sim.true_within[static_cast<std::size_t>(v)].colwise() + sim.true_traits.col(v);
        CHECK(max_abs(rebuilt - sim.observed.series(v)) == 0.0);
    }
}

TEST_CASE("generate: same seed gives bit-identical panels") {
    const auto a = testing::simulate(500, 4, 10.0, 42);
    const auto b = testing::simulate(500, 4, 10.0, 42);
    const auto c = testing::simulate(500, 4, 10.0, 43);
    for (int v = 0; v < 3; ++v) CHECK((a.observed.series(v).array() == b.observed.series(v).array()).all());
    CHECK_FALSE((a.observed.series(0).array() == c.observed.series(0).array()).all());
}

TEST_CASE("generate: large-N moments") {
    const auto sim = testing::simulate(1000000, 4, 10.0, 3);
    const MatrixXd init = stack_persons({sim.true_within[0].col(0), sim.true_within[1].col(0), sim.true_within[2].col(0)});
    const MatrixXd c = init.rowwise() - init.colwise().mean();
    const MatrixXd cov = c.transpose() * c / (init.rows() - 1.0);
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) CHECK(std::abs(cov(j, k) - (j == k ? 10.0 : 3.0)) < 0.1);
    // The default dynamics are not stationary at variance 10: the population
    // variance drifts to about 12 by K = 4. Compare with the exact recursion.
    const auto expected = testing::within_variances(SimConfig{});
    CHECK(expected[4](0) == doctest::Approx(12.151).epsilon(1e-4));
    for (int k = 0; k <= 4; ++k) {
        for (int v = 0; v < 3; ++v) {
            const VectorXd x = sim.true_within[static_cast<std::size_t>(v)].col(k);
            const double var = (x.array() - x.mean()).square().sum() / (x.size() - 1.0);
            CHECK(std::abs(var / expected[static_cast<std::size_t>(k)](v) - 1.0) < 0.01);
        }
    }
    // A*_k regression recovers the treatment dynamics
    Design d(1000000);
    d.add("Y", sim.true_within[0].col(3)).add("A_lag", sim.true_within[1].col(2)).add("L", sim.true_within[2].col(3));
    const LinearFit fit = least_squares(d, sim.true_within[1].col(3));
    CHECK(std::abs(fit.coefficient("Y") - 0.20) < 0.002);
    CHECK(std::abs(fit.coefficient("L") - 0.30) < 0.003);
    CHECK(std::abs(fit.coefficient("A_lag") - 0.40) < 0.004);
}

TEST_CASE("generate: stationary AR(1) configuration keeps variance 10") {
    const auto sim = generate(testing::ar1_config(400000, 4));
    for (int k = 0; k <= 4; ++k) {
        const VectorXd y = sim.true_within[0].col(k);
        CHECK(std::abs((y.array() - y.mean()).square().sum() / (y.size() - 1.0) / 10.0 - 1.0) < 0.03);
    }
}

TEST_CASE("scenarios") {
    SUBCASE("measurement error variance") {
        SimConfig c;
        c.phi2 = 10.0;
        c.scenario = Scenario::measurement_error_10;
        CHECK(c.measurement_error_variance() == doctest::Approx(2.0));
        c.scenario = Scenario::measurement_error_20;
        CHECK(c.measurement_error_variance() == doctest::Approx(4.0));
        c.scenario = Scenario::clean;
        CHECK(c.measurement_error_variance() == 0.0);

        const auto clean = testing::simulate(200000, 2, 10.0, 4);
        const auto noisy = testing::simulate(200000, 2, 10.0, 4, Scenario::measurement_error_10);
        // the underlying draw is unchanged; the added error has variance 2
        CHECK(max_abs(noisy.true_within[0] - clean.true_within[0]) == 0.0);
        const VectorXd e = noisy.observed.series(0).col(1) - clean.observed.series(0).col(1);
        CHECK(std::abs(e.squaredNorm() / e.size() - 2.0) < 0.03);
    }
    SUBCASE("time-varying loadings") {
        const auto sim = testing::simulate(100, 4, 10.0, 5, Scenario::timevarying_loadings);
        const VectorXd expected = 1.5 * sim.true_traits.col(0) + 0.3 * sim.true_traits.col(1) +
                                  0.3 * sim.true_traits.col(2) + sim.true_within[0].col(4);
        CHECK(max_abs(sim.observed.series(0).col(4) - expected) < 1e-12);
        // the clean decomposition intentionally fails
        const MatrixXd rebuilt = sim.true_within[0].colwise() + sim.true_traits.col(0);
        CHECK(max_abs(rebuilt - sim.observed.series(0)) > 0.1);
    }
    SUBCASE("quadratic confounding keeps the truth and shows the square term") {
        const auto sim = testing::simulate(1000000, 2, 10.0, 6, Scenario::quadratic_confounding);
        CHECK(max_abs(sim.true_tau.values - true_tau(2, 0).values) == 0.0);
        const VectorXd y = sim.true_within[0].col(2);
        Design d(y.size());
        d.add("Y", y).add("Y2", y.array().square().matrix()).add("A_lag", sim.true_within[1].col(1)).add("L", sim.true_within[2].col(2));
        const LinearFit fit = least_squares(d, sim.true_within[1].col(2));
        CHECK(std::abs(fit.coefficient("Y2") / 0.08 - 1.0) < 0.05);
    }
    SUBCASE("names") {
        CHECK(parse_scenario("quadratic_confounding") == Scenario::quadratic_confounding);
        CHECK_THROWS_AS(parse_scenario("nonsense"), ConfigError);
        SimConfig bad;
        bad.k_times = 1;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("truth file round trip") {
    const auto sim = testing::simulate(40, 3, 10.0, 8);
    const auto path = std::filesystem::temp_directory_path() / "wpcausal_truth.csv";
    write_truth_csv(path, sim);
    const TruthRecord back = load_truth_csv(path, sim.observed.variables());
    CHECK((back.traits.array() == sim.true_traits.array()).all());
    for (int v = 0; v < 3; ++v) CHECK((back.within[static_cast<std::size_t>(v)].array() == sim.true_within[static_cast<std::size_t>(v)].array()).all());
    CHECK(back.tau.names == sim.true_tau.names);
    CHECK(max_abs(back.tau.values - sim.true_tau.values) == 0.0);
    std::filesystem::remove(path);
}
