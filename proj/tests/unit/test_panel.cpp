#include "helpers.hpp"
#include "wpcausal/errors.hpp"
#include "wpcausal/scores.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wpcausal;

namespace {

const std::vector<VariableSpec> kSchema{{"Y", Role::outcome}, {"A", Role::treatment}, {"L", Role::confounder}};

}  // namespace

TEST_CASE("csv: three-person file has the documented shape") {
    std::istringstream in("Y_0,Y_1,Y_2,A_0,A_1,A_2,L_0,L_1,L_2\n"
                          "1,2,3,0,1,0,5,5,5\n"
                          "4,5,6,1,1,1,2,2,2\n"
                          "7,8,9,0,0,1,3,4,5\n");
    const PanelDataset d = read_panel_csv(in, kSchema);
    CHECK(d.n_persons() == 3);
    CHECK(d.n_times() == 3);
    CHECK(d.value(2, 1, 0) == 8.0);
    CHECK(d.value(0, 2, 2) == 5.0);
    CHECK(d.outcome_index() == 0);
    CHECK(d.treatment_index() == 1);
    CHECK(d.confounder_indices() == std::vector<int>{2});
}

TEST_CASE("csv: column order in the file does not matter") {
    std::istringstream in("L_2,Y_0,Y_1,Y_2,A_0,A_1,A_2,L_0,L_1\n9,1,2,3,0,1,0,5,5\n");
    const PanelDataset d = read_panel_csv(in, kSchema);
    CHECK(d.value(0, 2, 2) == 9.0);
    CHECK(d.value(0, 0, 0) == 1.0);
}

TEST_CASE("csv: empty cell is rejected with its location") {
    std::istringstream in("Y_0,Y_1,Y_2,A_0,A_1,A_2,L_0,L_1,L_2\n1,2,3,0,1,0,5,5,5\n4,,6,1,1,1,2,2,2\n");
    try {
        read_panel_csv(in, kSchema, "panel.csv");
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("Y_1") != std::string::npos);
    }
}

TEST_CASE("csv: schema errors") {
    SUBCASE("duplicate column") {
        std::istringstream in("Y_0,Y_1,Y_2,Y_1,A_0,A_1,A_2,L_0,L_1,L_2\n1,2,3,2,0,1,0,5,5,5\n");
        CHECK_THROWS_AS(read_panel_csv(in, kSchema), DataError);
    }
    SUBCASE("K < 2") {
        std::istringstream in("Y_0,Y_1,A_0,A_1,L_0,L_1\n1,2,0,1,5,5\n");
        CHECK_THROWS_AS(read_panel_csv(in, kSchema), IdentificationError);
    }
    SUBCASE("non-numeric") {
        std::istringstream in("Y_0,Y_1,Y_2,A_0,A_1,A_2,L_0,L_1,L_2\n1,x,3,0,1,0,5,5,5\n");
        CHECK_THROWS_AS(read_panel_csv(in, kSchema), DataError);
    }
    SUBCASE("roles") {
        const std::vector<VariableSpec> two_outcomes{{"Y", Role::outcome}, {"A", Role::outcome}};
        CHECK_THROWS_AS(validate_roles(two_outcomes), ConfigError);
        const std::vector<VariableSpec> dup{{"Y", Role::outcome}, {"Y", Role::treatment}};
        CHECK_THROWS_AS(validate_roles(dup), ConfigError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_panel_csv("/nonexistent/panel.csv", kSchema), DataError);
    }
}

TEST_CASE("csv: simulator output round-trips bit-exactly") {
    const auto sim = testing::simulate(200, 4, 10.0, 11);
    const auto path = std::filesystem::temp_directory_path() / "wpcausal_roundtrip.csv";
    write_panel_csv(path, sim.observed);
    const PanelDataset back = load_panel_csv(path, sim.observed.variables());
    for (int v = 0; v < 3; ++v) CHECK((back.series(v).array() == sim.observed.series(v).array()).all());
    // write -> load -> write is the identity on the file as well
    const auto path2 = std::filesystem::temp_directory_path() / "wpcausal_roundtrip2.csv";
    write_panel_csv(path2, back);
    std::ifstream a(path), b(path2);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("scores csv keeps the centering header and warnings") {
    const auto sim = testing::simulate(50, 2, 1.0, 3);
    ScoreSet s = center(sim.observed, Centering::observed_mean);
    s.warnings.push_back("example warning");
    const auto path = std::filesystem::temp_directory_path() / "wpcausal_scores.csv";
    write_scores_csv(path, s);
    const ScoreSet back = load_scores_csv(path, sim.observed.variables());
    CHECK(back.centering == Centering::observed_mean);
    REQUIRE(back.warnings.size() == 1);
    CHECK(back.warnings[0] == "example warning");
    CHECK((back.series(1).array() == s.series(1).array()).all());
    std::filesystem::remove(path);
}

TEST_CASE("stacked moments") {
    SUBCASE("identical persons give a zero covariance") {
        std::vector<MatrixXd> values(3, MatrixXd::Constant(4, 3, 2.5));
        const PanelDataset d(kSchema, values);
        const auto m = stacked_moments(d);
        CHECK(testing::max_abs(m.covariance) == 0.0);
        CHECK(m.mean.size() == 9);
    }
    SUBCASE("hand calculation") {
        MatrixXd y(2, 3);
        y << 0, 0, 0, 2, 2, 2;
        std::vector<MatrixXd> values{y, MatrixXd::Zero(2, 3), MatrixXd::Zero(2, 3)};
        const PanelDataset d(kSchema, values);
        const auto m = stacked_moments(d, {0});
        CHECK(m.mean(0) == doctest::Approx(1.0));
        CHECK(m.mean(1) == doctest::Approx(1.0));
        CHECK(m.covariance(0, 0) == doctest::Approx(2.0));
        CHECK(m.covariance(0, 1) == doctest::Approx(2.0));
        CHECK(m.covariance(1, 1) == doctest::Approx(2.0));
    }
    SUBCASE("stacking is variable-major, time-minor") {
        const auto sim = testing::simulate(30, 2, 1.0, 5);
        const MatrixXd x = stack_persons(sim.observed.all_series());
        CHECK(x(4, 1 * 3 + 2) == sim.observed.value(4, 2, 1));
        const auto back = unstack_persons(x, 3, 3);
        CHECK((back[2].array() == sim.observed.series(2).array()).all());
        const auto m = stacked_moments(sim.observed);
        CHECK(testing::max_abs(m.covariance - m.covariance.transpose()) == 0.0);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.covariance);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
}

TEST_CASE("large-N observed variance equals within plus trait variance") {
    const auto sim = testing::simulate(1000000, 2, 10.0, 21);
    const auto m = stacked_moments(sim.observed, {0});
    CHECK(std::abs(m.covariance(0, 0) / 20.0 - 1.0) < 0.01);
}

TEST_CASE("centering contracts") {
    const auto sim = testing::simulate(100, 4, 10.0, 8);
    SUBCASE("none is the identity") {
        const ScoreSet s = center(sim.observed, Centering::none);
        for (int v = 0; v < 3; ++v) CHECK((s.series(v).array() == sim.observed.series(v).array()).all());
    }
    SUBCASE("observed mean rows sum to zero") {
        const ScoreSet s = center(sim.observed, Centering::observed_mean);
        for (int v = 0; v < 3; ++v) CHECK(s.series(v).rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("observed mean hand example") {
        MatrixXd y(1, 3);
        y << 1, 2, 3;
        std::vector<MatrixXd> values{y, MatrixXd::Zero(1, 3), MatrixXd::Zero(1, 3)};
        const ScoreSet s = center(PanelDataset(kSchema, values), Centering::observed_mean);
        CHECK(s.series(0)(0, 0) == doctest::Approx(-1.0));
        CHECK(s.series(0)(0, 1) == doctest::Approx(0.0));
        CHECK(s.series(0)(0, 2) == doctest::Approx(1.0));
    }
    SUBCASE("true scores recover the simulated within scores") {
        const ScoreSet s = center(sim.observed, Centering::true_scores, {nullptr, &sim.true_traits});
        for (int v = 0; v < 3; ++v) CHECK(testing::max_abs(s.series(v) - sim.true_within[static_cast<std::size_t>(v)]) < 1e-12);
    }
    SUBCASE("artifact mismatch is a configuration error") {
        CHECK_THROWS_AS(center(sim.observed, Centering::proposed), ConfigError);
        CHECK_THROWS_AS(center(sim.observed, Centering::true_scores), ConfigError);
        CHECK_THROWS_AS(center(sim.observed, Centering::trait_predictor), ConfigError);
    }
    SUBCASE("names parse back") {
        for (Centering c : all_centerings()) CHECK(parse_centering(to_string(c)) == c);
        CHECK_THROWS_AS(parse_centering("median"), ConfigError);
    }
}
