#include "helpers.hpp"
#include "wpcausal/errors.hpp"
#include "wpcausal/montecarlo.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace wpcausal;

namespace {

CellSpec small_cell(double phi2, int n, std::uint64_t seed) {
    CellSpec spec;
    spec.sim.n_persons = n;
    spec.sim.k_times = 3;
    spec.sim.phi2 = phi2;
    spec.sim.seed = seed;
    spec.replications = 6;
    return spec;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("summarize_estimates") {
    NamedVector truth{{"b0", "b1"}, VectorXd(2)};
    truth.values << 1.0, 0.0;
    MatrixXd est(4, 2);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    est << 1.1, 0.2, 0.9, nan, 1.2, -0.2, 0.8, nan;
    const auto s = summarize_estimates(est, truth);
    CHECK(s[0].used == 4);
    CHECK(s[0].bias == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s[0].rmse == doctest::Approx(std::sqrt((0.01 + 0.01 + 0.04 + 0.04) / 4.0)));
    CHECK(s[1].used == 2);
    CHECK(s[1].bias == doctest::Approx(0.0));
    CHECK(s[1].mc_se == doctest::Approx(std::sqrt(0.08 / 1.0 / 2.0)));

    // permutation invariance
    MatrixXd perm(4, 2);
    perm << est.row(2), est.row(0), est.row(3), est.row(1);
    const auto p = summarize_estimates(perm, truth);
    CHECK(p[0].bias == doctest::Approx(s[0].bias));
    CHECK(p[0].rmse == doctest::Approx(s[0].rmse));
}

TEST_CASE("run_cell: determinism across worker counts") {
    CellSpec spec = small_cell(10.0, 300, 77);
    const CellResult one = run_cell(spec, 1);
    const CellResult three = run_cell(spec, 3);
    REQUIRE(one.arms.size() == 10);
    for (std::size_t a = 0; a < one.arms.size(); ++a) {
        const auto& x = one.arms[a].estimates;
        const auto& y = three.arms[a].estimates;
        CHECK(((x.array() == y.array()) || (x.array().isNaN() && y.array().isNaN())).all());
    }
    CHECK(summarize({one}).csv == summarize({three}).csv);

    spec.replications = 1;
    CHECK(summarize({run_cell(spec)}).csv == summarize({run_cell(spec)}).csv);
}

TEST_CASE("run_cell: bookkeeping") {
    CellSpec spec = small_cell(10.0, 300, 5);
    spec.methods = {Method::snmm};
    spec.centerings = {Centering::true_scores, Centering::observed_mean};
    const CellResult r = run_cell(spec);
    CHECK(r.truth.names.size() == 6);
    const ArmResult& om = r.arm(Method::snmm, Centering::observed_mean);
    // last outcome time is unidentified under observed-mean centering
    CHECK(r.summary(Method::snmm, Centering::observed_mean, "beta_3_2").used == 0);
    CHECK(r.summary(Method::snmm, Centering::observed_mean, "beta_2_1").used == spec.replications);
    CHECK(om.discards() == 0);
    CHECK_FALSE(r.failed);
    CHECK_THROWS_AS(r.arm(Method::msm, Centering::none), ConfigError);

    CellSpec bad = spec;
    bad.replications = 0;
    CHECK_THROWS_AS(run_cell(bad), ConfigError);
}

TEST_CASE("run_cell: window choice") {
    CellSpec spec;
    spec.sim.k_times = 4;
    CHECK(spec.window().first_treatment == 0);
    spec.sim.k_times = 8;
    CHECK(spec.window().first_treatment == 4);
    spec.first_treatment = 2;
    CHECK(spec.window().first_treatment == 2);
}

TEST_CASE("summarize: layout and ordering") {
    CellSpec spec = small_cell(10.0, 200, 9);
    spec.replications = 2;
    spec.methods = {Method::msm};
    spec.centerings = {Centering::true_scores};
    const CellResult big = run_cell(spec);
    spec.sim.phi2 = 10.0 / 9.0;
    const CellResult small = run_cell(spec);

    const Report one = summarize({big});
    CHECK(count_lines(one.csv) == 1 + 6);
    CHECK(one.csv.rfind("cell,method,centering,parameter,bias,rmse,mc_se,discards\n", 0) == 0);

    // phi2 sorts first regardless of input order
    const Report a = summarize({big, small});
    const Report b = summarize({small, big});
    CHECK(a.csv == b.csv);
    std::istringstream lines(a.csv);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    CHECK(first.find("phi2=1.1111") != std::string::npos);
    CHECK(count_lines(a.markdown) == 2 + 12);
    CHECK_THROWS_AS(summarize({}), ConfigError);
}

TEST_CASE("cell label") {
    CellSpec spec;
    spec.sim.n_persons = 600;
    spec.sim.k_times = 8;
    spec.sim.phi2 = 10.0;
    CHECK(spec.label() == "N=600;K=8;phi2=10;scenario=clean");
}
