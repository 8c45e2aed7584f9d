import numpy as np
import pytest

import wpcausal


@pytest.fixture(scope="module")
def sim():
    return wpcausal.simulate(n_persons=2000, k_times=4, phi2=10.0, seed=7)


def test_simulate_shapes(sim):
    panel = sim["observed"]
    assert panel.n_persons == 2000
    assert panel.n_times == 5
    assert panel.names == ["Y", "A", "L"]
    assert panel.series("Y").shape == (2000, 5)
    assert sim["true_traits"].shape == (2000, 3)
    # observed = trait + within
    y = panel.series("Y")
    assert np.allclose(y, sim["true_traits"][:, [0]] + sim["true_within"]["Y"])


def test_simulate_deterministic():
    a = wpcausal.simulate(n_persons=50, seed=3)["observed"].series("A")
    b = wpcausal.simulate(n_persons=50, seed=3)["observed"].series("A")
    assert np.array_equal(a, b)


def test_true_tau():
    tau = wpcausal.true_tau(4)
    assert len(tau) == 10
    assert all(np.isfinite(v) for v in tau.values())


def test_spd_helpers():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(4, 4))
    c = m @ m.T + 4 * np.eye(4)
    half = wpcausal.spd_power(c, 0.5)
    assert np.allclose(half @ half, c)
    w = wpcausal.weight_matrix(c, c)
    assert np.allclose(w, np.eye(4), atol=1e-8)


def test_fit_measurement(sim):
    fit = wpcausal.fit_measurement(sim["observed"].series("Y"))
    assert fit["converged"]
    assert fit["phi2"] > 0
    assert len(fit["ar_coefs"]) == 4


def test_within_scores(sim):
    s = wpcausal.within_scores(sim["observed"], "proposed")
    assert set(s["within"]) == {"Y", "A", "L"}
    assert s["within"]["Y"].shape == (2000, 5)
    t = wpcausal.within_scores(sim["observed"], "true_scores", true_traits=sim["true_traits"])
    assert np.allclose(t["within"]["Y"], sim["true_within"]["Y"])


@pytest.mark.parametrize("method", ["msm", "snmm"])
def test_estimate_true_scores(sim, method):
    est = wpcausal.estimate(sim["observed"], method=method, centering="true_scores", true_traits=sim["true_traits"])
    assert est["method"] == method
    for name, truth in sim["true_tau"].items():
        if name in est["absent"]:
            continue
        assert abs(est["estimates"][name] - truth) < 6 * est["standard_errors"][name] + 0.05


def test_panel_round_trip(sim, tmp_path):
    path = tmp_path / "panel.csv"
    wpcausal.write_panel_csv(str(path), sim["observed"])
    back = wpcausal.load_panel_csv(str(path))
    for name in ["Y", "A", "L"]:
        assert np.array_equal(back.series(name), sim["observed"].series(name))


def test_panel_from_arrays():
    vals = [np.arange(6.0).reshape(2, 3) + i for i in range(3)]
    p = wpcausal.PanelDataset([("Y", "outcome"), ("A", "treatment"), ("L", "confounder")], vals)
    assert p.n_persons == 2 and p.n_times == 3
    assert np.array_equal(p.to_dict()["A"], vals[1])


def test_errors_are_python_exceptions(sim):
    with pytest.raises(wpcausal.Error):
        wpcausal.estimate(sim["observed"], centering="true_scores")


def test_monte_carlo_small():
    r = wpcausal.monte_carlo(n_persons=200, k_times=2, replications=3, workers=2, centerings=["true_scores", "none"])
    assert r["failed"] == 0
    assert r["csv"].count("\n") > 1
    assert "msm" in r["markdown"]
