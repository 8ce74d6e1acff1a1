import numpy as np
import pytest

from conftest import lattice_w
from oracles import impacts_dense, impacts_neumann
from spatialspill.dgp import DgpParams, simulate_table
from spatialspill.effects import _ReducedForm, decompose_effects, impact_point
from spatialspill.errors import DimensionMismatch
from spatialspill.estimators import ModelSpec, fit


def fitted(kind, durbin=(), rows=10, cols=10, seed=1, **kw):
    w = lattice_w(rows, cols)
    t = simulate_table(DgpParams(beta=(1.0, 2.0), seed=seed, **kw), w)
    return fit(ModelSpec(kind, "y", ("x1", "x2"), durbin), t, w), w


def test_slx_indirect_equals_theta():
    res, w = fitted("SLX", ("x1", "x2"), theta=(0.5, -0.3))
    tab = decompose_effects(res, w, draws=0)
    assert np.max(np.abs(tab.indirect - res.theta)) <= 1e-12
    assert np.max(np.abs(tab.direct - res.beta)) <= 1e-12


def test_two_cycle_closed_form():
    w = lattice_w(1, 2)
    rf = _ReducedForm(w)
    direct, indirect, total = rf.effects(np.array([1.0]), np.array([0.0]), 0.3)
    # (I - 0.3 W)^-1 = [[1, 0.3], [0.3, 1]] / 0.91
    assert total[0] == pytest.approx(1 / 0.7, abs=1e-10)
    assert direct[0] == pytest.approx(1 / 0.91, abs=1e-10)
    assert indirect[0] == pytest.approx(1 / 0.7 - 1 / 0.91, abs=1e-10)


@pytest.mark.parametrize("rho", [-0.5, -0.2, 0.1, 0.35, 0.5])
@pytest.mark.parametrize("rule", ["rook", "queen"])
def test_neumann_and_dense_cross_checks(rho, rule):
    w = lattice_w(5, 6, rule)
    rf = _ReducedForm(w)
    beta, theta = np.array([1.3, -0.4]), np.array([0.6, 0.2])
    got = rf.effects(beta, theta, rho)
    for k in range(2):
        ref_n = impacts_neumann(w.dense(), beta[k], theta[k], rho)
        ref_d = impacts_dense(w.dense(), beta[k], theta[k], rho)
        for part in range(3):
            assert got[part][k] == pytest.approx(ref_n[part], abs=1e-8)
            assert got[part][k] == pytest.approx(ref_d[part], abs=1e-10)


def test_sar_constant_ratio():
    res, w = fitted("SAR", rho=0.4)
    d, i, _ = impact_point(res, w)
    ratios = i / d
    assert abs(ratios[0] - ratios[1]) < 1e-9


def test_sdm_ratios_differ():
    res, w = fitted("SDM", ("x1",), rho=0.3, theta=(0.5,))
    d, i, _ = impact_point(res, w)
    assert abs(i[0] / d[0] - i[1] / d[1]) > 1e-3


def test_sem_has_no_indirect():
    res, w = fitted("SEM", lambda_=0.4)
    tab = decompose_effects(res, w, draws=50)
    np.testing.assert_array_equal(tab.indirect, 0.0)
    np.testing.assert_array_equal(tab.sim_indirect, 0.0)
    np.testing.assert_array_equal(tab.total, tab.direct)


def test_draw_determinism_and_seed_sensitivity():
    res, w = fitted("SDM", ("x1",), rho=0.3, theta=(0.5,))
    a = decompose_effects(res, w, draws=100, seed=7)
    b = decompose_effects(res, w, draws=100, seed=7)
    c = decompose_effects(res, w, draws=100, seed=8)
    np.testing.assert_array_equal(a.sim_total, b.sim_total)
    np.testing.assert_array_equal(a.sim_indirect, b.sim_indirect)
    assert a.rows() == b.rows()
    assert not np.array_equal(a.sim_total, c.sim_total)


def test_simulated_mean_near_point():
    res, w = fitted("SDM", ("x1",), rho=0.3, theta=(0.5,))
    tab = decompose_effects(res, w, draws=400, seed=1)
    s = tab.summary("indirect")
    assert np.all(np.abs(s["mean"] - tab.indirect) < 4 * s["se"] / np.sqrt(400) + 0.05 * np.abs(tab.indirect))
    assert np.all(s["se"] > 0)


def test_rejects_mismatched_weights():
    res, w = fitted("SAR", rho=0.3)
    with pytest.raises(DimensionMismatch):
        decompose_effects(res, lattice_w(5, 5), draws=0)
    with pytest.raises(DimensionMismatch):
        decompose_effects(res, lattice_w(10, 10, "queen"), draws=0)


def test_rows_layout():
    res, w = fitted("SDM", ("x1",), rho=0.3, theta=(0.5,))
    rows = decompose_effects(res, w, draws=20).rows()
    panels = [r["panel"] for r in rows]
    assert panels == ["direct"] * 2 + ["indirect"] * 2 + ["total"] * 2 + ["spatial"]
