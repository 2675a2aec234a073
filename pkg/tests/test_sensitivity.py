import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import fd_sensitivities, path_ptdf, sweep_power_flow
from p2pgrid.feeders import five_node, random_radial
from p2pgrid.network import build_matrices
from p2pgrid.powerflow import solve_power_flow
from p2pgrid.sensitivity import (
    SensitivityEvaluator, StaleBundleError, bec, compute_bundle, dump_bundle,
    finite_difference_check, injection_shift_factors, predict_voltage_change, ptdf,
)


def _state(net, seed, scale=0.05):
    rng = np.random.default_rng(seed)
    n = net.n_nodes
    inj = np.r_[0, rng.normal(0, scale, n - 1) + 1j * rng.normal(0, scale / 5, n - 1)]
    return inj, solve_power_flow(net, inj, tol=1e-12)


@pytest.mark.parametrize("net", [five_node(), random_radial(12, 4)], ids=["five", "random12"])
def test_analytic_matches_sweep_differences(net):
    inj, op = _state(net, 1)
    b = compute_bundle(build_matrices(net), op, inj)
    dv, dl = fd_sensitivities(net, inj)
    np.testing.assert_allclose(b.dVmag_dP, dv, rtol=1e-4, atol=1e-9)
    np.testing.assert_allclose(b.dPloss_dP, dl, rtol=1e-4, atol=1e-9)


def test_finite_difference_report(five):
    rep = finite_difference_check(five, np.r_[0, 0.02, -0.03, 0.05, -0.01].astype(complex))
    assert rep.max_rel_error < 1e-6
    assert rep.n_compared > 0


@given(st.integers(3, 30), st.integers(0, 500))
def test_ptdf_is_path_indicator(n, seed):
    net = random_radial(n, seed)
    isf = injection_shift_factors(build_matrices(net))
    rng = np.random.default_rng(seed)
    i, j = (int(x) for x in rng.integers(0, n, 2))
    np.testing.assert_allclose(ptdf(isf, i, j), path_ptdf(net, i, j), atol=1e-9)


def test_ptdf_five_node_example(five):
    isf = injection_shift_factors(build_matrices(five))
    np.testing.assert_allclose(ptdf(isf, 3, 4), [0, -1, -1, 1], atol=1e-12)


def test_ptdf_antisymmetric(five):
    isf = injection_shift_factors(build_matrices(five))
    np.testing.assert_allclose(ptdf(isf, 2, 4), -ptdf(isf, 4, 2))
    np.testing.assert_allclose(ptdf(isf, 3, 3), 0)


@given(st.integers(0, 1000))
def test_bec_antisymmetric(seed):
    net = random_radial(10, seed)
    inj, op = _state(net, seed)
    b = compute_bundle(build_matrices(net), op, inj)
    assert bec(b.dPloss_dP, 3, 7) == pytest.approx(-bec(b.dPloss_dP, 7, 3))
    assert bec(b.dPloss_dP, 5, 5) == 0


def test_lsf_zero_at_no_load(five):
    inj = np.zeros(5, dtype=complex)
    b = compute_bundle(build_matrices(five), solve_power_flow(five, inj), inj)
    np.testing.assert_allclose(b.dPloss_dP, 0, atol=1e-12)


def test_evaluator_matches_bundle():
    net = random_radial(20, 9)
    inj, op = _state(net, 2)
    mats = build_matrices(net)
    b = compute_bundle(mats, op, inj)
    ev = SensitivityEvaluator(mats, op)
    for k in (1, 7, 19):
        np.testing.assert_allclose(ev.vsc_column(k), b.vsc_column(k), atol=1e-12)
        assert ev.lsf(k) == pytest.approx(b.lsf(k), abs=1e-12)
    np.testing.assert_allclose(ev.dPloss_dP, b.dPloss_dP, atol=1e-12)


def test_prediction_close_to_ac(five):
    inj, op = _state(five, 3, 0.02)
    b = compute_bundle(build_matrices(five), op, inj)
    dp = 1e-3
    dv = predict_voltage_change(b, 3, 4, dp, inj)
    inj2 = inj.copy()
    inj2[3] += dp
    inj2[4] -= dp
    V2, _ = sweep_power_flow(five, inj2)
    np.testing.assert_allclose(dv, np.abs(V2) - np.abs(op.V), atol=1e-6)


def test_stale_bundle_refused(five):
    inj, op = _state(five, 3)
    b = compute_bundle(build_matrices(five), op, inj)
    with pytest.raises(StaleBundleError):
        predict_voltage_change(b, 3, 4, 1e-3, inj * 1.1)


def test_dump_bundle_writes_tables(tmp_path, five):
    inj, op = _state(five, 3)
    paths = dump_bundle(compute_bundle(build_matrices(five), op, inj), five, tmp_path)
    assert paths and all(p.exists() and p.read_text().count("\n") > 1 for p in paths)
