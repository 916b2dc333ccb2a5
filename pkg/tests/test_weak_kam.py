import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lax_oleinik_naive
from twistlab.errors import NoConvergence
from twistlab.maps import froeschle, integrable, standard
from twistlab.weak_kam import (CostMatrix, Kind, SubactionGrid, conjugate_pair, estimate_lbar,
                               gradient_jumps, grid_nodes, lax_oleinik_backward,
                               lax_oleinik_forward, sigma_set, solve_calibrated)


def lbar_standard(eps):
    return -eps / (4 * np.pi ** 2)


@pytest.mark.parametrize("S", [standard(0.8), froeschle(0.4, 0.6, 0.2)], ids=["standard", "froeschle"])
def test_one_sweep_matches_double_loop(S):
    res = 16 if S.n == 1 else 5
    rng = np.random.default_rng(0)
    nodes = grid_nodes(S.n, res)
    vals = rng.normal(size=len(nodes)) * 0.01
    u = SubactionGrid(S.n, res, vals)
    ref_b = lax_oleinik_naive(S, vals, nodes, 0.01)
    ref_f = lax_oleinik_naive(S, vals, nodes, 0.01, backward=False)
    assert np.allclose(lax_oleinik_backward(S, u, 0.01).values, ref_b - ref_b.min(), atol=1e-14)
    assert np.allclose(lax_oleinik_forward(S, u, 0.01).values, ref_f - ref_f.min(), atol=1e-14)


_cm = CostMatrix(standard(0.7), 32, lbar_standard(0.7))


@settings(max_examples=60)
@given(st.integers(0, 2 ** 32 - 1))
def test_operator_is_monotone_and_non_expansive(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=32)
    v = u + np.abs(rng.normal(size=32))
    for op in (_cm.backward, _cm.forward):
        tu, tv = op(u), op(v)
        assert np.all(tu <= tv + 1e-15)
        w = rng.normal(size=32)
        assert np.max(np.abs(op(u) - op(w))) <= np.max(np.abs(u - w)) + 1e-14


def test_commutes_with_constants():
    u = np.linspace(0, 1, 32) ** 2
    assert np.allclose(_cm.backward(u + 3.0), _cm.backward(u) + 3.0)


@pytest.mark.parametrize("eps", [0.3, 1.0])
def test_estimate_lbar_standard(eps):
    assert estimate_lbar(standard(eps), 3, rng=0) == pytest.approx(lbar_standard(eps), abs=1e-12)


def test_integrable_subaction_is_constant():
    S = integrable(1)
    assert estimate_lbar(S, 2, rng=0) == pytest.approx(0.0, abs=1e-14)
    u = solve_calibrated(S, lbar=0.0, resolution=32)
    assert np.allclose(u.values, 0.0)


def test_calibrated_subaction_standard():
    eps = 0.5
    S = standard(eps)
    lbar = lbar_standard(eps)
    u = solve_calibrated(S, lbar=lbar, resolution=128)
    assert u.residual <= 1e-8 and u.info["calibration_defect"] <= 1e-8
    cm = CostMatrix(S, 128, lbar)
    # subaction inequality on every pair of nodes
    gap = cm.cost - (u.values[None, :] - u.values[:, None])
    assert gap.min() >= -1e-12
    rep = conjugate_pair(S, u, lbar)
    assert np.all(rep.u_plus.values <= u.values + 1e-12)
    assert u.index_of([0.5]) in set(rep.coincidence.tolist())


def test_no_convergence_carries_history():
    with pytest.raises(NoConvergence) as info:
        solve_calibrated(standard(1.0), lbar=lbar_standard(1.0), resolution=64, max_iters=1)
    assert info.value.history and info.value.last_increment > 0


def test_rejects_non_positive_tolerance():
    with pytest.raises(ValueError):
        solve_calibrated(standard(1.0), tol=0.0, resolution=16)


def test_sigma_singleton_and_jump():
    S = standard(1.0)
    lbar = lbar_standard(1.0)
    u = solve_calibrated(S, lbar=lbar, resolution=256)
    assert sigma_set(S, u, [0.5], lbar).singleton
    # the subaction has its kink opposite the fixed point
    jumps = gradient_jumps(u)
    node = int(np.argmax(jumps))
    assert u.nodes[node, 0] == pytest.approx(0.0, abs=2 * u.spacing)
    assert len(sigma_set(S, u, u.nodes[node], lbar).minimizers) == 2


def test_serialization_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    u = SubactionGrid(2, 8, rng.normal(size=64), Kind.FORWARD)
    back = SubactionGrid.from_bytes(u.to_bytes())
    assert back.kind is Kind.FORWARD and np.array_equal(back.values, u.values)
    blob = u.to_bytes()
    assert blob[:12] == np.array([2, 8, 1], dtype="<u4").tobytes()
    path = tmp_path / "u.csv"
    u.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, -1], u.values)
    u.save_binary(tmp_path / "u.bin")
    assert np.array_equal(SubactionGrid.load_binary(tmp_path / "u.bin").values, u.values)


def test_interpolation_is_exact_at_nodes_and_periodic():
    rng = np.random.default_rng(2)
    u = SubactionGrid(1, 16, rng.normal(size=16))
    assert np.allclose(u.interpolate(u.nodes), u.values)
    assert np.allclose(u.interpolate(u.nodes + 3.0), u.values)
