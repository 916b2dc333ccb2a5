import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistlab.errors import InsufficientSamples
from twistlab.geometry import (ConeSample, c1_isotropic_check, contingent_cone, invariant_circle_samples,
                               limit_contingent_cone, modified_green, palg_inequality_check,
                               product_samples, unstable_manifold_samples, verify_cone_theorem)
from twistlab.green import green_bundles_all
from twistlab.maps import AnnulusPoint, OrbitSegment, integrable, product, standard
from twistlab.symplectic import C0, sym
from twistlab.weak_kam import conjugate_pair, solve_calibrated

t = 2.0 ** -np.arange(0, 30, 0.25)


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _has(dirs, v, deg=5.0):
    return any(d @ _unit(v) >= np.cos(np.deg2rad(deg)) for d in dirs)


def test_cone_of_segment_endpoint_and_interior():
    pts = np.column_stack([t, 2 * t])
    cone = contingent_cone(np.vstack([pts, [[0, 0]]]), [0, 0])
    assert len(cone) == 1 and _has(cone.directions, [1, 2])
    both = np.vstack([pts, -pts, [[0, 0]]])
    cone = contingent_cone(both, [0, 0])
    assert len(cone) == 2 and _has(cone.directions, [-1, -2])


def test_cone_of_parabola_is_tangent_line():
    pts = np.vstack([np.column_stack([t, t ** 2]), np.column_stack([-t, t ** 2]), [[0, 0]]])
    cone = contingent_cone(pts, [0, 0])
    assert len(cone) == 2 and _has(cone.directions, [1, 0]) and _has(cone.directions, [-1, 0])


def test_cone_of_isolated_point_is_empty():
    far = np.column_stack([1 + t, t])
    cone = contingent_cone(np.vstack([far, [[0, 0]]]), [0, 0], radii=0.5)
    assert len(cone) == 0


def test_cone_of_crossing_lines():
    pts = np.vstack([np.column_stack([s * t, r * t]) for s in (1, -1) for r in (1, -1)] + [[[0, 0]]])
    cone = contingent_cone(pts, [0, 0])
    assert len(cone) == 4
    for v in ([1, 1], [1, -1], [-1, 1], [-1, -1]):
        assert _has(cone.directions, v)


@settings(max_examples=30)
@given(st.floats(0.01, 100))
def test_cone_is_scale_invariant(scale):
    pts = np.vstack([np.column_stack([t, t ** 2 + 0.5 * t]), np.column_stack([-t, t]), [[0, 0]]])
    ref = contingent_cone(pts, [0, 0]).directions
    got = contingent_cone(scale * pts, [0, 0]).directions
    assert len(ref) == len(got)
    for d in got:
        assert _has(ref, d)


def test_needs_two_samples():
    with pytest.raises(InsufficientSamples):
        contingent_cone(np.zeros((1, 2)), [0, 0])
    with pytest.raises(InsufficientSamples):
        limit_contingent_cone(np.zeros((1, 2)), [0, 0])


def test_limit_cone_contains_cone_at_base():
    pts = np.vstack([np.column_stack([t, 2 * t]), [[0, 0]]])
    lim = limit_contingent_cone(pts, [0, 0])
    assert _has(lim.directions, [1, 2])
    rows = lim.rows()
    assert len(rows[0]) == 2 + 2 + 1


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_modified_green_brackets(seed, n):
    rng = np.random.default_rng(seed)
    lo = sym(rng.normal(size=(n, n)))
    f = rng.normal(size=(n, n))
    hi = lo + f @ f.T
    wlo, whi = modified_green((lo, hi))
    for a, b in ((wlo, lo), (lo, hi), (hi, whi)):
        assert np.linalg.eigvalsh(sym(b - a)).min() >= -1e-12
    assert np.allclose(whi - wlo, (1 + 2 * C0) * (hi - lo))


def _fixed(q, p):
    q, p = np.atleast_1d(q), np.atleast_1d(p)
    return OrbitSegment(q[None, :], p[None, :], periodic=True)


def test_verify_cone_standard_hyperbolic():
    S = standard(1.0)
    orb = _fixed(0.5, 0.0)
    samples = unstable_manifold_samples(S, orb.point(0), count=400)
    green = green_bundles_all(S, orb, extrapolate=True)
    rep = verify_cone_theorem(S, samples, green, tol=1e-6)
    assert rep.checked >= 4 and rep.ok


def test_verify_cone_integrable_circle():
    S = integrable(1)
    orb = _fixed(0.3, 0.0)
    samples = invariant_circle_samples(0.0, 200, focus=0.3)
    green = green_bundles_all(S, orb, extrapolate=True)
    rep = verify_cone_theorem(S, samples, green, tol=1e-6)
    assert rep.checked == 2 and rep.ok
    cone = limit_contingent_cone(samples, orb.point(0).vector)
    assert c1_isotropic_check(cone)


def test_verify_cone_product():
    S = product(standard(1.0), integrable(1))
    orb = _fixed([0.5, 0.3], [0.0, 0.0])
    first = unstable_manifold_samples(S.first, AnnulusPoint([0.5], [0.0]), count=120)
    second = invariant_circle_samples(0.0, 60, focus=0.3)
    samples = product_samples(first, second)
    green = green_bundles_all(S, orb, extrapolate=True)
    rep = verify_cone_theorem(S, samples, green, tol=1e-6)
    assert rep.checked >= 6 and rep.ok
    dirs = [np.array(v) for v, _, _ in rep.per_base[0]["directions"]]
    assert _has(dirs, [0, 1, 0, 0]) and _has(dirs, [0, -1, 0, 0])


def test_verify_cone_detects_a_direction_outside():
    # a vertical segment through the fixed point is not between the Green bundles
    S = standard(1.0)
    orb = _fixed(0.5, 0.0)
    samples = np.vstack([np.column_stack([np.full(len(t), 0.5), 0.05 * t]), [[0.5, 0.0]]])
    rep = verify_cone_theorem(S, samples, green_bundles_all(S, orb), tol=1e-6)
    assert rep.checked >= 1 and not rep.ok


def test_c1_isotropic_rejects_symplectic_pair():
    cone = ConeSample(np.zeros(2), np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones(1))
    assert not c1_isotropic_check(cone)
    cone = ConeSample(np.zeros(2), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.ones(1))
    assert c1_isotropic_check(cone)


def test_palg_at_hyperbolic_point():
    eps = 0.5
    S = standard(eps)
    lbar = -eps / (4 * np.pi ** 2)
    u = solve_calibrated(S, lbar=lbar, resolution=256)
    wk = conjugate_pair(S, u, lbar)
    x = np.array([0.5])
    seqs = [np.array([[0.5 + s * 0.05]]) for s in (1, -1)]
    rep = palg_inequality_check(S, wk, x, seqs, m=1)
    assert len(rep.pairs) == 2
    # Q- <= Q+ at a minimizing point, and passing pairs get a sigma inside the band
    assert rep.q_plus[0, 0] >= rep.q_minus[0, 0] - 1e-6
    assert all(min(h) >= 0 for h in rep.closed_form)
    for sig in rep.sigma_ok:
        assert sig is not None
        assert min(sig["band"]) >= -1e-9 and sig["residual"] <= 1e-10
