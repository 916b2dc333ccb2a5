import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import standard_forward_bisect
from twistlab.maps import (AnnulusPoint, backward, check_twist, forward, froeschle, integrable,
                           iterate, make_family, orbit, product, standard, tangent,
                           tangent_inverse)
from twistlab.symplectic import form_matrix

coord = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=100)
@given(st.floats(0, 2), coord, coord)
def test_standard_forward_matches_bisection(eps, q, p):
    S = standard(eps)
    img = forward(S, AnnulusPoint([q], [p]))
    Q, P = standard_forward_bisect(eps, q, p)
    assert img.q[0] == pytest.approx(Q, abs=1e-10)
    assert img.p[0] == pytest.approx(P, abs=1e-10)


def _families():
    return [integrable(1), standard(0.7), froeschle(0.5, 0.3, 0.1),
            product(standard(1.0), integrable(1))]


@pytest.mark.parametrize("S", _families(), ids=lambda s: s.name)
def test_forward_backward_round_trip(S):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = AnnulusPoint(rng.uniform(0, 1, S.n), rng.normal(size=S.n))
        y = backward(S, forward(S, x))
        assert np.allclose(y.q, x.q, atol=1e-10) and np.allclose(y.p, x.p, atol=1e-10)


@pytest.mark.parametrize("S", _families(), ids=lambda s: s.name)
def test_tangent_is_symplectic_and_matches_differences(S):
    rng = np.random.default_rng(2)
    x = AnnulusPoint(rng.uniform(0, 1, S.n), rng.normal(size=S.n))
    y = forward(S, x)
    m = tangent(S, x.q, y.q)
    j = form_matrix(S.n)
    assert np.allclose(m.T @ j @ m, j, atol=1e-10)
    assert np.allclose(tangent_inverse(S, x.q, y.q) @ m, np.eye(2 * S.n), atol=1e-10)
    h = 1e-6
    fd = np.empty_like(m)
    for k in range(2 * S.n):
        e = np.zeros(2 * S.n)
        e[k] = h
        plus = forward(S, AnnulusPoint(*np.split(x.vector + e, 2)))
        minus = forward(S, AnnulusPoint(*np.split(x.vector - e, 2)))
        fd[:, k] = (plus.vector - minus.vector) / (2 * h)
    assert np.allclose(fd, m, atol=1e-6)


def test_hyperbolic_tangent_at_half():
    S = standard(1.0)
    assert np.allclose(tangent(S, [0.5], [0.5]), [[2, 1], [1, 1]], atol=1e-14)


def test_integrable_is_a_shear():
    S = integrable(2)
    x = AnnulusPoint([0.1, 0.2], [0.3, -0.4])
    y = iterate(S, x, 5)
    assert np.allclose(y.q, x.q + 5 * x.p) and np.allclose(y.p, x.p)


def test_product_acts_componentwise():
    S = product(standard(1.0), integrable(1))
    x = AnnulusPoint([0.3, 0.1], [0.2, 0.5])
    y = forward(S, x)
    a = forward(standard(1.0), AnnulusPoint([0.3], [0.2]))
    b = forward(integrable(1), AnnulusPoint([0.1], [0.5]))
    assert np.allclose(y.q, [a.q[0], b.q[0]], atol=1e-12)
    assert np.allclose(y.p, [a.p[0], b.p[0]], atol=1e-12)


def test_orbit_segment_and_periodic_points():
    S = standard(1.0)
    seg = orbit(S, AnnulusPoint([0.5], [0.0]), 4)
    assert len(seg) == 5 and np.allclose(seg.q, 0.5)


@pytest.mark.parametrize("S", _families(), ids=lambda s: s.name)
def test_twist_constant(S):
    res = check_twist(S, samples=200, rng=0)
    assert res.ok and res.alpha_estimate == pytest.approx(1.0)


def test_make_family_and_errors():
    S = make_family({"family": "froeschle", "params": {"eps1": 0.1, "eps2": 0.2, "mu": 0.05}})
    assert S.n == 2
    S = make_family({"family": "product", "params": {"factors": [
        {"family": "standard", "params": {"eps": 1.0}}, {"family": "integrable", "params": {}}]}})
    assert S.n == 2
    with pytest.raises(ValueError):
        make_family({"family": "henon"})
    with pytest.raises(KeyError):
        make_family({"family": "standard", "params": {}})


def test_froeschle_reduces_to_standard_when_uncoupled():
    F = froeschle(0.6, 0.9, 0.0)
    x = AnnulusPoint([0.2, 0.7], [0.1, -0.3])
    y = forward(F, x)
    a = forward(standard(0.6), AnnulusPoint([0.2], [0.1]))
    b = forward(standard(0.9), AnnulusPoint([0.7], [-0.3]))
    assert np.allclose(y.vector, [a.q[0], b.q[0], a.p[0], b.p[0]], atol=1e-12)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        AnnulusPoint([np.nan], [0.0])
