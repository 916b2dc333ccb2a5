"""Globally positive diffeomorphisms defined by generating functions.

A generating function ``S(q, Q)`` defines the lift ``F(q, p) = (Q, P)``
implicitly through ``p = -dS/dq(q, Q)`` and ``P = dS/dQ(q, Q)``.  All
evaluators broadcast over leading axes; the last axis has length n.

Orbits are kept in the universal cover R^n x R^n; nothing is reduced
modulo 1 during computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SolveDiverged, TwistViolated

TWO_PI = 2.0 * np.pi


class GeneratingFunction:
    """Interface for a twist generating function.

    Subclasses implement ``value`` and the five derivative methods.  In
    the Hessian names, ``a = d2S/dq2``, ``b = d2S/dqdQ`` (rows indexed by
    q, columns by Q) and ``c = d2S/dQ2``.
    """

    n: int = 1
    alpha: float = 1.0
    name: str = "generic"

    def params(self) -> dict:
        return {}

    def __call__(self, q, Q):
        return self.value(q, Q)

    def value(self, q, Q):
        raise NotImplementedError

    def grad_q(self, q, Q):
        raise NotImplementedError

    def grad_Q(self, q, Q):
        raise NotImplementedError

    def hess_qq(self, q, Q):
        raise NotImplementedError

    def hess_qQ(self, q, Q):
        raise NotImplementedError

    def hess_QQ(self, q, Q):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"family": self.name, "n": self.n, "params": self.params()}


class PotentialTwist(GeneratingFunction):
    """``S(q, Q) = |Q - q|^2 / 2 + V(q)`` with a Z^n-periodic potential V.

    The induced map is ``P = p + grad V(q)``, ``Q = q + P``; the twist
    constant is exactly 1.
    """

    def __init__(self, n: int, potential: Callable, gradient: Callable, hessian: Callable,
                 name: str = "potential", params: Optional[dict] = None):
        self.n = n
        self.alpha = 1.0
        self.name = name
        self._v, self._dv, self._d2v = potential, gradient, hessian
        self._params = dict(params or {})

    def params(self):
        return dict(self._params)

    def value(self, q, Q):
        q, Q = np.asarray(q, float), np.asarray(Q, float)
        return 0.5 * np.sum((Q - q) ** 2, axis=-1) + self._v(q)

    def grad_q(self, q, Q):
        q, Q = np.asarray(q, float), np.asarray(Q, float)
        return (q - Q) + self._dv(q)

    def grad_Q(self, q, Q):
        q, Q = np.asarray(q, float), np.asarray(Q, float)
        return Q - q

    def hess_qq(self, q, Q):
        q = np.asarray(q, float)
        return np.eye(self.n) + self._d2v(q)

    def hess_qQ(self, q, Q):
        shape = np.broadcast_shapes(np.shape(q), np.shape(Q))[:-1]
        return np.broadcast_to(-np.eye(self.n), shape + (self.n, self.n)).copy()

    def hess_QQ(self, q, Q):
        shape = np.broadcast_shapes(np.shape(q), np.shape(Q))[:-1]
        return np.broadcast_to(np.eye(self.n), shape + (self.n, self.n)).copy()

    # closed-form map, exact up to rounding
    def _forward(self, q, p):
        P = p + self._dv(q)
        return q + P, P

    def _backward(self, Q, P):
        q = Q - P
        return q, P - self._dv(q)


def integrable(n: int = 1) -> PotentialTwist:
    zero = lambda q: np.zeros(np.shape(q)[:-1])
    zgrad = lambda q: np.zeros(np.shape(q))
    zhess = lambda q: np.zeros(np.shape(q) + (np.shape(q)[-1],))
    return PotentialTwist(n, zero, zgrad, zhess, name="integrable", params={"n": n})


def standard(eps: float) -> PotentialTwist:
    """Standard family ``V(q) = eps / (4 pi^2) cos(2 pi q)``, n = 1.

    Fixed points sit at q = 0 (maximum of V) and q = 1/2 (minimum); the
    tangent map at q = 1/2 is ``[[1 + eps, 1], [eps, 1]]``.
    """
    k = eps / (TWO_PI ** 2)

    def v(q):
        return k * np.cos(TWO_PI * q[..., 0])

    def dv(q):
        return -k * TWO_PI * np.sin(TWO_PI * q)

    def d2v(q):
        return (-k * TWO_PI ** 2 * np.cos(TWO_PI * q))[..., None]

    return PotentialTwist(1, v, dv, d2v, name="standard", params={"eps": eps})


def froeschle(eps1: float, eps2: float, mu: float) -> PotentialTwist:
    """Two standard maps coupled through ``mu / (4 pi^2) cos(2 pi (q1 + q2))``."""
    scale = 1.0 / TWO_PI ** 2
    eps = np.array([eps1, eps2])

    def v(q):
        s = q[..., 0] + q[..., 1]
        return scale * (eps1 * np.cos(TWO_PI * q[..., 0]) + eps2 * np.cos(TWO_PI * q[..., 1])
                        + mu * np.cos(TWO_PI * s))

    def dv(q):
        s = (q[..., 0] + q[..., 1])[..., None]
        return -scale * TWO_PI * (eps * np.sin(TWO_PI * q) + mu * np.sin(TWO_PI * s))

    def d2v(q):
        s = q[..., 0] + q[..., 1]
        diag = -eps * np.cos(TWO_PI * q)
        cross = -mu * np.cos(TWO_PI * s)
        out = np.empty(np.shape(q)[:-1] + (2, 2))
        out[..., 0, 0] = diag[..., 0] + cross
        out[..., 1, 1] = diag[..., 1] + cross
        out[..., 0, 1] = cross
        out[..., 1, 0] = cross
        return out

    return PotentialTwist(2, v, dv, d2v, name="froeschle",
                          params={"eps1": eps1, "eps2": eps2, "mu": mu})


class ProductGF(GeneratingFunction):
    """``S(q, Q) = S1(q', Q') + S2(q'', Q'')`` for the split ``q = (q', q'')``."""

    def __init__(self, first: GeneratingFunction, second: GeneratingFunction):
        self.first, self.second = first, second
        self.n = first.n + second.n
        self.alpha = min(first.alpha, second.alpha)
        self.name = "product"

    def params(self):
        return {"factors": [self.first.describe(), self.second.describe()]}

    def _split(self, x):
        x = np.asarray(x, float)
        return x[..., : self.first.n], x[..., self.first.n:]

    def value(self, q, Q):
        (q1, q2), (Q1, Q2) = self._split(q), self._split(Q)
        return self.first.value(q1, Q1) + self.second.value(q2, Q2)

    def _cat(self, meth, q, Q):
        (q1, q2), (Q1, Q2) = self._split(q), self._split(Q)
        return np.concatenate([getattr(self.first, meth)(q1, Q1),
                               getattr(self.second, meth)(q2, Q2)], axis=-1)

    def _blk(self, meth, q, Q):
        (q1, q2), (Q1, Q2) = self._split(q), self._split(Q)
        a = getattr(self.first, meth)(q1, Q1)
        b = getattr(self.second, meth)(q2, Q2)
        shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        out = np.zeros(shape + (self.n, self.n))
        k = self.first.n
        out[..., :k, :k] = a
        out[..., k:, k:] = b
        return out

    def grad_q(self, q, Q):
        return self._cat("grad_q", q, Q)

    def grad_Q(self, q, Q):
        return self._cat("grad_Q", q, Q)

    def hess_qq(self, q, Q):
        return self._blk("hess_qq", q, Q)

    def hess_qQ(self, q, Q):
        return self._blk("hess_qQ", q, Q)

    def hess_QQ(self, q, Q):
        return self._blk("hess_QQ", q, Q)


def product(first: GeneratingFunction, second: GeneratingFunction) -> ProductGF:
    return ProductGF(first, second)


FAMILIES = ("integrable", "standard", "froeschle", "product")


def make_family(spec: dict) -> GeneratingFunction:
    """Build a generating function from ``{"family": name, "params": {...}}``."""
    name = spec.get("family")
    params = dict(spec.get("params", {}))
    if name == "integrable":
        return integrable(int(params.get("n", 1)))
    if name == "standard":
        return standard(float(params["eps"]))
    if name == "froeschle":
        return froeschle(float(params["eps1"]), float(params["eps2"]), float(params["mu"]))
    if name == "product":
        factors = params.get("factors")
        if not factors or len(factors) != 2:
            raise ValueError("product family needs exactly two factors")
        return product(make_family(factors[0]), make_family(factors[1]))
    raise ValueError(f"unknown map family {name!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# points and orbits


@dataclass(frozen=True)
class AnnulusPoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("annulus point has non-finite coordinates")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def mod1(self) -> "AnnulusPoint":
        return AnnulusPoint(np.mod(self.q, 1.0), self.p)


@dataclass
class OrbitSegment:
    """Finite orbit piece ``(q_i, p_i)`` in the universal cover.

    For a periodic orbit only one period is stored (N rows) and the
    transition out of the last point lands on ``q_0 + rho``.
    """

    q: np.ndarray
    p: np.ndarray
    periodic: bool = False
    rho: Optional[np.ndarray] = None
    center: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, float))
        self.p = np.atleast_2d(np.asarray(self.p, float))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have matching shapes")
        if self.periodic:
            self.rho = np.zeros(self.n) if self.rho is None else np.asarray(self.rho, float)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def __len__(self):
        return self.q.shape[0]

    @property
    def points(self) -> np.ndarray:
        return np.hstack([self.q, self.p])

    def point(self, i: int) -> AnnulusPoint:
        if self.periodic:
            N = len(self)
            shift, j = divmod(i, N)
            return AnnulusPoint(self.q[j] + shift * self.rho, self.p[j])
        return AnnulusPoint(self.q[i], self.p[i])

    def transitions(self):
        """Pairs ``(q_j, q_{j+1})`` for every step stored in the segment."""
        if self.periodic:
            nxt = np.vstack([self.q[1:], self.q[:1] + self.rho])
            return self.q, nxt
        return self.q[:-1], self.q[1:]


# ---------------------------------------------------------------------------
# map evaluation


def _newton(residual, jacobian, x0, scale, max_steps=100, tol=1e-12):
    x = np.array(x0, dtype=float)
    r = residual(x)
    rn = np.linalg.norm(r)
    for _ in range(max_steps):
        if rn <= tol * scale:
            return x
        step = np.linalg.solve(jacobian(x), r)
        t = 1.0
        while True:
            cand = x - t * step
            rc = residual(cand)
            rcn = np.linalg.norm(rc)
            if rcn < rn or t < 1e-10:
                break
            t *= 0.5
        if rcn >= rn and rn > tol * scale:
            raise SolveDiverged(f"damped Newton stalled at residual {rn:.3e}")
        x, r, rn = cand, rc, rcn
    if rn <= tol * scale:
        return x
    raise SolveDiverged(f"no convergence after {max_steps} Newton steps (residual {rn:.3e})")


def forward(S: GeneratingFunction, x: AnnulusPoint) -> AnnulusPoint:
    """Image ``F(q, p)`` by damped Newton on ``p + dS/dq(q, Q) = 0``."""
    q, p = x.q, x.p
    if isinstance(S, PotentialTwist):
        Q, P = S._forward(q, p)
        return AnnulusPoint(Q, P)
    Q = _newton(lambda Q: p + S.grad_q(q, Q), lambda Q: S.hess_qQ(q, Q),
                q + p / S.alpha, 1.0 + np.linalg.norm(p))
    return AnnulusPoint(Q, S.grad_Q(q, Q))


def backward(S: GeneratingFunction, x: AnnulusPoint) -> AnnulusPoint:
    """Preimage ``F^{-1}(Q, P)`` by damped Newton on ``dS/dQ(q, Q) = P``."""
    Q, P = x.q, x.p
    if isinstance(S, PotentialTwist):
        q, p = S._backward(Q, P)
        return AnnulusPoint(q, p)
    q = _newton(lambda q: S.grad_Q(q, Q) - P,
                lambda q: np.swapaxes(S.hess_qQ(q, Q), -1, -2),
                Q - P / S.alpha, 1.0 + np.linalg.norm(P))
    return AnnulusPoint(q, -S.grad_q(q, Q))


def iterate(S: GeneratingFunction, x: AnnulusPoint, steps: int) -> AnnulusPoint:
    step = forward if steps >= 0 else backward
    for _ in range(abs(steps)):
        x = step(S, x)
    return x


def orbit(S: GeneratingFunction, x: AnnulusPoint, steps: int) -> OrbitSegment:
    """Forward orbit ``x, F(x), ..., F^steps(x)``."""
    qs, ps = [x.q], [x.p]
    for _ in range(steps):
        x = forward(S, x)
        qs.append(x.q)
        ps.append(x.p)
    return OrbitSegment(np.array(qs), np.array(ps))


def tangent(S: GeneratingFunction, q, Q) -> np.ndarray:
    """Tangent map DF acting on ``(dq, dp)`` at the transition ``q -> Q``.

    With ``a = S_qq``, ``b = S_qQ``, ``c = S_QQ``::

        DF = [[-b^-1 a,          -b^-1  ],
              [ b^T - c b^-1 a,  -c b^-1]]

    Broadcasts over leading axes.
    """
    a, b, c = S.hess_qq(q, Q), S.hess_qQ(q, Q), S.hess_QQ(q, Q)
    n = a.shape[-1]
    if np.any(np.linalg.cond(b) > 1e12):
        raise TwistViolated("d2S/dqdQ is singular")
    binv = np.linalg.inv(b)
    top_left = -binv @ a
    top_right = -binv
    bottom_left = np.swapaxes(b, -1, -2) + c @ top_left
    bottom_right = c @ top_right
    out = np.empty(a.shape[:-2] + (2 * n, 2 * n))
    out[..., :n, :n] = top_left
    out[..., :n, n:] = top_right
    out[..., n:, :n] = bottom_left
    out[..., n:, n:] = bottom_right
    return out


def tangent_inverse(S: GeneratingFunction, q, Q) -> np.ndarray:
    """``DF^{-1}`` computed as ``-J0 DF^T J0`` (DF is symplectic)."""
    m = tangent(S, q, Q)
    n = m.shape[-1] // 2
    j0 = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return -j0 @ np.swapaxes(m, -1, -2) @ j0


@dataclass(frozen=True)
class TwistCheck:
    alpha_estimate: float
    witness: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return self.alpha_estimate > 0


def check_twist(S: GeneratingFunction, samples: int = 1000, rng=None, spread: float = 2.0) -> TwistCheck:
    """Empirical twist constant.

    Returns the minimum over random ``(q, Q)`` of the smallest eigenvalue of
    ``-(S_qQ + S_qQ^T) / 2``; a non-positive value comes with a witness
    ``(q, Q, v)`` where ``v`` is the offending eigenvector.
    """
    rng = np.random.default_rng(rng)
    q = rng.uniform(0.0, 1.0, size=(samples, S.n))
    Q = q + rng.uniform(-spread, spread, size=(samples, S.n))
    b = S.hess_qQ(q, Q)
    vals, vecs = np.linalg.eigh(-0.5 * (b + np.swapaxes(b, -1, -2)))
    lows = vals[:, 0]
    i = int(np.argmin(lows))
    alpha = float(lows[i])
    witness = None if alpha > 0 else (q[i], Q[i], vecs[i, :, 0])
    return TwistCheck(alpha, witness)
