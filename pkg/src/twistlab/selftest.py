"""Randomized generate-and-verify suites for the Lagrangian order and the band construction.

Instances are drawn with well-separated spectra (eigenvalues of positive
parts in [0.1, 10]) so that a failure at slack 1e-9 is a real failure,
not a conditioning accident.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symplectic import (C0, LagrangianFrame, Membership, _min_angle, band_slacks,
                         compare_under_vertical, cone_membership, form_matrix, pbilin_construct,
                         random_symplectic, sym)

# instances whose relevant pairs are closer than this (radians) are redrawn
MIN_ANGLE = 1e-3


def random_sym(rng, n, scale=1.0):
    return sym(rng.normal(scale=scale, size=(n, n)))


def random_pd(rng, n, lo=0.1, hi=10.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return sym(q @ np.diag(rng.uniform(lo, hi, n)) @ q.T)


def random_psd(rng, n, rank=None, lo=0.1, hi=10.0):
    rank = n if rank is None else rank
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    vals = np.zeros(n)
    vals[:rank] = rng.uniform(lo, hi, rank)
    return sym(q @ np.diag(vals) @ q.T)


def random_lagrangian(rng, n):
    """A Lagrangian frame in general position (image of a graph by a symplectic map)."""
    m = random_symplectic(n, rng, scale=0.7)
    return LagrangianFrame(m @ LagrangianFrame.from_graph(random_sym(rng, n)).columns)


def positive_cone_member(rng, l1: LagrangianFrame, l2: LagrangianFrame, pd=None) -> LagrangianFrame:
    """Random member of the positive cone of the transverse pair (l1, l2).

    With ``G = l1^T J0 l2`` the graph of ``v -> l2 G^-1 P`` over l1 has
    relative form P; P positive definite gives a cone member. A drawn P is
    rescaled so both summands of the spanning frame have comparable size.
    """
    n = l1.n
    a, b = l1.orthonormal(), l2.orthonormal()
    binv = b @ np.linalg.inv(a.T @ form_matrix(n) @ b)
    if pd is None:
        pd = random_pd(rng, n, 0.3, 3.0) / np.linalg.norm(binv, 2)
    cols = a + binv @ pd
    q, _ = np.linalg.qr(cols)
    return LagrangianFrame(q)


@dataclass
class SuiteResult:
    instances: int = 0
    failures: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)

    def fail(self, name, detail=None):
        self.failures.setdefault(name, []).append(detail)

    @property
    def ok(self) -> bool:
        return not any(self.failures.values())

    def summary(self) -> dict:
        return {"instances": self.instances,
                "failures": {k: len(v) for k, v in self.failures.items()},
                "worst": self.worst}


def _well_posed(*pairs) -> bool:
    return all(_min_angle(a.orthonormal(), b.orthonormal()) >= MIN_ANGLE for a, b in pairs)


def _draw(rng, make, attempts=100):
    for _ in range(attempts):
        out = make()
        if out is not None:
            return out
    raise RuntimeError("could not draw a well-conditioned instance")


def appendix_suite(rng, instances: int = 1000, dims=(1, 2, 3)) -> SuiteResult:
    """Symplectic invariance, cone absorption, interleaving, converse and transitivity.

    Frames that come within ``MIN_ANGLE`` of intersecting are redrawn, so
    every recorded failure is a failure of the order itself.
    """
    rng = np.random.default_rng(rng)
    out = SuiteResult()
    for name in ("invariance", "absorption", "interleaving", "converse",
                 "transitivity_strict", "transitivity_weak"):
        out.failures[name] = []
    for i in range(instances):
        n = dims[i % len(dims)]
        out.instances += 1
        # invariance of the positive cone under symplectic maps
        def inv_instance():
            l1, l2, l = (random_lagrangian(rng, n) for _ in range(3))
            m = random_symplectic(n, rng, scale=0.7)
            img = [x.transformed(m) for x in (l1, l2, l)]
            if _well_posed((l1, l2), (l, l2), (img[0], img[1]), (img[2], img[1])):
                return l1, l2, l, m
            return None

        l1, l2, l, m = _draw(rng, inv_instance)
        try:
            k0 = cone_membership(l1, l2, l).kind
            k1 = cone_membership(l1.transformed(m), l2.transformed(m), l.transformed(m)).kind
            if k0 != k1 and Membership.DEGENERATE not in (k0, k1):
                out.fail("invariance", i)
        except Exception as exc:  # transversality lost under the random map
            out.fail("invariance", repr(exc))
        # absorption: L in P(L1, L2) => P(L1, L) and P(L, L2) inside P(L1, L2)
        def abs_instance():
            l1, l2 = random_lagrangian(rng, n), random_lagrangian(rng, n)
            mid = positive_cone_member(rng, l1, l2)
            inner1 = positive_cone_member(rng, l1, mid)
            inner2 = positive_cone_member(rng, mid, l2)
            if _well_posed((l1, mid), (mid, l2), (inner1, l2), (inner2, l2)):
                return l1, l2, inner1, inner2
            return None

        l1, l2, inner1, inner2 = _draw(rng, abs_instance)
        for inner in (inner1, inner2):
            if cone_membership(l1, l2, inner).kind != Membership.IN_POSITIVE_CONE:
                out.fail("absorption", i)
        # interleaving: graphs W1 < W2 and L3 in P(L1, L2) => L1 < L3 < L2
        w1 = random_sym(rng, n)
        w2 = w1 + random_pd(rng, n)
        g1, g2 = LagrangianFrame.from_graph(w1), LagrangianFrame.from_graph(w2)
        vert = LagrangianFrame.vertical(n)
        l3 = _draw(rng, lambda: (lambda c: c if _well_posed((c, g2), (c, vert)) else None)(
            positive_cone_member(rng, g1, g2)))
        try:
            if not (compare_under_vertical(g1, l3).strict and compare_under_vertical(l3, g2).strict):
                out.fail("interleaving", i)
        except Exception as exc:
            out.fail("interleaving", repr(exc))
        # converse: W1 < W3 < W2 => L3 in P(L1, L2)
        w3 = w1 + random_pd(rng, n)
        w2b = w3 + random_pd(rng, n)
        if cone_membership(g1, LagrangianFrame.from_graph(w2b),
                           LagrangianFrame.from_graph(w3)).kind != Membership.IN_POSITIVE_CONE:
            out.fail("converse", i)
        # transitivity of < and <=
        a = random_sym(rng, n)
        b = a + random_pd(rng, n)
        c = b + random_pd(rng, n)
        fa, fb, fc = (LagrangianFrame.from_graph(x) for x in (a, b, c))
        if (compare_under_vertical(fa, fb).strict and compare_under_vertical(fb, fc).strict
                and not compare_under_vertical(fa, fc).strict):
            out.fail("transitivity_strict", i)
        rank = int(rng.integers(0, n + 1))
        b2 = a + random_psd(rng, n, rank)
        c2 = b2 + random_psd(rng, n, int(rng.integers(0, n + 1)))
        fb2, fc2 = LagrangianFrame.from_graph(b2), LagrangianFrame.from_graph(c2)
        if (compare_under_vertical(fa, fb2).under and compare_under_vertical(fb2, fc2).under
                and not compare_under_vertical(fa, fc2).under):
            out.fail("transitivity_weak", i)
    return out


def pbilin_instance(rng, d: int, mode: str):
    """One admissible ``(Q-, Q+, X, Y)``.

    ``mode="band"`` sets ``Y = sigma0 X`` for a sigma0 inside ``[Q-, Q+]``;
    ``mode="lens"`` draws the normalized ``Y`` uniformly from the lens
    ``(y1 + 1)^2 + |y'|^2 <= 1, |y|^2 <= 1`` where both hypotheses hold
    exactly, then maps it back.
    """
    rank = d if rng.random() < 0.7 else int(rng.integers(0, d + 1))
    q_minus = random_sym(rng, d)
    basis, _ = np.linalg.qr(rng.normal(size=(d, d)))
    factor = basis[:, :rank] * np.sqrt(rng.uniform(0.1, 10.0, rank))
    dq = factor @ factor.T
    q_plus = q_minus + dq
    x = rng.normal(size=d)
    if mode == "band":
        # factor C factor^T sits between 0 and dQ when 0 <= C <= I
        c = random_psd(rng, rank, lo=0.0, hi=1.0)
        sigma0 = q_minus + factor @ c @ factor.T
        return q_minus, q_plus, x, sigma0 @ x
    vals, vecs = np.linalg.eigh(dq)
    keep = vals > 1e-10 * max(vals.max(), 1e-300)
    vals, u = vals[keep], vecs[:, keep]
    if vals.size == 0:
        return q_minus, q_plus, x, q_plus @ x
    root = np.sqrt(vals)
    xr = root * (u.T @ x)
    mu = np.linalg.norm(xr)
    r = vals.size
    while True:
        yhat = rng.uniform(-2.0, 1.0, size=r)
        yhat[1:] = rng.uniform(-1.0, 1.0, size=r - 1)
        if (yhat[0] + 1) ** 2 + np.sum(yhat[1:] ** 2) <= 1.0 and yhat @ yhat <= 1.0:
            break
    e1 = np.zeros(r)
    e1[0] = 1.0
    w = xr / mu - e1
    rot = np.eye(r) if np.linalg.norm(w) < 1e-15 else np.eye(r) - 2 * np.outer(w, w) / (w @ w)
    yr = mu * rot.T @ yhat
    return q_minus, q_plus, x, q_plus @ x + u @ (root * yr)


def pbilin_suite(rng, instances: int = 1000, dims=range(1, 7)) -> SuiteResult:
    rng = np.random.default_rng(rng)
    dims = list(dims)
    out = SuiteResult()
    out.failures = {"band": [], "residual": [], "raised": []}
    worst_band, worst_res = np.inf, 0.0
    for i in range(instances):
        d = dims[i % len(dims)]
        mode = "band" if i % 2 == 0 else "lens"
        qm, qp, x, y = pbilin_instance(rng, d, mode)
        out.instances += 1
        try:
            sigma = pbilin_construct(qm, qp, x, y)
        except Exception as exc:
            out.fail("raised", (i, repr(exc)))
            continue
        lo, hi = band_slacks(sigma, qm, qp)
        res = float(np.linalg.norm(sigma @ x - y))
        worst_band = min(worst_band, lo, hi)
        worst_res = max(worst_res, res)
        if min(lo, hi) < -1e-9:
            out.fail("band", i)
        if res > 1e-10:
            out.fail("residual", i)
    out.worst = {"min_band_eigenvalue": float(worst_band), "max_residual": worst_res,
                 "c0_identity": float(0.75 * C0 ** 2 + 1.25 * C0 - 9 / 16)}
    return out
