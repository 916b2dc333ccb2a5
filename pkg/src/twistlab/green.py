"""Green bundles, Lyapunov spectra and the two exponent theorems.

Green bundles along a minimizing orbit are the limits of the images of
the vertical, ``G_k(x) = DF^k V(F^-k x)`` as ``k -> +inf`` (giving G+)
and ``k -> -inf`` (giving G-).  All subspaces met here are graphs over
the horizontal, so they are stored as symmetric slope matrices and
pushed by the linear-fractional action ``W -> (C + D W)(A + B W)^-1``
of ``DF = [[A, B], [C, D]]``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import orth, subspace_angles

from .errors import (ConjugatePoint, MonotonicityViolation, NotConverged,
                     ReductionIllConditioned, SkippedAllZero)
from .maps import AnnulusPoint, GeneratingFunction, OrbitSegment, tangent
from .symplectic import (LagrangianFrame, compare_under_vertical, form_matrix, sym,
                         symplectic_reduce, transverse)

MONO_SLACK = 1e-10
COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# cocycle along an orbit


class Cocycle:
    """Tangent matrices ``DF(x_j)`` along an orbit segment.

    Indices are relative to the stored array; periodic orbits wrap.
    """

    def __init__(self, S: GeneratingFunction, orbit: OrbitSegment):
        self.S = S
        self.orbit = orbit
        q, Q = orbit.transitions()
        self.mats = tangent(S, q, Q)
        n = S.n
        j0 = form_matrix(n)
        self.inv = -j0 @ np.swapaxes(self.mats, -1, -2) @ j0
        self.periodic = orbit.periodic
        self.n = n

    def __len__(self):
        return len(self.mats)

    def at(self, j: int) -> np.ndarray:
        if self.periodic:
            return self.mats[j % len(self.mats)]
        if not 0 <= j < len(self.mats):
            raise IndexError("orbit segment too short for the requested iterate")
        return self.mats[j]

    def inv_at(self, j: int) -> np.ndarray:
        if self.periodic:
            return self.inv[j % len(self.inv)]
        if not 0 <= j < len(self.inv):
            raise IndexError("orbit segment too short for the requested iterate")
        return self.inv[j]

    def power(self, start: int, k: int) -> np.ndarray:
        """``DF^k`` at ``x_start`` (k may be negative)."""
        out = np.eye(2 * self.n)
        if k >= 0:
            for j in range(start, start + k):
                out = self.at(j) @ out
        else:
            for j in range(start - 1, start + k - 1, -1):
                out = self.inv_at(j) @ out
        return out


def _check_transverse(den: np.ndarray) -> None:
    # Hadamard ratio |det| / prod(column norms) is 0 exactly for singular blocks
    det = np.abs(np.linalg.det(den))
    scale = np.prod(np.linalg.norm(den, axis=-2), axis=-1)
    if np.any(det <= 1e-12 * scale):
        raise ConjugatePoint("image of the vertical is not transverse to the vertical")


def push_slopes(mats: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched linear-fractional action of symplectic matrices on graph slopes."""
    n = w.shape[-1]
    a, b = mats[..., :n, :n], mats[..., :n, n:]
    c, d = mats[..., n:, :n], mats[..., n:, n:]
    den = a + b @ w
    _check_transverse(den)
    out = np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(c + d @ w, -1, -2))
    out = np.swapaxes(out, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _frame_slopes(mats: np.ndarray, k: int) -> np.ndarray:
    """Slope of ``M_k ... M_1 V`` by QR-renormalized frames (fallback path)."""
    n = mats.shape[-1] // 2
    frame = np.vstack([np.zeros((n, n)), np.eye(n)])
    for m in mats[:k]:
        frame, _ = np.linalg.qr(m @ frame)
    x, y = frame[:n], frame[n:]
    if np.linalg.cond(x) > COND_LIMIT:
        raise ConjugatePoint("image of the vertical is not transverse to the vertical")
    return sym(y @ np.linalg.inv(x))


def _is_decreasing(prev, new, slack=MONO_SLACK) -> bool:
    diff = prev - new
    scale = 1.0 + np.abs(prev).max()
    return bool(np.linalg.eigvalsh(sym(diff)).min() >= -slack * scale)


@dataclass
class GreenIterates:
    """Slopes ``s_k`` (images of past verticals) and ``s_-k`` at one base point."""

    forward: list
    backward: list


def green_iterates(S: GeneratingFunction, orbit: OrbitSegment, k_max: int,
                   center: Optional[int] = None) -> GreenIterates:
    """The sequences ``s_k`` and ``s_-k``, ``k = 1..k_max``, at ``x_center``.

    Strict monotonicity ``s_{k+1} < s_k`` and ``s_-k < s_-(k+1)`` is checked
    with eigenvalue slack 1e-10; on failure the iterates are recomputed
    once with QR-renormalized frames before MonotonicityViolation is raised.
    """
    cyc = Cocycle(S, orbit)
    c = orbit.center if center is None else center
    if not orbit.periodic and (c - k_max < 0 or c + k_max > len(cyc)):
        raise ValueError("orbit segment must contain k_max points on both sides of the center")
    fwd, bwd = [], []
    if orbit.periodic:
        w_f = _cyclic(cyc, c, k_max, forward=True)
        w_b = _cyclic(cyc, c, k_max, forward=False)
    else:
        w_f = _recursive(cyc, c, k_max, forward=True)
        w_b = _recursive(cyc, c, k_max, forward=False)
    for seq, out, forward in ((w_f, fwd, True), (w_b, bwd, False)):
        ok = all(_is_decreasing(seq[i], seq[i + 1]) if forward else
                 _is_decreasing(seq[i + 1], seq[i]) for i in range(len(seq) - 1))
        if not ok:
            seq = _frame_sequence(cyc, c, k_max, forward)
            ok = all(_is_decreasing(seq[i], seq[i + 1]) if forward else
                     _is_decreasing(seq[i + 1], seq[i]) for i in range(len(seq) - 1))
            if not ok:
                raise MonotonicityViolation("Green iterates are not monotone")
        out.extend(seq)
    return GreenIterates(fwd, bwd)


def _recursive(cyc: Cocycle, c: int, k_max: int, forward: bool) -> list:
    """``s_{+-k}(x_c)`` for k = 1..k_max via slopes pushed along shrinking windows."""
    if forward:
        # window of base indices c-k_max+1 .. c ; w[j] = s_k(x_j)
        idx = np.arange(c - k_max + 1, c + 1)
        mats_prev = np.array([cyc.at(j - 1) for j in idx])
        w = _first_slope(mats_prev)
        seq = [w[-1]]
        for k in range(2, k_max + 1):
            # s_k(x_j) = DF(x_{j-1}) s_{k-1}(x_{j-1})
            w = push_slopes(mats_prev[1:], w[:-1])
            mats_prev = mats_prev[1:]
            seq.append(w[-1])
    else:
        idx = np.arange(c, c + k_max)
        mats_inv = np.array([cyc.inv_at(j) for j in idx])
        w = _first_slope(mats_inv)
        seq = [w[0]]
        for k in range(2, k_max + 1):
            # s_-k(x_j) = DF(x_j)^-1 s_-(k-1)(x_{j+1})
            w = push_slopes(mats_inv[:-1], w[1:])
            mats_inv = mats_inv[:-1]
            seq.append(w[0])
    return seq


def _cyclic(cyc: Cocycle, c: int, k_max: int, forward: bool) -> list:
    """Same as :func:`_recursive` for a periodic orbit, O(k_max * period)."""
    N = len(cyc)
    if forward:
        w = _first_slope(np.roll(cyc.mats, 1, axis=0))
    else:
        w = _first_slope(cyc.inv)
    seq = [w[c % N]]
    for _ in range(2, k_max + 1):
        if forward:
            w = np.roll(push_slopes(cyc.mats, w), 1, axis=0)
        else:
            w = push_slopes(cyc.inv, np.roll(w, -1, axis=0))
        seq.append(w[c % N])
    return seq


def _first_slope(mats):
    n = mats.shape[-1] // 2
    b, d = mats[..., :n, n:], mats[..., n:, n:]
    _check_transverse(b)
    return sym(d @ np.linalg.inv(b))


def _frame_sequence(cyc, c, k_max, forward):
    seq = []
    for k in range(1, k_max + 1):
        if forward:
            mats = np.array([cyc.at(j) for j in range(c - k, c)])
        else:
            mats = np.array([cyc.inv_at(j) for j in range(c + k - 1, c - 1, -1)])
        seq.append(_frame_slopes(mats, k))
    return seq


# ---------------------------------------------------------------------------
# Green bundles


@dataclass
class GreenData:
    base: AnnulusPoint
    s_minus: np.ndarray
    s_plus: np.ndarray
    delta_s: np.ndarray
    p_dim: int
    q_plus_val: Optional[float]
    k_used: int
    extrapolated: bool = False
    last_increment: float = 0.0
    cutoff: float = 0.0

    def frames(self):
        return LagrangianFrame.from_graph(self.s_minus), LagrangianFrame.from_graph(self.s_plus)

    def as_row(self) -> dict:
        return {"q": self.base.q.tolist(), "p": self.base.p.tolist(),
                "s_minus": self.s_minus.tolist(), "s_plus": self.s_plus.tolist(),
                "p_dim": self.p_dim, "q_plus": self.q_plus_val, "k_used": self.k_used,
                "extrapolated": self.extrapolated}


def _gap_stats(s_minus, s_plus, tol):
    delta = sym(s_plus - s_minus)
    eig = np.linalg.eigvalsh(delta)
    cutoff = max(10.0 * tol, 1e-8) * (1.0 + np.abs(eig).max())
    p_dim = int(np.sum(eig <= cutoff))
    above = eig[eig > cutoff]
    q_plus = float(above.min()) if above.size else None
    return delta, p_dim, q_plus, cutoff


def _limits_periodic(cyc: Cocycle, tol: float, k_max: int, extrapolate: bool):
    """Green slopes at every point of a periodic orbit.

    Returns, per direction, ``(limit, k, increment, extrapolated)``.  With
    ``extrapolate`` the Richardson estimates ``2 s_k - s_{k/2}`` taken at
    powers of two are also watched; two consecutive estimates within
    ``tol`` end the iteration.
    """
    mats, inv = cyc.mats, cyc.inv
    out = {}
    for forward in (True, False):
        w = _first_slope(np.roll(mats, 1, axis=0) if forward else inv)
        snaps = {1: w}
        prev_est = None
        inc, k, result = np.inf, 1, None
        while k < k_max:
            if forward:
                new = np.roll(push_slopes(mats, w), 1, axis=0)
                ok = _is_decreasing(w, new)
            else:
                new = push_slopes(inv, np.roll(w, -1, axis=0))
                ok = _is_decreasing(new, w)
            if not ok:
                raise MonotonicityViolation("Green iterates lost monotonicity")
            inc = float(np.abs(new - w).max())
            w = new
            k += 1
            if inc <= tol:
                result = (w, k, inc, False)
                break
            if extrapolate and k & (k - 1) == 0:
                snaps[k] = w
                est = 2.0 * w - snaps[k // 2]
                if prev_est is not None and np.abs(est - prev_est).max() <= tol:
                    result = (est, k, float(np.abs(est - prev_est).max()), True)
                    break
                prev_est = est
        if result is None:
            if not extrapolate:
                raise NotConverged(f"Green iterates still move by {inc:.3e} after {k} steps",
                                   last_increment=inc)
            kk = max(snaps)
            est = 2.0 * snaps[kk] - snaps[kk // 2] if kk > 1 else w
            result = (est, k, inc, True)
        out[forward] = result
    return out


def green_bundles_all(S: GeneratingFunction, orbit: OrbitSegment, tol: float = 1e-10,
                      k_max: int = 20_000, extrapolate: bool = False) -> list:
    """GreenData at every point of a periodic orbit.

    Convergence is declared when the sup-norm increment of both slope
    sequences drops below ``tol``.  With ``extrapolate=True`` sequences
    still moving at ``k_max`` are replaced by ``2 s_k - s_{k/2}``, the
    two-term fit of ``s_k = s + c/k`` (parabolic directions).
    """
    if not orbit.periodic:
        raise ValueError("green_bundles_all needs a periodic orbit")
    cyc = Cocycle(S, orbit)
    lim = _limits_periodic(cyc, tol, k_max, extrapolate)
    flagged = lim[True][3] or lim[False][3]
    data = []
    for j in range(len(orbit)):
        s_plus, s_minus = lim[True][0][j], lim[False][0][j]
        delta, p_dim, q_plus, cutoff = _gap_stats(s_minus, s_plus, tol)
        data.append(GreenData(orbit.point(j), s_minus, s_plus, delta, p_dim, q_plus,
                              max(lim[True][1], lim[False][1]), flagged,
                              max(lim[True][2], lim[False][2]), cutoff))
    return data


def green_bundles(S: GeneratingFunction, orbit: OrbitSegment, tol: float = 1e-10,
                  k_max: int = 20_000, extrapolate: bool = False,
                  center: Optional[int] = None) -> GreenData:
    """Green bundles at one orbit point (``orbit.center`` by default)."""
    if orbit.periodic:
        c = orbit.center if center is None else center
        return green_bundles_all(S, orbit, tol, k_max, extrapolate)[c % len(orbit)]
    c = orbit.center if center is None else center
    k_avail = min(c, len(orbit) - 1 - c, k_max)
    its = green_iterates(S, orbit, k_avail, c)
    flagged = False
    seqs = {}
    for name, seq in (("plus", its.forward), ("minus", its.backward)):
        inc = float(np.abs(seq[-1] - seq[-2]).max()) if len(seq) > 1 else np.inf
        k_stop = len(seq)
        for i in range(1, len(seq)):
            if np.abs(seq[i] - seq[i - 1]).max() <= tol:
                k_stop, inc = i + 1, float(np.abs(seq[i] - seq[i - 1]).max())
                break
        lim = seq[k_stop - 1]
        if inc > tol:
            if not extrapolate or len(seq) < 4:
                raise NotConverged(f"Green iterates still move by {inc:.3e}", last_increment=inc)
            lim = 2.0 * seq[-1] - seq[len(seq) // 2 - 1]
            flagged = True
        seqs[name] = (lim, k_stop, inc)
    delta, p_dim, q_plus, cutoff = _gap_stats(seqs["minus"][0], seqs["plus"][0], tol)
    return GreenData(orbit.point(c), seqs["minus"][0], seqs["plus"][0], delta, p_dim, q_plus,
                     max(seqs["plus"][1], seqs["minus"][1]), flagged,
                     max(seqs["plus"][2], seqs["minus"][2]), cutoff)


def invariance_defect(S: GeneratingFunction, orbit: OrbitSegment, data: Sequence[GreenData]) -> float:
    """Largest ``|DF . G(x_j) - G(x_{j+1})|`` (slope sup-norm) over a periodic orbit."""
    cyc = Cocycle(S, orbit)
    splus = np.array([g.s_plus for g in data])
    sminus = np.array([g.s_minus for g in data])
    worst = 0.0
    for s in (splus, sminus):
        img = push_slopes(cyc.mats, s)
        worst = max(worst, float(np.abs(img - np.roll(s, -1, axis=0)).max()))
    return worst


def _distance_to(v: np.ndarray, frame: np.ndarray) -> float:
    basis = orth(frame)
    v = v / np.linalg.norm(v)
    return float(np.linalg.norm(v - basis @ (basis.T @ v)))


@dataclass
class CriterionResult:
    bounded_forward: bool
    bounded_backward: bool
    growth_forward: float
    growth_backward: float
    distance_to_minus: Optional[float]
    distance_to_plus: Optional[float]
    subexponential: bool


def dynamical_criterion_check(S: GeneratingFunction, orbit: OrbitSegment, v, horizon: int = 20,
                              center: Optional[int] = None, green: Optional[GreenData] = None,
                              growth_cap: float = 1e3, tol: float = 1e-10) -> CriterionResult:
    """Boundedness of ``D(pi o F^k) v`` forward and backward up to ``horizon``.

    Directions with bounded forward projections are expected in G- and
    those with bounded backward projections in G+; the distances to the
    bundles are reported for those cases.
    """
    v = np.asarray(v, float)
    cyc = Cocycle(S, orbit)
    c = orbit.center if center is None else center
    n = S.n
    norm0 = np.linalg.norm(v)
    grow = {}
    for sign in (1, -1):
        w = v.copy()
        peak = 0.0
        for k in range(1, horizon + 1):
            j = c + k - 1 if sign > 0 else c - k
            w = (cyc.at(j) if sign > 0 else cyc.inv_at(j)) @ w
            peak = max(peak, np.linalg.norm(w[:n]) / norm0)
        grow[sign] = peak
    if green is None:
        green = green_bundles(S, orbit, tol=tol, center=c, extrapolate=True)
    gm, gp = green.frames()
    bf, bb = grow[1] <= growth_cap, grow[-1] <= growth_cap
    rate = max(np.log(max(grow[1], 1e-300)), np.log(max(grow[-1], 1e-300))) / horizon
    return CriterionResult(bf, bb, grow[1], grow[-1],
                           _distance_to(v, gm.columns) if bf else None,
                           _distance_to(v, gp.columns) if bb else None,
                           bool(rate < 0.05))


# ---------------------------------------------------------------------------
# Lyapunov spectrum


@dataclass
class SpectrumReport:
    exponents: np.ndarray
    zero_count: int
    pos_count: int
    neg_count: int
    pairing_defect: float
    threshold: float
    steps: int

    def as_dict(self) -> dict:
        return {"exponents": self.exponents.tolist(), "zero_count": self.zero_count,
                "pos_count": self.pos_count, "neg_count": self.neg_count,
                "pairing_defect": self.pairing_defect, "threshold": self.threshold,
                "steps": self.steps}


def lyapunov_spectrum(S: GeneratingFunction, orbit: OrbitSegment, N: int,
                      threshold: Optional[float] = None, warmup: Optional[int] = None) -> SpectrumReport:
    """Lyapunov exponents by QR re-orthonormalization of the tangent cocycle.

    A warm-up of ``warmup`` steps (default ``min(N, 1000)``; only what the
    segment allows for non-periodic orbits) aligns the frame before the
    ``N`` accumulated steps.  Periodic orbits are cycled.  The zero
    threshold defaults to ``max(10/N, 1e-3) * (1 + max|lambda|)``.
    """
    cyc = Cocycle(S, orbit)
    dim = 2 * S.n
    if warmup is None:
        warmup = min(N, 1000)
    if not orbit.periodic:
        if len(cyc) < N:
            raise ValueError("orbit segment shorter than N")
        warmup = min(warmup, len(cyc) - N)
    q = np.eye(dim)
    sums = np.zeros(dim)
    block = 1
    j = 0
    total = warmup + N
    while j < total:
        # re-orthonormalize every `block` steps, never straddling the warm-up end
        stop = min(j + block, total, warmup if j < warmup else total)
        m = q
        for i in range(j, stop):
            m = cyc.at(i) @ m
        q, r = np.linalg.qr(m)
        d = np.diag(r)
        q = q * np.where(d < 0, -1.0, 1.0)
        logs = np.log(np.abs(d))
        if j >= warmup:
            sums += logs
        spread = float(logs.max() - logs.min())
        if spread > 20.0 and block > 1:
            block //= 2
        elif spread < 5.0 * (stop - j) / max(block, 1) and block < 32:
            block *= 2
        j = stop
    lam = np.sort(sums / N)[::-1]
    if threshold is None:
        threshold = max(10.0 / N, 1e-3) * (1.0 + np.abs(lam).max())
    zero = int(np.sum(np.abs(lam) <= threshold))
    pos = int(np.sum(lam > threshold))
    neg = int(np.sum(lam < -threshold))
    pairing = float(np.abs(lam + lam[::-1]).max())
    return SpectrumReport(lam, zero, pos, neg, pairing, float(threshold), N)


# ---------------------------------------------------------------------------
# theorem harnesses


def c_constant(S: GeneratingFunction, orbit: OrbitSegment) -> float:
    """``max |S_1 - S_-1|`` over the orbit.

    ``S_1(x_j)``, the slope of ``DF V(x_{j-1})``, is ``S_QQ(q_{j-1}, q_j)``
    and ``S_-1(x_j)``, the slope of ``DF^-1 V(x_{j+1})``, is
    ``-S_qq(q_j, q_{j+1})``.
    """
    cyc = Cocycle(S, orbit)
    if orbit.periodic:
        prev = np.roll(cyc.mats, 1, axis=0)
        inv = cyc.inv
    else:
        prev, inv = cyc.mats[:-1], cyc.inv[1:]
    s1 = _first_slope(prev)
    sm1 = _first_slope(inv)
    return float(np.max(np.linalg.norm(s1 - sm1, ord=2, axis=(-2, -1))))


@dataclass
class TheoremReport:
    passed: bool
    data: dict = field(default_factory=dict)


def _modal_p(green: Sequence[GreenData]) -> int:
    return Counter(g.p_dim for g in green).most_common(1)[0][0]


def verify_thm1(S: GeneratingFunction, orbit: OrbitSegment, N: int = 10_000, tol: float = 1e-10,
                threshold: Optional[float] = None, k_max: int = 20_000) -> TheoremReport:
    """Zero exponents come in number ``2p``, with p the Green intersection dimension."""
    green = green_bundles_all(S, orbit, tol=tol, k_max=k_max, extrapolate=True)
    p = _modal_p(green)
    spec = lyapunov_spectrum(S, orbit, N, threshold=threshold)
    n = S.n
    ok = spec.zero_count == 2 * p and spec.pos_count == n - p and spec.neg_count == n - p
    ok = ok and spec.pairing_defect <= 5 * spec.threshold
    return TheoremReport(bool(ok), {"p": p, "spectrum": spec, "green": green,
                                    "expected": (n - p, 2 * p, n - p)})


def verify_thm2(S: GeneratingFunction, orbit: OrbitSegment, N: int = 10_000, tol: float = 1e-6,
                green_tol: float = 1e-12, k_max: int = 20_000,
                threshold: Optional[float] = None) -> TheoremReport:
    """Smallest positive exponent against ``(1/2) avg log(1 + q+(dS)/C)``.

    The orbit average replaces the integral over the invariant measure.
    C is estimated on the orbit, so it can only underestimate the true
    supremum; that weakens the bound in the safe direction.
    """
    spec = lyapunov_spectrum(S, orbit, N, threshold=threshold)
    positive = spec.exponents[spec.exponents > spec.threshold]
    if positive.size == 0:
        raise SkippedAllZero("no positive Lyapunov exponent")
    lam = float(positive.min())
    green = green_bundles_all(S, orbit, tol=green_tol, k_max=k_max, extrapolate=True)
    C = c_constant(S, orbit)
    terms = [0.5 * np.log1p((g.q_plus_val or 0.0) / C) for g in green]
    bound = float(np.mean(terms))
    slack = lam - bound
    return TheoremReport(bool(slack >= -tol and bound >= 0.0),
                         {"lambda": lam, "C": C, "bound": bound, "slack": slack,
                          "spectrum": spec, "green": green})


# ---------------------------------------------------------------------------
# reduced Green bundles


@dataclass
class ReducedDiagnostics:
    passed: bool
    degenerate: bool
    transverse_ok: bool = True
    order_ok: bool = True
    limits_ok: bool = True
    limit_distance: float = 0.0
    failures: list = field(default_factory=list)
    reduced_dim: int = 0


def _reduction_at(g: GreenData, tol: float):
    """Symplectic reduction of ``E = G- + G+`` by ``R = G- cap G+``."""
    n = g.s_minus.shape[0]
    eig, vecs = np.linalg.eigh(g.delta_s)
    cut = g.cutoff if g.cutoff else max(10 * tol, 1e-8) * (1 + np.abs(eig).max())
    near = (eig > cut / 10) & (eig < cut * 10)
    if np.any(near):
        raise ReductionIllConditioned("Green gap eigenvalues cluster around the rank cutoff")
    ker = vecs[:, eig <= cut]
    rng_ = vecs[:, eig > cut]
    r_frame = np.vstack([ker, g.s_minus @ ker])
    # E = {(a, s_- a + d): d in range(dS)}
    e_frame = np.hstack([np.vstack([np.eye(n), g.s_minus]),
                         np.vstack([np.zeros((n, rng_.shape[1])), rng_])])
    space = symplectic_reduce(e_frame, r_frame, tol=1e-8)
    vert = np.vstack([np.zeros((n, rng_.shape[1])), rng_])  # V cap E
    return space, vert


def reduced_green_diagnostics(S: GeneratingFunction, orbit: OrbitSegment,
                              green: Sequence[GreenData], tol: float = 1e-8,
                              k_check: int = 10, k_limit: int = 400) -> ReducedDiagnostics:
    """Checks on the reduced Green bundles along a periodic orbit.

    At ``x_0`` the reduced images ``g_k = M^k v(F^-k x)`` of the vertical
    traces are formed for ``|k| <= k_check`` and verified to be transverse
    to ``v(x)`` and strictly ordered ``g_-m < g_-k < p(G-) < p(G+) < g_k < g_m``
    (``0 < m < k``) relative to ``v(x)``; for ``|k| = k_limit`` they are
    compared with ``p(G+-)`` (sine of the largest principal angle
    <= ``10 * tol``).
    """
    if not orbit.periodic:
        raise ValueError("reduced diagnostics are implemented for periodic orbits")
    Np = len(orbit)
    if len(green) != Np:
        raise ValueError("need GreenData at every orbit point")
    if all(g.p_dim == 0 for g in green):
        return ReducedDiagnostics(True, False, reduced_dim=2 * S.n,
                                  failures=["p = 0: reduction is the identity"])
    if all(g.p_dim == S.n for g in green):
        return ReducedDiagnostics(True, True, reduced_dim=0,
                                  failures=["p = n: reduced space is zero-dimensional"])
    cyc = Cocycle(S, orbit)
    red = [_reduction_at(g, tol) for g in green]
    # reduced cocycle M_j : F(x_j) -> F(x_{j+1}) and its inverse
    fwd = [red[(j + 1) % Np][0].project(cyc.mats[j] @ red[j][0].basis) for j in range(Np)]
    bwd = [red[j][0].project(cyc.inv[j] @ red[(j + 1) % Np][0].basis) for j in range(Np)]
    verts = [sp.project(v) for sp, v in red]
    space0 = red[0][0]
    v0 = LagrangianFrame(verts[0], check=False)
    gm = LagrangianFrame(space0.reduce_lagrangian(green[0].frames()[0]), check=False)
    gp = LagrangianFrame(space0.reduce_lagrangian(green[0].frames()[1]), check=False)

    def image(k):
        # g_k(x_0) for k > 0: push v(x_{-k}) forward k steps; k < 0 symmetric
        if k > 0:
            frame = verts[(-k) % Np]
            for j in range(-k, 0):
                frame = fwd[j % Np] @ frame
        else:
            frame = verts[(-k) % Np]
            for j in range(-k - 1, -1, -1):
                frame = bwd[j % Np] @ frame
        frame, _ = np.linalg.qr(frame)
        return LagrangianFrame(frame, check=False)

    out = ReducedDiagnostics(True, False, reduced_dim=space0.reduced_dim)
    imgs = {k: image(k) for k in list(range(1, k_check + 1)) + list(range(-k_check, 0))}
    for k, fr in imgs.items():
        if not transverse(fr, v0):
            out.transverse_ok = False
            out.failures.append(f"g_{k} meets the reduced vertical")

    def under(a, b, strict=True):
        res = compare_under_vertical(a, b, vertical=v0)
        return res.strict if strict else res.under

    if out.transverse_ok:
        for k in range(2, k_check + 1):
            for m in range(1, k):
                # 0 < m < k: g_-m < g_-k and g_k < g_m
                if not under(imgs[-m], imgs[-k]):
                    out.order_ok = False
                    out.failures.append(f"g_-{m} < g_-{k} fails")
                if not under(imgs[k], imgs[m]):
                    out.order_ok = False
                    out.failures.append(f"g_{k} < g_{m} fails")
        for m in range(1, k_check + 1):
            if not under(imgs[-m], gm):
                out.order_ok = False
                out.failures.append(f"g_-{m} < p(G-) fails")
            if not under(gp, imgs[m]):
                out.order_ok = False
                out.failures.append(f"p(G+) < g_{m} fails")
        if not under(gm, gp):
            out.order_ok = False
            out.failures.append("p(G-) < p(G+) fails")
    far_p, far_m = image(k_limit), image(-k_limit)
    dist = max(float(np.sin(subspace_angles(far_p.columns, gp.columns).max())),
               float(np.sin(subspace_angles(far_m.columns, gm.columns).max())))
    out.limit_distance = dist
    out.limits_ok = dist <= 10 * tol
    if not out.limits_ok:
        out.failures.append(f"reduced limits off by {dist:.3e}")
    out.passed = out.transverse_ok and out.order_ok and out.limits_ok
    return out
