"""Tangent cones of sampled invariant sets and their position between Green bundles.

Cone directions are estimated from finite samples: normalized differences
``(s - a) / |s - a|`` collected on dyadic shells ``[r/2, r]`` with
``r = r0 2^-j``, grouped by greedy angular clustering.  Only clusters that
are realized by at least three sample pairs and that reach the finest
populated shells are kept.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import InsufficientSamples
from .green import GreenData
from .maps import AnnulusPoint, GeneratingFunction, backward, forward
from .symplectic import (C0, SymplecticSpace, band_slacks, between_margin, form_matrix,
                         pbilin_construct, pbilin_hypotheses, sym)
from .variational import mane_potential
from .weak_kam import WeakKamReport

CLUSTER_DEG = 5.0
LEVELS = 9
MIN_MEMBERS = 3
FINE_LEVELS = 3


@dataclass
class ConeSample:
    base: np.ndarray
    directions: np.ndarray
    radius_schedule: np.ndarray
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.directions)

    def rows(self):
        """CSV-ready rows: base components, direction components, cluster weight."""
        return [list(self.base) + list(d) + [int(w)] for d, w in zip(self.directions, self.weights)]


def _cluster(dirs: np.ndarray, levels: np.ndarray, dists: np.ndarray, deg: float = CLUSTER_DEG):
    """Greedy angular clustering; members ordered from the smallest distance."""
    cos_tol = np.cos(np.deg2rad(deg))
    order = np.argsort(dists)
    reps, members = [], []
    for i in order:
        d = dirs[i]
        for c, r in enumerate(reps):
            if d @ r >= cos_tol:
                members[c].append(i)
                break
        else:
            reps.append(d)
            members.append([i])
    return reps, members


def _periodic_copies(samples: np.ndarray, n: int) -> np.ndarray:
    """Samples with q reduced mod 1 together with their +-1 translates in q."""
    base = samples.copy()
    base[:, :n] = np.mod(base[:, :n], 1.0)
    out = []
    for k in itertools.product((-1, 0, 1), repeat=n):
        shifted = base.copy()
        shifted[:, :n] += np.array(k, float)
        out.append(shifted)
    return np.vstack(out)


def _as_vector(a) -> np.ndarray:
    return a.vector if isinstance(a, AnnulusPoint) else np.asarray(a, float)


def default_radius(samples: np.ndarray) -> float:
    span = samples.max(axis=0) - samples.min(axis=0)
    return 0.1 * float(np.linalg.norm(span))


def _raw_directions(samples, a, r0, levels):
    diffs = samples - a
    dist = np.linalg.norm(diffs, axis=1)
    keep = dist > 1e-14 * max(1.0, np.abs(a).max())
    diffs, dist = diffs[keep], dist[keep]
    radii = r0 * 2.0 ** -np.arange(levels)
    dirs, lev, dd = [], [], []
    for j, r in enumerate(radii):
        mask = (dist >= r / 2) & (dist <= r)
        if np.any(mask):
            dirs.append(diffs[mask] / dist[mask, None])
            lev.append(np.full(mask.sum(), j))
            dd.append(dist[mask])
    if not dirs:
        return np.zeros((0, len(a))), np.zeros(0, int), np.zeros(0), radii
    return np.vstack(dirs), np.concatenate(lev), np.concatenate(dd), radii


def _select(dirs, lev, dist, min_members, fine_levels, deg):
    if len(dirs) == 0:
        return np.zeros((0, dirs.shape[1])), np.zeros(0, int)
    reps, members = _cluster(dirs, lev, dist, deg)
    populated = np.unique(lev)
    finest = set(populated[-fine_levels:].tolist())
    out, weights = [], []
    for rep, mem in zip(reps, members):
        if len(mem) < min_members:
            continue
        if not finest.intersection(lev[mem].tolist()):
            continue
        # representative: the member realized closest to the base point
        out.append(dirs[mem[0]])
        weights.append(len(mem))
    if not out:
        return np.zeros((0, dirs.shape[1])), np.zeros(0, int)
    return np.array(out), np.array(weights)


def contingent_cone(samples, a, radii: Optional[float] = None, levels: int = LEVELS,
                    min_members: int = MIN_MEMBERS, cluster_deg: float = CLUSTER_DEG,
                    fine_levels: int = FINE_LEVELS) -> ConeSample:
    """Accumulation directions of ``samples`` at ``a``.

    ``radii`` is the outer radius r0 of the dyadic schedule (default: one
    tenth of the sample bounding-box diagonal, which makes the estimate
    scale invariant).  An isolated base point yields an empty cone.
    """
    samples = np.atleast_2d(np.asarray(samples, float))
    if len(samples) < 2:
        raise InsufficientSamples("need at least two samples")
    a = _as_vector(a)
    r0 = default_radius(samples) if radii is None else float(radii)
    dirs, lev, dist, sched = _raw_directions(samples, a, r0, levels)
    reps, w = _select(dirs, lev, dist, min_members, fine_levels, cluster_deg)
    return ConeSample(a, reps, sched, w)


def limit_contingent_cone(samples, a, neighbor_count: int = 5, radii: Optional[float] = None,
                          levels: int = LEVELS, min_members: int = MIN_MEMBERS,
                          cluster_deg: float = CLUSTER_DEG) -> ConeSample:
    """Union of the contingent cones at the ``neighbor_count`` samples nearest to ``a``."""
    samples = np.atleast_2d(np.asarray(samples, float))
    if len(samples) < 2:
        raise InsufficientSamples("need at least two samples")
    a = _as_vector(a)
    r0 = default_radius(samples) if radii is None else float(radii)
    near = np.argsort(np.linalg.norm(samples - a, axis=1))[:neighbor_count]
    reps, weights = [], []
    for i in near:
        cone = contingent_cone(samples, samples[i], r0, levels, min_members, cluster_deg)
        reps.extend(cone.directions)
        weights.extend(cone.weights)
    cone0 = contingent_cone(samples, a, r0, levels, min_members, cluster_deg)
    reps.extend(cone0.directions)
    weights.extend(cone0.weights)
    if not reps:
        return ConeSample(a, np.zeros((0, samples.shape[1])), cone0.radius_schedule, np.zeros(0, int))
    reps = np.array(reps)
    weights = np.array(weights)
    cos_tol = np.cos(np.deg2rad(cluster_deg))
    merged, mw = [], []
    for i in np.argsort(-weights):
        for c, r in enumerate(merged):
            if reps[i] @ r >= cos_tol:
                mw[c] += weights[i]
                break
        else:
            merged.append(reps[i])
            mw.append(weights[i])
    return ConeSample(a, np.array(merged), cone0.radius_schedule, np.array(mw))


def modified_green(g: Union[GreenData, tuple]) -> tuple:
    """Green slopes widened by ``c0 * delta_s`` on both sides."""
    if isinstance(g, GreenData):
        s_minus, s_plus = g.s_minus, g.s_plus
    else:
        s_minus, s_plus = (np.atleast_2d(np.asarray(m, float)) for m in g)
    delta = s_plus - s_minus
    return s_minus - C0 * delta, s_plus + C0 * delta


@dataclass
class ConeReport:
    checked: int
    passed: int
    worst_margin: float
    per_base: list
    note: str = ("samples approximate the support by finite pieces; passing is evidence, "
                 "not proof")

    @property
    def pass_rate(self) -> float:
        return 1.0 if self.checked == 0 else self.passed / self.checked

    @property
    def ok(self) -> bool:
        return self.passed == self.checked


def verify_cone_theorem(S: Optional[GeneratingFunction], samples, green_map, tol: float = 1e-6,
                        neighbor_count: int = 5, radii: Optional[float] = None,
                        periodic: bool = True) -> ConeReport:
    """Betweenness of limit-contingent directions and the modified Green bundles.

    ``green_map`` is a sequence of GreenData (one per base point) or a
    callable ``AnnulusPoint -> GreenData`` used together with ``samples``
    as base points.  Graph matrices are widened by ``tol * I``.
    """
    samples = np.atleast_2d(np.asarray(samples, float))
    dim = samples.shape[1]
    n = dim // 2
    if callable(green_map):
        bases = [green_map(AnnulusPoint(s[:n], s[n:])) for s in samples]
    else:
        bases = list(green_map)
    pool = _periodic_copies(samples, n) if periodic else samples
    r0 = default_radius(samples) if radii is None else radii
    checked = passed = 0
    worst = -np.inf
    per = []
    for g in bases:
        a = g.base.vector.copy()
        if periodic:
            a[:n] = np.mod(a[:n], 1.0)
        cone = limit_contingent_cone(pool, a, neighbor_count, r0)
        lo, hi = modified_green(g)
        lo = lo - tol * np.eye(n)
        hi = hi + tol * np.eye(n)
        results = []
        for v in cone.directions:
            ok, margin = between_margin(v, lo, hi)
            checked += 1
            passed += int(ok)
            worst = max(worst, margin)
            results.append((v.tolist(), bool(ok), float(margin)))
        per.append({"base": a.tolist(), "directions": results})
    return ConeReport(checked, passed, float(worst) if checked else 0.0, per)


def c1_isotropic_check(cone: ConeSample, form: Optional[SymplecticSpace] = None,
                       tol: float = 1e-6) -> bool:
    """Do the cone directions fit in one Lagrangian subspace?

    True iff ``max |omega(u, v)| <= tol`` over direction pairs and their
    span has dimension at most n.
    """
    dirs = np.atleast_2d(cone.directions)
    if dirs.size == 0 or len(dirs) == 1:
        return True
    n = dirs.shape[1] // 2
    j0 = form.form_matrix if form is not None else form_matrix(n)
    pair = np.abs(dirs @ j0 @ dirs.T).max()
    sv = np.linalg.svd(dirs, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    return bool(pair <= tol and rank <= n)


# ---------------------------------------------------------------------------
# sample generators


def unstable_manifold_samples(S: GeneratingFunction, fixed: AnnulusPoint, count: int = 400,
                              radius: float = 0.05, seed_scale: float = 1e-7,
                              stable: bool = True) -> np.ndarray:
    """Points on the local unstable (and stable) manifolds of a fixed point.

    Seeds ``x + t v`` with ``t`` spread over one fundamental domain of the
    linearization are iterated until they leave the ball of ``radius``.
    """
    from .maps import tangent
    m = tangent(S, fixed.q, fixed.q)
    vals, vecs = np.linalg.eig(m)
    out = [fixed.vector]
    x0 = fixed.vector
    n = S.n
    for lam, vec in zip(vals, vecs.T):
        if abs(lam.imag) > 1e-12:
            continue
        lam, vec = float(abs(lam.real)), np.real(vec)
        if abs(lam - 1.0) < 1e-9:
            continue
        unstable = lam > 1.0
        if not unstable and not stable:
            continue
        step = forward if unstable else backward
        growth = lam if unstable else 1.0 / lam
        per = max(2, count // (2 * max(1, int(np.log(radius / seed_scale) / np.log(growth)))))
        for sign in (1.0, -1.0):
            for s in np.linspace(0.0, 1.0, per, endpoint=False):
                x = x0 + sign * seed_scale * growth ** s * vec / np.linalg.norm(vec)
                pt = AnnulusPoint(x[:n], x[n:])
                while np.linalg.norm(pt.vector - x0) <= radius:
                    out.append(pt.vector)
                    pt = step(S, pt)
    return np.array(out)


def invariant_circle_samples(p0, count: int = 200, focus: Optional[float] = None,
                             depth: int = 40) -> np.ndarray:
    """Samples of the integrable invariant circle ``{p = p0}`` (n = 1).

    With ``focus`` the uniform points are supplemented by a geometric
    sequence ``focus +- 0.05 * 2^(-j/2)``, ``j < depth``, so the circle is
    resolved at the same fine scales as manifold samples of a fixed point.
    """
    q = np.arange(count) / count
    if focus is not None:
        steps = 0.05 * 2.0 ** (-np.arange(depth) / 2.0)
        q = np.concatenate([q, [focus], focus + steps, focus - steps])
    return np.column_stack([q, np.full(len(q), float(p0))])


def product_samples(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Cartesian product of samples of two factors, in ``(q1, q2, p1, p2)`` order."""
    n1, n2 = first.shape[1] // 2, second.shape[1] // 2
    rows = []
    for a in first:
        for b in second:
            rows.append(np.concatenate([a[:n1], b[:n2], a[n1:], b[n2:]]))
    return np.array(rows)


# ---------------------------------------------------------------------------
# the algebraic inequalities at coincidence points


@dataclass
class PalgReport:
    pairs: list
    worst_upper: float
    worst_lower: float
    closed_form: list
    sigma_ok: list
    q_minus: np.ndarray
    q_plus: np.ndarray

    @property
    def worst(self) -> float:
        return min(self.worst_upper, self.worst_lower)


def _fd_gradient(u, x, step):
    n = u.n
    e = np.eye(n) * step
    return np.array([(u.interpolate(x + e[i])[0] - u.interpolate(x - e[i])[0]) / (2 * step)
                     for i in range(n)])


def _fd_hessian(f, x, step):
    n = len(x)
    e = np.eye(n) * step
    h = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        h[i, i] = (f(x + e[i]) - 2 * f0 + f(x - e[i])) / step ** 2
        for j in range(i):
            h[i, j] = h[j, i] = (f(x + e[i] + e[j]) - f(x + e[i] - e[j])
                                 - f(x - e[i] + e[j]) + f(x - e[i] - e[j])) / (4 * step ** 2)
    return sym(h)


def mane_hessians(S: GeneratingFunction, x, p, m: int, lbar: float = 0.0, step: float = 1e-4):
    """``Q+ = d2A_m/dy2(x_-m, x)`` and ``Q- = -d2A_m/dx2(x, x_m)`` by finite differences.

    ``x_-m`` and ``x_m`` are taken on the orbit of ``(x, p)``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    pt = AnnulusPoint(x, p)
    back, fwd = pt, pt
    for _ in range(m):
        back = backward(S, back)
        fwd = forward(S, fwd)
    a_y = lambda y: mane_potential(S, back.q, y, m, lbar, starts=1).value
    a_x = lambda z: mane_potential(S, z, fwd.q, m, lbar, starts=1).value
    return -_fd_hessian(a_x, x, step), _fd_hessian(a_y, x, step)


def palg_inequality_check(S: GeneratingFunction, weakkam: WeakKamReport, x, sequences,
                          m: int = 1, fd_step: Optional[float] = None,
                          k_radii=(0.25, 0.5, 1.0, 2.0, 4.0), k_dirs: int = 32) -> PalgReport:
    """Evaluate both algebraic inequalities on empirical ``(X, Y)`` pairs.

    Each sequence is an array of points ``y_j -> x``; its last element gives
    ``X = (y - x) / lambda`` and ``Y = (du(y) - du(x)) / lambda`` with
    ``lambda = |y - x|`` and gradients of ``u_minus`` by central
    differences (step ``fd_step``, default four grid cells).  The
    inequalities are evaluated on a grid of vectors k and in closed form;
    for pairs satisfying them a sigma from :func:`pbilin_construct` is
    built and its band slacks recorded.
    """
    u = weakkam.u_minus
    x = np.atleast_1d(np.asarray(x, float))
    n = u.n
    h = fd_step or 4.0 * u.spacing
    du_x = _fd_gradient(u, x, h)
    q_minus, q_plus = mane_hessians(S, x, du_x, m, weakkam.lbar)
    if n == 1:
        ks = np.array([[s] for s in (-1.0, 1.0)])
    else:
        ang = np.linspace(0, 2 * np.pi, k_dirs, endpoint=False)
        ks = np.column_stack([np.cos(ang), np.sin(ang)] + [np.zeros(k_dirs)] * (n - 2))
    ks = np.vstack([r * ks for r in k_radii] + [np.zeros((1, n))])
    pairs, closed, sig = [], [], []
    worst_u = worst_l = np.inf
    dq = q_plus - q_minus
    for seq in sequences:
        y = np.atleast_2d(np.asarray(seq, float))[-1]
        lam = float(np.linalg.norm(y - x))
        X = (y - x) / lam
        Y = (_fd_gradient(u, y, h) - du_x) / lam
        pairs.append((X, Y))
        for k in ks:
            up = 0.5 * (q_plus @ k @ k + q_plus @ X @ X - q_minus @ (X - k) @ (X - k)) - Y @ k
            lo = Y @ k - 0.5 * (q_minus @ k @ k + q_minus @ X @ X - q_plus @ (k - X) @ (k - X))
            worst_u, worst_l = min(worst_u, up), min(worst_l, lo)
        hyp = pbilin_hypotheses(q_minus, q_plus, X, Y)
        closed.append((hyp.upper_slack, hyp.lower_slack))
        if hyp.ok and np.linalg.eigvalsh(sym(dq)).min() >= -1e-9:
            sigma = pbilin_construct(q_minus, q_plus, X, Y)
            lo_s, hi_s = band_slacks(sigma, q_minus, q_plus)
            sig.append({"sigma": sigma, "band": (lo_s, hi_s),
                        "residual": float(np.linalg.norm(sigma @ X - Y))})
        else:
            sig.append(None)
    return PalgReport(pairs, float(worst_u), float(worst_l), closed, sig, q_minus, q_plus)
