"""Discrete action functionals and their minimizers.

Configurations live in the universal cover.  The fixed-end action of
``q_0..q_k`` is ``sum S(q_{i-1}, q_i) - k * lbar``; the Hessian with
respect to the interior points is block tridiagonal with diagonal blocks
``S_QQ(q_{i-1}, q_i) + S_qq(q_i, q_{i+1})`` and off-diagonal blocks
``S_qQ(q_i, q_{i+1})``.  Newton steps use a block Thomas solve, so a
length-k problem costs O(k n^3).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigvals_banded

from .errors import NotConverged, NotCritical, OrbitMismatch, SaddleDetected
from .maps import GeneratingFunction, OrbitSegment, forward, tangent

GRAD_TOL = 1e-10
MAX_ITERS = 200


@dataclass
class Configuration:
    """Points ``q_0..q_k`` with either fixed ends or a periodic closure.

    For ``periodic=True`` the array holds one period ``q_0..q_{N-1}`` and
    ``q_{i+N} = q_i + rho``.
    """

    points: np.ndarray
    periodic: bool = False
    rho: Optional[np.ndarray] = None
    saddle: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        if self.periodic:
            self.rho = np.zeros(self.n) if self.rho is None else np.atleast_1d(np.asarray(self.rho, float))
        elif len(pts) < 2:
            raise ValueError("a fixed-end configuration needs at least two points")

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def steps(self) -> int:
        return len(self.points) if self.periodic else len(self.points) - 1

    def closed(self) -> np.ndarray:
        """Points with the periodic closure ``q_0 + rho`` appended."""
        if not self.periodic:
            return self.points
        return np.vstack([self.points, self.points[:1] + self.rho])


def action(S: GeneratingFunction, config: Configuration, lbar: float = 0.0) -> float:
    pts = config.closed()
    return float(np.sum(S.value(pts[:-1], pts[1:])) - config.steps * lbar)


def _interior_gradient(S, full):
    return S.grad_Q(full[:-2], full[1:-1]) + S.grad_q(full[1:-1], full[2:])


def _interior_blocks(S, full):
    diag = S.hess_QQ(full[:-2], full[1:-1]) + S.hess_qq(full[1:-1], full[2:])
    upper = S.hess_qQ(full[1:-2], full[2:-1])
    return diag, upper


def block_thomas(diag, upper, rhs):
    """Solve a symmetric block tridiagonal system.

    ``diag`` has shape (m, n, n), ``upper`` (m-1, n, n) holds block
    ``(i, i+1)``; the lower blocks are their transposes.  Returns the
    solution and the Schur-complement pivots (their inertia equals the
    inertia of the full matrix).
    """
    m = len(diag)
    pivots = np.empty_like(diag)
    y = np.empty_like(rhs)
    pivots[0] = diag[0]
    y[0] = rhs[0]
    for i in range(1, m):
        low = np.linalg.solve(pivots[i - 1].T, upper[i - 1]).T
        pivots[i] = diag[i] - low @ upper[i - 1]
        y[i] = rhs[i] - low @ y[i - 1]
    x = np.empty_like(rhs)
    x[m - 1] = np.linalg.solve(pivots[m - 1], y[m - 1])
    for i in range(m - 2, -1, -1):
        x[i] = np.linalg.solve(pivots[i], y[i] - upper[i] @ x[i + 1])
    return x, pivots


def _pivots_pd(pivots) -> bool:
    try:
        np.linalg.cholesky(0.5 * (pivots + np.swapaxes(pivots, -1, -2)))
        return True
    except np.linalg.LinAlgError:
        return False


def banded_min_eigenvalue(diag, upper) -> float:
    """Smallest eigenvalue of a symmetric block tridiagonal matrix."""
    m, n, _ = diag.shape
    size = m * n
    bw = 2 * n - 1
    band = np.zeros((bw + 1, size))
    dense_rows = lambda i: slice(i * n, (i + 1) * n)
    full = np.zeros((size, size)) if size <= 60 else None
    for i in range(m):
        blk = 0.5 * (diag[i] + diag[i].T)
        for r in range(n):
            for c in range(r + 1):
                band[r - c, i * n + c] = blk[r, c]
        if i < m - 1:
            low = upper[i].T  # block (i+1, i)
            for r in range(n):
                for c in range(n):
                    row, col = (i + 1) * n + r, i * n + c
                    band[row - col, col] = low[r, c]
        if full is not None:
            full[dense_rows(i), dense_rows(i)] = blk
            if i < m - 1:
                full[dense_rows(i), dense_rows(i + 1)] = upper[i]
                full[dense_rows(i + 1), dense_rows(i)] = upper[i].T
    if full is not None:
        return float(np.linalg.eigvalsh(full)[0])
    return float(eigvals_banded(band, lower=True, select="i", select_range=(0, 0))[0])


def _newton_minimize(value, gradient, solve, x0, max_iters=MAX_ITERS, tol=GRAD_TOL):
    """Levenberg-damped Newton descent with a backtracking line search.

    ``solve(x, g, shift)`` returns ``(step, pd)`` for the shifted Hessian.
    """
    x = np.array(x0, dtype=float)
    f, g = value(x), gradient(x)
    gn = np.linalg.norm(g)
    shift = 0.0
    for it in range(max_iters):
        if gn <= tol:
            return x, it
        while True:
            step, pd = solve(x, g, shift)
            if pd:
                break
            shift = max(1e-8, 10.0 * shift)
        t = 1.0
        accepted = False
        for _ in range(40):
            cand = x - t * step
            fc, gc = value(cand), gradient(cand)
            gcn = np.linalg.norm(gc)
            descent = fc <= f - 1e-4 * t * float(np.sum(g * step))
            flat = abs(fc - f) <= 1e-12 * (1.0 + abs(f)) and gcn < gn
            if descent or flat:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            shift = max(1e-6, 10.0 * shift)
            continue
        x, f, g, gn = cand, fc, gc, gcn
        shift = 0.0 if t == 1.0 else shift * 0.1
    if gn <= tol:
        return x, max_iters
    raise NotConverged(f"Newton minimization stopped at gradient norm {gn:.3e}", last_increment=gn)


def _fixed_end_problem(S, q_start, q_end):
    def full(x):
        return np.vstack([q_start, x, q_end])

    def value(x):
        f = full(x)
        return float(np.sum(S.value(f[:-1], f[1:])))

    def gradient(x):
        return _interior_gradient(S, full(x))

    def solve(x, g, shift):
        diag, upper = _interior_blocks(S, full(x))
        if shift:
            diag = diag + shift * np.eye(S.n)
        try:
            step, piv = block_thomas(diag, upper, g)
        except np.linalg.LinAlgError:
            return None, False
        return step, _pivots_pd(piv)

    return full, value, gradient, solve


def hessian_blocks(S: GeneratingFunction, config: Configuration):
    full = config.points
    return _interior_blocks(S, full)


def minimize_fixed_ends(S: GeneratingFunction, q_start, q_end, k: int,
                        init: Optional[Configuration] = None, rng=None,
                        retries: int = 4) -> Configuration:
    """Minimizer of the k-step action with ``q_0 = q_start``, ``q_k = q_end``.

    The default initial guess is the straight line in the cover.  A
    converged configuration whose Hessian is indefinite is retried from
    perturbed starts; if every retry lands on a saddle, SaddleDetected is
    raised.
    """
    if k < 2:
        raise ValueError("fixed-end minimization needs k >= 2")
    q_start = np.atleast_1d(np.asarray(q_start, float))
    q_end = np.atleast_1d(np.asarray(q_end, float))
    full, value, gradient, solve = _fixed_end_problem(S, q_start, q_end)
    if init is not None:
        x0 = np.asarray(init.points, float)[1:-1]
    else:
        t = np.linspace(0.0, 1.0, k + 1)[1:-1, None]
        x0 = q_start + t * (q_end - q_start)
    rng = np.random.default_rng(rng)
    last = None
    for attempt in range(retries + 1):
        x, iters = _newton_minimize(value, gradient, solve, x0)
        pts = full(x)
        diag, upper = _interior_blocks(S, pts)
        lo = banded_min_eigenvalue(diag, upper)
        scale = max(1.0, float(np.abs(diag).max()))
        config = Configuration(pts, info={"iterations": iters, "min_eigenvalue": lo,
                                          "gradient_norm": float(np.linalg.norm(gradient(x)))})
        if lo >= -1e-8 * scale:
            return config
        config.saddle = True
        last = config
        x0 = x + rng.normal(scale=0.05, size=x.shape)
    raise SaddleDetected("minimization converged to a saddle", config=last,
                         min_eigenvalue=last.info["min_eigenvalue"])


# ---------------------------------------------------------------------------
# periodic configurations


def _periodic_parts(S, x, rho):
    prev = np.vstack([x[-1:] - rho, x[:-1]])
    nxt = np.vstack([x[1:], x[:1] + rho])
    return prev, nxt


def _periodic_hessian(S, x, rho):
    N, n = x.shape
    prev, nxt = _periodic_parts(S, x, rho)
    diag = S.hess_QQ(prev, x) + S.hess_qq(x, nxt)
    links = S.hess_qQ(x, nxt)  # block (i, i+1 mod N)
    return diag, links


def _periodic_dense(diag, links):
    N, n, _ = diag.shape
    H = np.zeros((N * n, N * n))
    for i in range(N):
        s = slice(i * n, (i + 1) * n)
        H[s, s] += diag[i]
        j = (i + 1) % N
        t = slice(j * n, (j + 1) * n)
        H[s, t] += links[i]
        H[t, s] += links[i].T
    return 0.5 * (H + H.T)


def cyclic_block_solve(diag, links, rhs):
    """Solve the cyclic block tridiagonal system by a Woodbury correction.

    The corner coupling ``links[N-1]`` (block (N-1, 0)) is a rank-2n
    update of the open chain; requires N >= 3.
    """
    N, n, _ = diag.shape
    corner = links[-1]
    # the open chain with the corner removed
    z = lambda r: block_thomas(diag, links[:-1], r)[0]
    u = np.zeros((N, n, 2 * n))
    u[0, :, :n] = np.eye(n)
    u[-1, :, n:] = np.eye(n)
    w = np.zeros((2 * n, 2 * n))
    w[:n, n:] = corner.T  # block (0, N-1)
    w[n:, :n] = corner    # block (N-1, 0)
    tinv_r = z(rhs)
    tinv_u = np.stack([z(u[:, :, j]) for j in range(2 * n)], axis=-1)
    ut_tinv_u = np.concatenate([tinv_u[0], tinv_u[-1]], axis=0)
    ut_tinv_r = np.concatenate([tinv_r[0], tinv_r[-1]])
    cap = np.linalg.inv(w) + ut_tinv_u
    corr = np.linalg.solve(cap, ut_tinv_r)
    return tinv_r - np.einsum("ink,k->in", tinv_u, corr)


def _periodic_problem(S, rho):
    def value(x):
        nxt = np.vstack([x[1:], x[:1] + rho])
        return float(np.sum(S.value(x, nxt)))

    def gradient(x):
        prev, nxt = _periodic_parts(S, x, rho)
        return S.grad_Q(prev, x) + S.grad_q(x, nxt)

    def solve(x, g, shift):
        diag, links = _periodic_hessian(S, x, rho)
        if shift:
            diag = diag + shift * np.eye(S.n)
        N, n = x.shape
        H = _periodic_dense(diag, links)
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            return None, False
        try:
            if N >= 3:
                step = cyclic_block_solve(diag, links, g)
            else:
                step = np.linalg.solve(H, g.ravel()).reshape(N, n)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            # translation-invariant directions (integrable case) make H singular
            step = np.linalg.lstsq(H, g.ravel(), rcond=1e-12)[0].reshape(N, n)
        return step, True

    return value, gradient, solve


def minimize_periodic(S: GeneratingFunction, rho, N: int, init: Optional[Configuration] = None,
                      rng=None, starts: int = 8) -> Configuration:
    """Minimizer of ``sum_{i<N} S(q_i, q_{i+1})`` over ``q_N = q_0 + rho``.

    Several straight-line starts with different offsets (plus random
    perturbations) are tried; the lowest non-saddle critical point wins.
    ``info["mean_action"]`` holds ``(1/N) sum S``.
    """
    if N < 1:
        raise ValueError("period must be >= 1")
    rho = np.atleast_1d(np.asarray(rho, float))
    n = S.n
    if rho.size != n:
        raise ValueError("rotation vector has the wrong dimension")
    rng = np.random.default_rng(rng)
    value, gradient, solve = _periodic_problem(S, rho)
    base = np.arange(N)[:, None] * (rho / N)[None, :]
    inits = []
    if init is not None:
        inits.append(np.asarray(init.points, float))
    offsets = [np.full(n, c) for c in (0.0, 0.25, 0.5, 0.75)]
    inits.extend(base + off for off in offsets)
    while len(inits) < starts:
        inits.append(base + rng.uniform(0, 1, size=n) + rng.normal(scale=0.25 / N, size=(N, n)))
    best, best_val, saddle_seen = None, np.inf, None
    for x0 in inits:
        try:
            x, iters = _newton_minimize(value, gradient, solve, x0)
        except NotConverged:
            continue
        diag, links = _periodic_hessian(S, x, rho)
        lo = float(np.linalg.eigvalsh(_periodic_dense(diag, links))[0])
        val = value(x) / N
        scale = max(1.0, float(np.abs(diag).max()))
        if lo < -1e-8 * scale:
            saddle_seen = (x, lo)
            continue
        if val < best_val - 1e-13:
            # keep the representative with q_0 in [0, 1)^n
            shift = np.floor(x[0])
            best = Configuration(x - shift, periodic=True, rho=rho,
                                 info={"mean_action": val, "min_eigenvalue": lo,
                                       "iterations": iters,
                                       "gradient_norm": float(np.linalg.norm(gradient(x)))})
            best_val = val
    if best is None:
        if saddle_seen is not None:
            raise SaddleDetected("all periodic starts converged to saddles",
                                 config=Configuration(saddle_seen[0], periodic=True, rho=rho),
                                 min_eigenvalue=saddle_seen[1])
        raise NotConverged("periodic minimization failed from every start")
    return best


# ---------------------------------------------------------------------------
# orbits from configurations


def config_gradient(S: GeneratingFunction, config: Configuration) -> np.ndarray:
    if config.periodic:
        _, gradient, _ = _periodic_problem(S, config.rho)
        return gradient(config.points)
    return _interior_gradient(S, config.points)


def config_to_orbit(S: GeneratingFunction, config: Configuration, crit_tol: float = 1e-8,
                    orbit_tol: float = 1e-9) -> OrbitSegment:
    """Lift a critical configuration to the orbit it projects from."""
    grad = config_gradient(S, config)
    gn = float(np.linalg.norm(grad)) if grad.size else 0.0
    if gn > crit_tol:
        raise NotCritical(f"configuration gradient {gn:.3e} exceeds {crit_tol:g}")
    q = config.points
    if config.periodic:
        prev = np.vstack([q[-1:] - config.rho, q[:-1]])
        p = S.grad_Q(prev, q)
        seg = OrbitSegment(q, p, periodic=True, rho=config.rho)
        checks = range(len(q))
    else:
        p = np.empty_like(q)
        p[0] = -S.grad_q(q[0], q[1])
        p[1:] = S.grad_Q(q[:-1], q[1:])
        seg = OrbitSegment(q, p)
        checks = range(len(q) - 1)
    worst = 0.0
    for i in checks:
        img = forward(S, seg.point(i))
        tgt = seg.point(i + 1)
        err = max(np.abs(img.q - tgt.q).max(), np.abs(img.p - tgt.p).max())
        worst = max(worst, err / (1.0 + np.abs(tgt.vector).max()))
    if worst > orbit_tol:
        raise OrbitMismatch(f"forward verification residual {worst:.3e}")
    seg.meta["forward_residual"] = worst
    return seg


def unroll(orbit: OrbitSegment, before: int, after: int) -> OrbitSegment:
    """Non-periodic segment ``x_{-before} .. x_{after}`` of a periodic orbit."""
    idx = range(-before, after + 1)
    pts = [orbit.point(i) for i in idx]
    seg = OrbitSegment(np.array([x.q for x in pts]), np.array([x.p for x in pts]), center=before)
    return seg


# ---------------------------------------------------------------------------
# Mane potential


@dataclass
class ManeResult:
    value: float
    minimizer: Configuration
    super_x: np.ndarray
    super_y: np.ndarray


def mane_potential(S: GeneratingFunction, x, y, m: int, lbar: float = 0.0, starts: int = 8,
                   rng=None, threads: int = 1) -> ManeResult:
    """Minimal m-step action from x to y with the orbit superdifferentials.

    Multi-start: the straight line plus ``starts - 1`` Gaussian
    perturbations of scale 0.25.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if m == 1:
        cfg = Configuration(np.vstack([x, y]))
        return ManeResult(float(S.value(x, y)) - lbar, cfg, S.grad_q(x, y), S.grad_Q(x, y))
    rng = np.random.default_rng(rng)
    t = np.linspace(0.0, 1.0, m + 1)[:, None]
    line = x + t * (y - x)
    inits = [line]
    for _ in range(starts - 1):
        pert = line.copy()
        pert[1:-1] += rng.normal(scale=0.25, size=(m - 1, S.n))
        inits.append(pert)

    def run(init):
        try:
            return minimize_fixed_ends(S, x, y, m, init=Configuration(init), rng=0)
        except (SaddleDetected, NotConverged):
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, inits))
    else:
        results = [run(i) for i in inits]
    results = [r for r in results if r is not None]
    if not results:
        raise NotConverged("no multi-start minimization converged")
    vals = [action(S, r, lbar) for r in results]
    best = results[int(np.argmin(vals))]
    pts = best.points
    return ManeResult(float(min(vals)), best, S.grad_q(pts[0], pts[1]), S.grad_Q(pts[-2], pts[-1]))


# ---------------------------------------------------------------------------
# Hessian diagnostics


@dataclass
class HessianReport:
    diag: np.ndarray
    upper: np.ndarray
    min_eigenvalue: float
    transverse: bool
    sigma_min: float


def hessian_fixed_ends(S: GeneratingFunction, config: Configuration) -> HessianReport:
    """Fixed-end Hessian, its smallest eigenvalue, and vertical transversality.

    ``transverse`` reports whether ``DF^k V(q_0)`` is transverse to
    ``V(q_k)``: the top-right block of the k-step tangent product must be
    invertible (relative smallest singular value above 1e-12).
    """
    pts = config.points
    diag, upper = _interior_blocks(S, pts)
    lo = banded_min_eigenvalue(diag, upper) if len(diag) else np.inf
    n = S.n
    prod = np.eye(2 * n)
    for m in tangent(S, pts[:-1], pts[1:]):
        prod = m @ prod
        prod /= np.linalg.norm(prod)
    smin = float(np.linalg.svd(prod[:n, n:], compute_uv=False).min())
    return HessianReport(diag, upper, lo, smin > 1e-12, smin)


# ---------------------------------------------------------------------------
# strong minimality


@dataclass
class StrongMinResult:
    ok: bool
    checked: int
    counterexample: Optional[dict] = None
    max_lengths: int = 0


def check_strong_min(S: GeneratingFunction, config: Configuration, lbar: float = 0.0,
                     competitors: int = 200, rng=None, translate_bound: int = 2,
                     tol: float = 1e-8) -> StrongMinResult:
    """Probabilistic strong-minimality certificate.

    Each competitor picks a sub-segment ``x_m..x_l`` of ``config``, integer
    translates ``k1, k2`` of its ends (sup-norm <= translate_bound) and a
    length ``l' - m'`` in ``[1, 2k]``; the competitor interior is
    re-minimized and compared with the segment action.
    """
    rng = np.random.default_rng(rng)
    pts = config.closed()
    k = len(pts) - 1
    seg_cost = np.concatenate([[0.0], np.cumsum(S.value(pts[:-1], pts[1:]) - lbar)])
    for trial in range(competitors):
        m = int(rng.integers(0, k))
        ell = int(rng.integers(m + 1, k + 1))
        own = seg_cost[ell] - seg_cost[m]
        k1 = rng.integers(-translate_bound, translate_bound + 1, size=S.n)
        k2 = rng.integers(-translate_bound, translate_bound + 1, size=S.n)
        length = int(rng.integers(1, 2 * k + 1))
        start, end = pts[m] + k1, pts[ell] + k2
        try:
            other = mane_potential(S, start, end, length, lbar, starts=2, rng=rng).value
        except (NotConverged, SaddleDetected):
            continue
        if own > other + tol:
            return StrongMinResult(False, trial + 1, {
                "segment": (m, ell), "segment_action": float(own),
                "start": start.tolist(), "end": end.tolist(), "length": length,
                "competitor_action": float(other)}, 2 * k)
    return StrongMinResult(True, competitors, None, 2 * k)
