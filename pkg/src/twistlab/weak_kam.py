"""Effective value and discrete weak-KAM solutions on a periodic grid.

The Lax-Oleinik operators are min-plus / max-plus products with a cost
matrix ``C[a, b] = min_k S(x_a + k, x_b) - lbar`` over integer translates
``k`` in ``{-1, 0, 1}^n``, where ``x_a`` runs over the uniform grid of
``[0, 1)^n``.  Building C once makes every sweep a dense reduction.
"""

from __future__ import annotations

import csv
import enum
import itertools
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NoConvergence
from .maps import GeneratingFunction
from .variational import minimize_periodic

DEFAULT_RESOLUTION = {1: 256, 2: 64}


class Kind(enum.IntEnum):
    BACKWARD = 0
    FORWARD = 1


def grid_nodes(n: int, resolution: int) -> np.ndarray:
    """Grid nodes of ``[0, 1)^n`` in row-major order, shape (resolution**n, n)."""
    axis = np.arange(resolution) / resolution
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class SubactionGrid:
    """Values of a periodic function on the uniform grid over the torus."""

    n: int
    resolution: int
    values: np.ndarray
    kind: Kind = Kind.BACKWARD
    residual: float = np.inf
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.kind = Kind(self.kind)
        if self.values.size != self.resolution ** self.n:
            raise ValueError("value table does not match the grid size")

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.n, self.resolution)

    def table(self) -> np.ndarray:
        return self.values.reshape((self.resolution,) * self.n)

    def normalized(self) -> "SubactionGrid":
        return SubactionGrid(self.n, self.resolution, self.values - self.values.min(),
                             self.kind, self.residual, dict(self.info))

    def index_of(self, x) -> int:
        """Flat index of the grid node nearest to ``x`` (mod 1)."""
        idx = np.rint(np.mod(np.atleast_1d(x), 1.0) * self.resolution).astype(int) % self.resolution
        return int(np.ravel_multi_index(tuple(idx), (self.resolution,) * self.n))

    def interpolate(self, x) -> np.ndarray:
        """Multilinear periodic interpolation at points ``x`` of shape (m, n)."""
        x = np.atleast_2d(np.asarray(x, float))
        r = self.resolution
        t = np.mod(x, 1.0) * r
        base = np.floor(t).astype(int)
        frac = t - base
        tab = self.table()
        out = np.zeros(len(x))
        for corner in itertools.product((0, 1), repeat=self.n):
            c = np.array(corner)
            w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            idx = tuple(((base + c) % r).T)
            out += w * tab[idx]
        return out

    # serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.n)] + ["value"])
            for node, val in zip(self.nodes, self.values):
                w.writerow([format(v, ".17g") for v in (*node, val)])

    def to_bytes(self) -> bytes:
        header = struct.pack("<III", self.n, self.resolution, int(self.kind))
        return header + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SubactionGrid":
        n, res, kind = struct.unpack("<III", blob[:12])
        vals = np.frombuffer(blob[12:], dtype="<f8").copy()
        return cls(n, res, vals, Kind(kind))

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load_binary(cls, path) -> "SubactionGrid":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class CostMatrix:
    """Translate-minimized pair costs ``S(x_a + k, x_b) - lbar`` on the grid."""

    def __init__(self, S: GeneratingFunction, resolution: int, lbar: float = 0.0, reach: int = 1):
        self.S = S
        self.n = S.n
        self.resolution = resolution
        self.lbar = float(lbar)
        nodes = grid_nodes(self.n, resolution)
        self.nodes = nodes
        m = len(nodes)
        best = np.full((m, m), np.inf)
        arg = np.zeros((m, m), dtype=np.int16)
        translates = list(itertools.product(range(-reach, reach + 1), repeat=self.n))
        self.translates = np.array(translates, dtype=float)
        rows = max(1, 2_000_000 // m)
        for t, k in enumerate(self.translates):
            for lo in range(0, m, rows):
                hi = min(lo + rows, m)
                src = np.repeat(nodes[lo:hi] + k, m, axis=0)
                dst = np.tile(nodes, (hi - lo, 1))
                vals = self.S.value(src, dst).reshape(hi - lo, m)
                better = vals < best[lo:hi]
                best[lo:hi][better] = vals[better]
                arg[lo:hi][better] = t
        self.cost = best - self.lbar
        self.argshift = arg

    def translate(self, a, b) -> np.ndarray:
        """Integer translate realizing the minimum for the pair (a, b)."""
        return self.translates[self.argshift[a, b]]

    def backward(self, u: np.ndarray, threads: int = 1, chunk: int = 512) -> np.ndarray:
        return self._reduce(u, threads, chunk, forward=False)

    def forward(self, u: np.ndarray, threads: int = 1, chunk: int = 512) -> np.ndarray:
        return self._reduce(u, threads, chunk, forward=True)

    def _reduce(self, u, threads, chunk, forward):
        m = len(u)
        out = np.empty(m)

        def work(lo):
            hi = min(lo + chunk, m)
            if forward:
                # T+ u(x) = max_y u(y) - C[x, y]
                out[lo:hi] = np.max(u[None, :] - self.cost[lo:hi, :], axis=1)
            else:
                # T u(y) = min_x u(x) + C[x, y]
                out[lo:hi] = np.min(u[:, None] + self.cost[:, lo:hi], axis=0)

        starts = range(0, m, chunk)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(work, starts))
        else:
            for lo in starts:
                work(lo)
        return out


_COST_CACHE: dict = {}


def cost_matrix(S: GeneratingFunction, resolution: int, lbar: float) -> CostMatrix:
    key = (id(S), resolution, float(lbar))
    hit = _COST_CACHE.get(key)
    if hit is None or hit.S is not S:
        if len(_COST_CACHE) > 4:
            _COST_CACHE.clear()
        hit = CostMatrix(S, resolution, lbar)
        _COST_CACHE[key] = hit
    return hit


def estimate_lbar(S: GeneratingFunction, max_period: int = 4, rng=None, starts: int = 4,
                  return_config: bool = False):
    """Smallest mean action over periodic minimizers of period <= max_period.

    Rotation vectors ``rho / N`` range over integer ``rho`` with
    ``|rho|_inf <= N`` (rotation number in ``[-1, 1]^n``).  The running
    minimum is non-increasing in ``max_period`` by construction.
    """
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    rng = np.random.default_rng(rng)
    best, best_cfg = np.inf, None
    for N in range(1, max_period + 1):
        for rho in itertools.product(range(-N, N + 1), repeat=S.n):
            # rotation rho/N already seen at a smaller period
            if N > 1 and np.gcd.reduce(np.abs(np.array(rho + (N,)))) > 1:
                continue
            cfg = minimize_periodic(S, np.array(rho, float), N, rng=rng, starts=starts)
            val = cfg.info["mean_action"]
            if val < best:
                best, best_cfg = val, cfg
    return (best, best_cfg) if return_config else best


def lax_oleinik_backward(S: GeneratingFunction, u: SubactionGrid, lbar: float,
                         refine: bool = False, threads: int = 1) -> SubactionGrid:
    """One backward Lax-Oleinik sweep, renormalized to ``min = 0``.

    ``refine=True`` adds one local continuous descent step in x around
    each grid argmin (off by default; the pure grid operator is exactly
    non-expansive and monotone).
    """
    cm = cost_matrix(S, u.resolution, lbar)
    new = cm.backward(u.values, threads=threads)
    if refine:
        new = np.minimum(new, _refined(S, u, cm, lbar))
    return SubactionGrid(u.n, u.resolution, new - new.min(), Kind.BACKWARD)


def lax_oleinik_forward(S: GeneratingFunction, u: SubactionGrid, lbar: float,
                        threads: int = 1) -> SubactionGrid:
    """One forward sweep ``u(x) = max_y u(y) - S_bar(x, y)``, renormalized."""
    cm = cost_matrix(S, u.resolution, lbar)
    new = cm.forward(u.values, threads=threads)
    return SubactionGrid(u.n, u.resolution, new - new.min(), Kind.FORWARD)


def _refined(S, u, cm, lbar):
    """Grid argmin followed by one Newton step of ``x -> u(x) + S_bar(x, y)``."""
    vals = u.values
    total = vals[:, None] + cm.cost
    arg = np.argmin(total, axis=0)
    h = u.spacing
    ys = cm.nodes
    xs = cm.nodes[arg] + cm.translates[cm.argshift[arg, np.arange(len(arg))]]
    out = np.empty(len(ys))
    for j, (x, y) in enumerate(zip(xs, ys)):
        e = np.eye(u.n) * h
        grad_u = np.array([(u.interpolate(x + e[i])[0] - u.interpolate(x - e[i])[0]) / (2 * h)
                           for i in range(u.n)])
        g = grad_u + S.grad_q(x, y)
        hmat = S.hess_qq(x, y) + np.eye(u.n) * 1e-12
        step = np.linalg.solve(hmat, g)
        step = np.clip(step, -h, h)
        cand = x - step
        out[j] = u.interpolate(cand)[0] + float(S.value(cand, y)) - lbar
    return out


def calibration_defect(S: GeneratingFunction, u: SubactionGrid, lbar: float) -> float:
    """Largest ``|T u - u|`` without renormalization (fixed-point defect)."""
    cm = cost_matrix(S, u.resolution, lbar)
    op = cm.backward if u.kind == Kind.BACKWARD else cm.forward
    return float(np.max(np.abs(op(u.values) - u.values)))


def semiconcavity_bound(u: SubactionGrid) -> float:
    """Largest upper second difference of u along coordinate directions."""
    tab = u.table()
    h = u.spacing
    worst = -np.inf
    for ax in range(u.n):
        d2 = (np.roll(tab, -1, ax) + np.roll(tab, 1, ax) - 2 * tab) / h ** 2
        worst = max(worst, float(d2.max()))
    return worst


def solve_calibrated(S: GeneratingFunction, kind=Kind.BACKWARD, lbar: float = 0.0,
                     tol: float = 1e-8, max_iters: int = 10_000, resolution: Optional[int] = None,
                     init: Optional[SubactionGrid] = None, threads: int = 1) -> SubactionGrid:
    """Iterate a Lax-Oleinik operator from ``u = 0`` to a sup-norm fixed point.

    Convergence is declared on the sup-norm increment between sweeps
    (after renormalization); the fixed-point defect without
    renormalization is reported in ``info["calibration_defect"]``.
    """
    kind = Kind(kind)
    if tol <= 0:
        raise ValueError("tol must be positive")
    res = resolution or DEFAULT_RESOLUTION.get(S.n, 32)
    cm = cost_matrix(S, res, lbar)
    op = cm.backward if kind == Kind.BACKWARD else cm.forward
    u = np.zeros(res ** S.n) if init is None else init.values.copy()
    history = []
    for it in range(1, max_iters + 1):
        new = op(u, threads=threads)
        new -= new.min()
        inc = float(np.max(np.abs(new - u)))
        history.append(inc)
        u = new
        if inc <= tol:
            break
    else:
        raise NoConvergence(f"Lax-Oleinik iteration did not reach {tol:g} in {max_iters} sweeps",
                            last_increment=history[-1], history=history)
    grid = SubactionGrid(S.n, res, u, kind, inc)
    grid.info["iterations"] = it
    grid.info["history_tail"] = history[-5:]
    grid.info["calibration_defect"] = float(np.max(np.abs(op(u) - u)))
    if kind == Kind.BACKWARD:
        grid.info["semiconcavity"] = semiconcavity_bound(grid)
    return grid


@dataclass
class WeakKamReport:
    lbar: float
    u_minus: SubactionGrid
    u_plus: SubactionGrid
    coincidence: np.ndarray
    contact_pairs: list
    tol_coincidence: float
    info: dict = field(default_factory=dict)

    def coincidence_nodes(self) -> np.ndarray:
        return self.u_minus.nodes[self.coincidence]


def conjugate_pair(S: GeneratingFunction, u_minus: SubactionGrid, lbar: float,
                   tol: float = 1e-8, max_iters: int = 10_000, tol_floor: float = 1e-9,
                   contact_tol: Optional[float] = None) -> WeakKamReport:
    """Forward-conjugate subaction and the coincidence set.

    The forward operator is iterated from ``u_minus`` without
    renormalization; since ``u_minus`` is a subaction the sequence
    decreases, so the limit satisfies ``u_plus <= u_minus``.  The additive
    constant is then fixed by ``min(u_minus - u_plus) = 0`` and the
    coincidence set is ``{u_minus - u_plus <= tol_I}`` with
    ``tol_I = max(4 * residual, tol_floor)``.
    """
    cm = cost_matrix(S, u_minus.resolution, lbar)
    u = u_minus.values.copy()
    history = []
    for it in range(1, max_iters + 1):
        new = cm.forward(u)
        inc = float(np.max(np.abs(new - u)))
        history.append(inc)
        u = new
        if inc <= tol:
            break
    else:
        raise NoConvergence("forward conjugate iteration did not converge",
                            last_increment=history[-1], history=history)
    gap = u_minus.values - u
    u_plus = u + gap.min()
    gap = u_minus.values - u_plus
    residual = max(inc, u_minus.residual if np.isfinite(u_minus.residual) else 0.0)
    tol_i = max(4.0 * residual, tol_floor)
    coincidence = np.flatnonzero(gap <= tol_i)
    plus = SubactionGrid(u_minus.n, u_minus.resolution, u_plus, Kind.FORWARD, inc,
                         {"iterations": it})
    ctol = contact_tol if contact_tol is not None else 2.0 * max(tol, residual)
    # calibrating pairs of u_minus: for every y the grid argmin x
    vals = u_minus.values
    arg = np.argmin(vals[:, None] + cm.cost, axis=0)
    defect = vals + 0.0 - (vals[arg] + cm.cost[arg, np.arange(len(arg))])
    nodes = u_minus.nodes
    contacts = [(nodes[a] + cm.translate(a, b), nodes[b]) for b, a in enumerate(arg)
                if defect[b] >= -ctol]
    return WeakKamReport(lbar, u_minus, plus, coincidence, contacts, tol_i,
                         {"gap_max": float(gap.max()), "forward_iterations": it})


def contact_defect(S: GeneratingFunction, u: SubactionGrid, x, y, lbar: float) -> float:
    """``S_bar(x, y) - (u(y) - u(x))``; zero on contact pairs, >= 0 for subactions.

    Off-grid values of u are obtained by linear interpolation.
    """
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    sbar = S.value(x, y) - lbar
    return np.asarray(sbar - (u.interpolate(y) - u.interpolate(x)))


@dataclass
class SigmaResult:
    minimizers: list
    values: list
    superdifferential: Optional[np.ndarray]

    @property
    def singleton(self) -> bool:
        return len(self.minimizers) == 1


def sigma_set(S: GeneratingFunction, u_minus: SubactionGrid, y, lbar: float,
              tol: Optional[float] = None, separation: int = 2) -> SigmaResult:
    """Grid minimizers of ``x -> u_minus(x) + S_bar(x, y)`` near the global minimum.

    Local minima within ``tol`` (default ``2 * spacing``) of the global
    minimum are returned as points of the cover; minima closer than
    ``separation`` cells to a lower one are merged.  For a singleton the
    superdifferential ``S_Q(x, y)`` of ``u_minus`` at ``y`` is attached.
    """
    y = np.atleast_1d(np.asarray(y, float))
    tol = 2.0 * u_minus.spacing if tol is None else tol
    r, n = u_minus.resolution, u_minus.n
    nodes = u_minus.nodes
    base = np.floor(y)
    best = np.full(len(nodes), np.inf)
    where = np.zeros((len(nodes), n))
    for k in itertools.product((-2, -1, 0, 1), repeat=n):
        pts = nodes + base + np.array(k, float)
        vals = S.value(pts, np.broadcast_to(y, pts.shape)) - lbar
        better = vals < best
        best = np.where(better, vals, best)
        where[better] = pts[better]
    f = u_minus.values + best
    tab = f.reshape((r,) * n)
    is_min = np.ones(tab.shape, dtype=bool)
    for shift in itertools.product((-1, 0, 1), repeat=n):
        if any(shift):
            is_min &= tab <= np.roll(tab, shift, axis=tuple(range(n)))
    cand = np.flatnonzero(is_min.ravel() & (f <= f.min() + tol))
    cand = cand[np.argsort(f[cand])]
    kept = []
    for c in cand:
        ci = np.array(np.unravel_index(c, (r,) * n))
        close = False
        for k in kept:
            ki = np.array(np.unravel_index(k, (r,) * n))
            d = np.abs(ci - ki)
            if np.all(np.minimum(d, r - d) <= separation):
                close = True
                break
        if not close:
            kept.append(c)
    mins = [where[c] for c in kept]
    sup = S.grad_Q(mins[0], y) if len(mins) == 1 else None
    return SigmaResult(mins, [float(f[c]) for c in kept], sup)


def gradient_jumps(u: SubactionGrid) -> np.ndarray:
    """Jump of one-sided slopes of u at each node (n = 1 only)."""
    if u.n != 1:
        raise ValueError("slope jumps are only defined for n = 1 grids")
    v = u.values
    h = u.spacing
    right = (np.roll(v, -1) - v) / h
    left = (v - np.roll(v, 1)) / h
    return left - right


def lipschitz_diagnostic(u: SubactionGrid, nodes_idx) -> float:
    """Fitted Lipschitz constant of the central-difference gradient of u near a node set.

    Returns the largest ratio ``|du(a) - du(b)| / |a - b|`` over pairs of
    the given nodes (n = 1).
    """
    if u.n != 1:
        raise ValueError("implemented for n = 1")
    v = u.values
    h = u.spacing
    du = (np.roll(v, -1) - np.roll(v, 1)) / (2 * h)
    idx = np.asarray(nodes_idx)
    if len(idx) < 2:
        return 0.0
    x = idx * h
    dx = np.abs(x[:, None] - x[None, :])
    dx = np.minimum(dx, 1 - dx)
    dd = np.abs(du[idx][:, None] - du[idx][None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dx > 0, dd / dx, 0.0)
    return float(ratio.max())
