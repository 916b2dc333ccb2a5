"""Linear symplectic algebra on R^{2n} with coordinates ordered (q, p).

The symplectic form is ``omega(u, v) = u^T J0 v`` with
``J0 = [[0, I], [-I, 0]]`` so that ``omega(e_q_i, e_p_i) = 1``.  The
compatible complex structure is ``J = J0^T`` and the induced metric
``omega(v, J u)`` is the Euclidean inner product.

Lagrangian subspaces are stored as 2n x n spanning frames.  A frame that
is transverse to the vertical ``V = {q = 0}`` is the graph ``[I; W]`` of a
symmetric matrix ``W``; most order relations reduce to statements about
these graph matrices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space, orth, subspace_angles

from .errors import (
    HypothesisViolated,
    NotCoisotropic,
    NotOrdered,
    NotTransverse,
    VerticalNotTransverse,
)

#: Band constant of the bilinear sandwich, sqrt(13)/3 - 5/6.
C0 = np.sqrt(13.0) / 3.0 - 5.0 / 6.0

TRANSVERSE_TOL = 1e-10
PSD_SLACK = 1e-9


def form_matrix(n: int) -> np.ndarray:
    """Matrix of ``dq ^ dp`` on R^{2n}."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def omega(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0] // 2
    return float(u[:n] @ v[n:] - u[n:] @ v[:n])


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def min_eigenvalue(a: np.ndarray) -> float:
    a = np.atleast_2d(a)
    if a.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym(a))[0])


def is_psd(a: np.ndarray, slack: float = PSD_SLACK) -> bool:
    """PSD test with eigenvalue slack ``-slack * max(1, ||a||)``."""
    a = np.atleast_2d(a)
    if a.size == 0:
        return True
    scale = max(1.0, np.linalg.norm(a, 2))
    return min_eigenvalue(a) >= -slack * scale


@dataclass(frozen=True)
class SymplecticSpace:
    n: int

    @property
    def form_matrix(self) -> np.ndarray:
        return form_matrix(self.n)

    @property
    def complex_structure(self) -> np.ndarray:
        return form_matrix(self.n).T

    @property
    def dim(self) -> int:
        return 2 * self.n

    def omega(self, u, v) -> float:
        return float(np.asarray(u) @ self.form_matrix @ np.asarray(v))

    def metric(self, v, u) -> float:
        return self.omega(v, self.complex_structure @ np.asarray(u))


class LagrangianFrame:
    """A Lagrangian subspace of R^{2n} given by a 2n x n spanning matrix.

    Parameters
    ----------
    columns : array_like, shape (2n, n)
        Spanning vectors; must have full rank and be omega-isotropic.
    graph : array_like, optional
        Symmetric n x n matrix ``W`` when the frame is ``[I; W]``.
    check : bool
        Validate rank and isotropy (tolerance 1e-10 relative to column norms).
    """

    def __init__(self, columns, graph=None, check: bool = True):
        columns = np.array(columns, dtype=float)
        if columns.ndim != 2 or columns.shape[0] != 2 * columns.shape[1]:
            raise ValueError(f"frame must be 2n x n, got {columns.shape}")
        self.columns = columns
        self.graph = None if graph is None else np.array(graph, dtype=float)
        if check:
            self._check()

    def _check(self):
        n = self.n
        if np.linalg.matrix_rank(self.columns) < n:
            raise ValueError("frame columns are rank deficient")
        scale = max(np.linalg.norm(self.columns, axis=0).max(), 1.0) ** 2
        defect = np.abs(self.columns.T @ form_matrix(n) @ self.columns).max()
        if defect > 1e-10 * scale:
            raise ValueError(f"frame is not isotropic (defect {defect:.3e})")
        if self.graph is not None:
            if not np.allclose(self.graph, self.graph.T, atol=1e-12):
                raise ValueError("graph matrix is not symmetric")

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def from_graph(cls, w) -> "LagrangianFrame":
        w = np.atleast_2d(np.asarray(w, dtype=float))
        w = sym(w)
        n = w.shape[0]
        return cls(np.vstack([np.eye(n), w]), graph=w, check=False)

    @classmethod
    def vertical(cls, n: int) -> "LagrangianFrame":
        return cls(np.vstack([np.zeros((n, n)), np.eye(n)]), check=False)

    @classmethod
    def horizontal(cls, n: int) -> "LagrangianFrame":
        return cls.from_graph(np.zeros((n, n)))

    def orthonormal(self) -> np.ndarray:
        return orth(self.columns)

    def to_graph(self) -> np.ndarray:
        """Symmetric matrix W with ``span(columns) = graph(W)``."""
        if self.graph is not None:
            return self.graph
        n = self.n
        if _min_angle(self.columns, LagrangianFrame.vertical(n).columns) < TRANSVERSE_TOL:
            raise VerticalNotTransverse("frame is not transverse to the vertical")
        top, bottom = self.columns[:n], self.columns[n:]
        return sym(np.linalg.solve(top.T, bottom.T).T)

    def transformed(self, m: np.ndarray) -> "LagrangianFrame":
        return LagrangianFrame(np.asarray(m) @ self.columns, check=False)

    def __repr__(self):
        return f"LagrangianFrame(n={self.n})"


def _min_angle(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.min(subspace_angles(a, b)))


def transverse(a, b, tol: float = TRANSVERSE_TOL) -> bool:
    a = a.columns if isinstance(a, LagrangianFrame) else np.asarray(a)
    b = b.columns if isinstance(b, LagrangianFrame) else np.asarray(b)
    return _min_angle(a, b) >= tol


def relative_form(l1: LagrangianFrame, l2: LagrangianFrame, l: LagrangianFrame) -> np.ndarray:
    """Matrix of the quadratic form ``v -> omega(v, ell(v))`` on ``l1``.

    ``l`` transverse to ``l2`` is the graph of a linear map
    ``ell: l1 -> l2``; the matrix is expressed in the basis given by the
    columns of ``l1``.
    """
    if not transverse(l1, l2):
        raise NotTransverse("L1 and L2 intersect")
    if not transverse(l, l2):
        raise NotTransverse("L and L2 intersect")
    a, b, c = l1.columns, l2.columns, l.columns
    n = l1.n
    coeffs = np.linalg.solve(np.hstack([a, b]), c)
    x, y = coeffs[:n], coeffs[n:]
    ell = b @ y @ np.linalg.inv(x)
    return sym(a.T @ form_matrix(n) @ ell)


class Membership(enum.Enum):
    IN_POSITIVE_CONE = "InPositiveCone"
    OTHER_COMPONENT = "OtherComponent"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class ConeMembership:
    kind: Membership
    signature: tuple  # (positive count, negative count)


def cone_membership(l1, l2, l, rel_tol: float = 1e-10) -> ConeMembership:
    form = relative_form(l1, l2, l)
    eig = np.linalg.eigvalsh(form)
    largest = np.abs(eig).max()
    if largest == 0.0 or np.abs(eig).min() <= rel_tol * largest:
        kind = Membership.DEGENERATE
    elif eig.min() > 0:
        kind = Membership.IN_POSITIVE_CONE
    else:
        kind = Membership.OTHER_COMPONENT
    sig = (int(np.sum(eig > rel_tol * largest)), int(np.sum(eig < -rel_tol * largest)))
    return ConeMembership(kind, sig)


class Relation(enum.Enum):
    STRICTLY_UNDER = "StrictlyUnder"
    UNDER = "Under"
    INCOMPARABLE = "Incomparable"


@dataclass(frozen=True)
class ComparisonResult:
    relation: Relation
    witness_form: np.ndarray

    @property
    def strict(self) -> bool:
        return self.relation is Relation.STRICTLY_UNDER

    @property
    def under(self) -> bool:
        return self.relation is not Relation.INCOMPARABLE


def _classify(form: np.ndarray, slack: float = PSD_SLACK) -> Relation:
    scale = max(1.0, np.linalg.norm(form, 2))
    lo = min_eigenvalue(form)
    if lo > slack * 1e-3 * scale:
        return Relation.STRICTLY_UNDER
    if lo >= -slack * scale:
        return Relation.UNDER
    return Relation.INCOMPARABLE


def compare_under_vertical(l1: LagrangianFrame, l2: LagrangianFrame, vertical=None) -> ComparisonResult:
    """Order ``l1 <= l2`` relative to ``vertical`` (default: the fibre V).

    The witness is ``relative_form(l1, vertical, l2)``; for graphs over
    the horizontal it equals ``W2 - W1`` when ``vertical`` is V.
    """
    if vertical is None:
        vertical = LagrangianFrame.vertical(l1.n)
        l1 = LagrangianFrame.from_graph(l1.to_graph())
        l2 = LagrangianFrame.from_graph(l2.to_graph())
    else:
        if not (transverse(l1, vertical) and transverse(l2, vertical)):
            raise VerticalNotTransverse("frame is not transverse to the reference vertical")
    form = relative_form(l1, vertical, l2)
    return ComparisonResult(_classify(form), form)


# ---------------------------------------------------------------------------
# symplectic reduction


def symplectic_gram_schmidt(vectors: np.ndarray, form: Optional[np.ndarray] = None) -> np.ndarray:
    """Symplectic basis ``[e_1..e_m, f_1..f_m]`` of the span of ``vectors``.

    The span must be a symplectic subspace.  ``omega(e_i, f_j) = delta_ij``
    and all other pairings vanish.
    """
    vectors = np.array(vectors, dtype=float)
    if form is None:
        form = form_matrix(vectors.shape[0] // 2)
    work = [vectors[:, j] for j in range(vectors.shape[1])]
    es, fs = [], []
    while work:
        work.sort(key=lambda w: -np.linalg.norm(w))
        e = work.pop(0)
        if np.linalg.norm(e) < 1e-12:
            break
        e = e / np.linalg.norm(e)
        pair = [abs(e @ form @ w) for w in work]
        if not pair or max(pair) < 1e-12:
            raise ValueError("span is not symplectic")
        j = int(np.argmax(pair))
        f = work.pop(j)
        f = f / (e @ form @ f)
        es.append(e)
        fs.append(f)
        work = [w + (w @ form @ e) * f - (w @ form @ f) * e for w in work]
        work = [w for w in work if np.linalg.norm(w) > 1e-10]
    return np.column_stack(es + fs) if es else np.zeros((vectors.shape[0], 0))


@dataclass
class ReducedSpace:
    """Quotient ``F = E / R`` of a coisotropic subspace E by ``R = E^omega``.

    ``basis`` (2n x 2m) spans a symplectic complement of R inside E with
    ``basis^T J0 basis`` standard; ``kernel`` is an orthonormal basis of R.
    """

    ambient: SymplecticSpace
    basis: np.ndarray
    kernel: np.ndarray
    reduced_form: np.ndarray = field(init=False)

    def __post_init__(self):
        self.reduced_form = self.basis.T @ self.ambient.form_matrix @ self.basis

    @property
    def reduced_dim(self) -> int:
        return self.basis.shape[1]

    def project(self, v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """Coordinates of p(v) in the reduced symplectic basis.

        ``v`` may be a vector or a 2n x k matrix of column vectors, all in E.
        """
        v = np.asarray(v, dtype=float)
        full = np.hstack([self.kernel, self.basis])
        coeffs, *_ = np.linalg.lstsq(full, v, rcond=None)
        resid = np.linalg.norm(full @ coeffs - v)
        if resid > tol * max(1.0, np.linalg.norm(v)):
            raise ValueError(f"vector not in E (residual {resid:.2e})")
        return coeffs[self.kernel.shape[1]:]

    def lift(self, coords: np.ndarray) -> np.ndarray:
        return self.basis @ coords

    def reduce_lagrangian(self, frame) -> np.ndarray:
        """Frame of ``p(L cap E)``; Lagrangian in F whenever L is Lagrangian."""
        cols = frame.columns if isinstance(frame, LagrangianFrame) else np.asarray(frame)
        e_basis = np.hstack([self.kernel, self.basis])
        inter = intersect(cols, e_basis)
        img = self.project(inter)
        return orth(img) if img.size else img


def intersect(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of ``span(a) cap span(b)``."""
    a, b = orth(a), orth(b)
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    ker = null_space(np.hstack([a, -b]), rcond=tol)
    if ker.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    return orth(a @ ker[: a.shape[1]])


def symplectic_reduce(e_frame, r_frame, tol: float = 1e-10) -> ReducedSpace:
    """Symplectic reduction of the coisotropic span of ``e_frame``.

    ``r_frame`` must span ``E^omega`` and lie inside E.
    """
    e_frame = np.atleast_2d(np.asarray(e_frame, dtype=float))
    dim = e_frame.shape[0]
    r_frame = np.asarray(r_frame, dtype=float).reshape(dim, -1)
    space = SymplecticSpace(dim // 2)
    eo = orth(e_frame)
    ro = orth(r_frame) if r_frame.shape[1] else np.zeros((dim, 0))
    if ro.shape[1]:
        pairing = np.abs(ro.T @ space.form_matrix @ eo).max()
        if pairing > tol:
            raise NotCoisotropic(f"omega(R, E) = {pairing:.3e} does not vanish")
        outside = np.linalg.norm(ro - eo @ (eo.T @ ro))
        if outside > 1e-8:
            raise NotCoisotropic("R is not contained in E")
        comp = eo @ null_space(ro.T @ eo)
    else:
        comp = eo
    if comp.shape[1] % 2:
        raise NotCoisotropic("quotient has odd dimension")
    if eo.shape[1] + ro.shape[1] != dim:
        raise NotCoisotropic("dim E + dim R must equal 2n")
    basis = symplectic_gram_schmidt(comp, space.form_matrix) if comp.shape[1] else comp
    return ReducedSpace(space, basis, ro)


# ---------------------------------------------------------------------------
# betweenness and the bilinear sandwich


def _pinv_parts(d: np.ndarray, rel_cut: float = 1e-10):
    vals, vecs = np.linalg.eigh(sym(d))
    cut = rel_cut * max(np.abs(vals).max(initial=0.0), 1e-300)
    keep = vals > cut
    return vals[keep], vecs[:, keep], vecs[:, ~keep]


def between_margin(v, w_minus, w_plus):
    """Return ``(is_between, margin)`` for the vector ``v = (a, b)``.

    ``margin`` is the amount by which the criterion fails (<= 0 means
    inside): ``max(range_residual, u.D^+u - u.a)`` scaled by ``||u||``
    where ``u = b - W_- a`` and ``D = W_+ - W_-``.
    """
    w_minus = np.atleast_2d(np.asarray(w_minus, dtype=float))
    w_plus = np.atleast_2d(np.asarray(w_plus, dtype=float))
    n = w_minus.shape[0]
    v = np.asarray(v, dtype=float)
    a, b = v[:n], v[n:]
    d = sym(w_plus - w_minus)
    if min_eigenvalue(d) < -1e-10 * max(1.0, np.linalg.norm(d, 2)):
        raise NotOrdered("W+ - W- is not positive semidefinite")
    u = b - w_minus @ a
    unorm = np.linalg.norm(u)
    if np.linalg.norm(a) == 0.0:
        return (unorm == 0.0), (0.0 if unorm == 0.0 else np.inf)
    if unorm == 0.0:
        return True, -0.0
    vals, rng, ker = _pinv_parts(d)
    resid = np.linalg.norm(ker.T @ u)
    quad = float(np.sum((rng.T @ u) ** 2 / vals)) if vals.size else 0.0
    ua = float(u @ a)
    range_ok = resid <= 1e-9 * unorm
    quad_ok = quad <= ua + 1e-9
    margin = max(resid - 1e-9 * unorm, quad - ua) if range_ok else max(resid, quad - ua)
    return bool(range_ok and quad_ok), float(margin)


def between_check(v, w_minus, w_plus) -> bool:
    """Is there a Lagrangian graph ``W_- <= W <= W_+`` containing ``v``?"""
    return between_margin(v, w_minus, w_plus)[0]


@dataclass(frozen=True)
class PbilinHypotheses:
    upper_slack: float
    upper_witness: np.ndarray
    lower_slack: float
    lower_witness: np.ndarray

    @property
    def ok(self) -> bool:
        return self.upper_slack >= -1e-9 and self.lower_slack >= -1e-9


def pbilin_hypotheses(q_minus, q_plus, x, y, rel_cut: float = 1e-10) -> PbilinHypotheses:
    """Closed-form minima over K of the two hypothesis inequalities.

    Upper:  ``min_K  1/2 dQ(X-K) - dY+ . K``  must be >= 0.
    Lower:  ``min_K  1/2 dQ(X-K) + dY- . K``  must be >= 0.
    A component of ``dY+-`` in ``ker dQ`` makes the minimum ``-inf``.
    """
    q_minus, q_plus = np.atleast_2d(q_minus), np.atleast_2d(q_plus)
    x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    dq = sym(q_plus - q_minus)
    dy_plus = y - q_plus @ x
    dy_minus = y - q_minus @ x
    vals, rng, ker = _pinv_parts(dq, rel_cut)
    pinv = (rng / vals) @ rng.T if vals.size else np.zeros_like(dq)
    scale = 1.0 + np.linalg.norm(y) + np.linalg.norm(q_plus @ x) + np.linalg.norm(q_minus @ x)

    def one(dy, sign):
        off = ker @ (ker.T @ dy) if ker.shape[1] else np.zeros_like(dy)
        if np.linalg.norm(off) > 1e-9 * scale:
            return -np.inf, x + sign * 1e6 * off
        dy_r = dy - off
        if sign > 0:
            value = -(dy_r @ x) - 0.5 * dy_r @ pinv @ dy_r
            k = x + pinv @ dy_r
        else:
            value = dy_r @ x - 0.5 * dy_r @ pinv @ dy_r
            k = x - pinv @ dy_r
        return float(value), k

    up, kup = one(dy_plus, +1)
    lo, klo = one(dy_minus, -1)
    return PbilinHypotheses(up, kup, lo, klo)


def pbilin_construct(q_minus, q_plus, x, y, check: bool = True) -> np.ndarray:
    """Symmetric sigma with ``sigma X = Y`` inside the widened band.

    The band is ``Q_- - c0 dQ <= sigma <= Q_+ + c0 dQ`` with
    ``dQ = Q_+ - Q_-`` and ``c0 = sqrt(13)/3 - 5/6``.
    """
    q_minus = sym(np.atleast_2d(np.asarray(q_minus, float)))
    q_plus = sym(np.atleast_2d(np.asarray(q_plus, float)))
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    dq = q_plus - q_minus
    if min_eigenvalue(dq) < -PSD_SLACK * max(1.0, np.linalg.norm(dq, 2)):
        raise NotOrdered("Q+ - Q- is not positive semidefinite")
    if check:
        hyp = pbilin_hypotheses(q_minus, q_plus, x, y)
        if hyp.upper_slack < -1e-9:
            raise HypothesisViolated("upper inequality fails", hyp.upper_witness, "upper")
        if hyp.lower_slack < -1e-9:
            raise HypothesisViolated("lower inequality fails", hyp.lower_witness, "lower")

    vals, rng, _ = _pinv_parts(dq)
    if vals.size == 0:
        return q_plus.copy()
    root = np.sqrt(vals)
    # coordinates on range(dQ) in which dQ is the Euclidean norm
    xr = root * (rng.T @ x)
    yr = (rng.T @ (y - q_plus @ x)) / root
    mu = np.linalg.norm(xr)
    d = vals.size
    if mu == 0.0:
        eta = np.zeros((d, d))
    else:
        rot = _householder_to_e1(xr / mu)
        yhat = rot @ yr / mu
        s = np.diag(np.full(d, -0.5))
        s[0, :] = yhat
        s[:, 0] = yhat
        eta = rot.T @ s @ rot
    tau_r = root[:, None] * eta * root[None, :]
    return sym(q_plus + rng @ tau_r @ rng.T)


def _householder_to_e1(unit: np.ndarray) -> np.ndarray:
    """Orthogonal symmetric R with ``R @ unit = e1``."""
    d = unit.size
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = unit - e1
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return np.eye(d)
    w /= nw
    return np.eye(d) - 2.0 * np.outer(w, w)


def band_slacks(sigma, q_minus, q_plus, c0: float = C0):
    """Minimum eigenvalues of the two band gaps around ``sigma``."""
    dq = q_plus - q_minus
    lower = min_eigenvalue(sigma - (q_minus - c0 * dq))
    upper = min_eigenvalue(q_plus + c0 * dq - sigma)
    return lower, upper


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random symplectic matrix as a product of shears and a rotation-like factor."""
    a = rng.normal(size=(n, n)) * scale
    b = sym(rng.normal(size=(n, n))) * scale
    c = sym(rng.normal(size=(n, n))) * scale
    eye, zero = np.eye(n), np.zeros((n, n))
    if abs(np.linalg.det(a)) < 1e-3:
        a = a + np.eye(n)
    lin = np.block([[a, zero], [zero, np.linalg.inv(a).T]])
    up = np.block([[eye, b], [zero, eye]])
    lo = np.block([[eye, zero], [c, eye]])
    return lo @ lin @ up
