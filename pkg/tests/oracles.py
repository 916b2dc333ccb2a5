"""Independent reference computations used by the tests.

None of these import the package's numerical routines; each solves the
question the long way (convex program, bisection, double loops, dense
matrix powers).
"""

import itertools
import warnings

import cvxpy as cp
import numpy as np


def between_residual(a, b, w_minus, w_plus):
    """min ||W a - b|| over symmetric W with W- <= W <= W+ (SDP).

    Returns nan when the solver does not report an accurate optimum.
    """
    n = len(a)
    w = cp.Variable((n, n), symmetric=True)
    cons = [w - w_minus >> 0, w_plus - w >> 0]
    prob = cp.Problem(cp.Minimize(cp.norm(w @ a - b)), cons)
    with warnings.catch_warnings():
        # inaccurate solves are reported through the status below
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL)
    if prob.status != cp.OPTIMAL:
        return float("nan")
    return float(prob.value)


def standard_forward_bisect(eps, q, p, lo=-50.0, hi=50.0):
    """Solve p = -dS/dq(q, Q) for Q by bisection, S = (Q-q)^2/2 + eps/(4 pi^2) cos(2 pi q)."""
    dv = -eps / (2 * np.pi) * np.sin(2 * np.pi * q)

    def f(Q):
        return p + (q - Q) + dv   # p + dS/dq, decreasing in Q

    a, b = q + lo, q + hi
    for _ in range(200):
        m = 0.5 * (a + b)
        if f(m) > 0:
            a = m
        else:
            b = m
    Q = 0.5 * (a + b)
    return Q, Q - q


def lax_oleinik_naive(S, values, nodes, lbar, backward=True):
    """One grid sweep by explicit double loop over nodes and translates."""
    m = len(nodes)
    n = nodes.shape[1]
    out = np.empty(m)
    shifts = [np.array(k, float) for k in itertools.product((-1, 0, 1), repeat=n)]
    for j in range(m):
        best = np.inf if backward else -np.inf
        for i in range(m):
            for k in shifts:
                if backward:
                    c = values[i] + S.value(nodes[i] + k, nodes[j]) - lbar
                    best = min(best, c)
                else:
                    c = values[i] - (S.value(nodes[j] + k, nodes[i]) - lbar)
                    best = max(best, c)
        out[j] = best
    return out


def periodic_exponents(mats):
    """Lyapunov exponents of a periodic cocycle: log|eigenvalues| of one period / N."""
    prod = np.eye(mats.shape[-1])
    for m in mats:
        prod = m @ prod
    ev = np.linalg.eigvals(prod)
    return np.sort(np.log(np.abs(ev)))[::-1] / len(mats)


def action_sum(S, points):
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        total += float(S.value(a, b))
    return total


def green_slopes_2x2(m):
    """Green slopes at a hyperbolic fixed point: graphs of the eigenlines of m.

    Unstable line -> G+ (forward limit), stable line -> G-.
    """
    vals, vecs = np.linalg.eig(m)
    order = np.argsort(np.abs(vals))
    stable, unstable = vecs[:, order[0]].real, vecs[:, order[1]].real
    return stable[1] / stable[0], unstable[1] / unstable[0]
