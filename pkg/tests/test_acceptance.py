"""Acceptance criteria, one test each.

Each criterion prints a ``CRITERION k: PASS|FAIL`` line with its key
numbers and wall time; the lines are repeated in the pytest terminal
summary.  Run as a script (``python3 tests/test_acceptance.py``) to get
the lines without pytest.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import between_residual, green_slopes_2x2  # noqa: E402
from twistlab.errors import SkippedAllZero  # noqa: E402
from twistlab.geometry import (c1_isotropic_check, invariant_circle_samples,  # noqa: E402
                               limit_contingent_cone, product_samples, unstable_manifold_samples,
                               verify_cone_theorem)
from twistlab.green import (green_bundles_all, green_iterates, lyapunov_spectrum,  # noqa: E402
                            reduced_green_diagnostics, verify_thm1, verify_thm2)
from twistlab.maps import AnnulusPoint, OrbitSegment, integrable, iterate, product, standard  # noqa: E402
from twistlab.selftest import appendix_suite, pbilin_suite  # noqa: E402
from twistlab.symplectic import C0, between_check, sym  # noqa: E402
from twistlab.variational import config_to_orbit, mane_potential, minimize_periodic  # noqa: E402
from twistlab.weak_kam import (CostMatrix, conjugate_pair, contact_defect,  # noqa: E402
                               estimate_lbar, solve_calibrated)

GOLD = math.log((3 + math.sqrt(5)) / 2)
RESULTS = {}


def fixed(q, p):
    q, p = np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float))
    return OrbitSegment(q[None, :], p[None, :], periodic=True)


def record(k, checks, elapsed, budget, detail=""):
    """Store and print the verdict; ``checks`` maps a label to a bool."""
    failed = [name for name, ok in checks.items() if not ok]
    if elapsed > budget:
        failed.append(f"runtime {elapsed:.2f}s > {budget}s")
    line = f"CRITERION {k}: {'PASS' if not failed else 'FAIL'} ({elapsed:.2f}s) {detail}".rstrip()
    if failed:
        line += " | failed: " + ", ".join(failed)
    RESULTS[k] = line
    print(line)
    return not failed, line


# ---------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    S, orb = integrable(1), fixed(0.3, 0.0)
    its = green_iterates(S, orb, 1000)
    k = np.arange(1, 1001)
    err = float(np.max(np.abs(np.array([w[0, 0] for w in its.forward]) - 1 / k)))
    spec = lyapunov_spectrum(S, orb, 10_000)
    rep = verify_thm1(S, orb, N=10_000)
    el = time.perf_counter() - t0
    return record(1, {"|s_k - 1/k| <= 1e-12": err <= 1e-12,
                      "spectrum (0,0)": spec.zero_count == 2 and np.abs(spec.exponents).max() <= 2e-3,
                      "thm1 with p=1": rep.passed and rep.data["p"] == 1},
                  el, 1.0, f"max|s_k-1/k|={err:.1e} max|lambda|={np.abs(spec.exponents).max():.1e}")


def criterion_2():
    t0 = time.perf_counter()
    S, orb = standard(1.0), fixed(0.5, 0.0)
    spec = lyapunov_spectrum(S, orb, 10_000)
    exp_err = float(np.max(np.abs(spec.exponents - [GOLD, -GOLD])))
    g = green_bundles_all(S, orb, tol=1e-13)[0]
    gm, gp = green_slopes_2x2(np.array([[2.0, 1.0], [1.0, 1.0]]))
    g_err = max(abs(g.s_minus[0, 0] - gm), abs(g.s_plus[0, 0] - gp))
    t1 = verify_thm1(S, orb, N=10_000)
    t2 = verify_thm2(S, orb, N=10_000)
    el = time.perf_counter() - t0
    return record(2, {"exponents within 1e-6": exp_err <= 1e-6,
                      "Green slopes within 1e-8": g_err <= 1e-8,
                      "thm1 with p=0": t1.passed and t1.data["p"] == 0,
                      "thm2 slack and bound": t2.data["slack"] >= -1e-6 and t2.data["bound"] > 0},
                  el, 1.0, f"exp err={exp_err:.1e} green err={g_err:.1e} "
                           f"bound={t2.data['bound']:.4f} lambda={t2.data['lambda']:.4f}")


def criterion_3():
    t0 = time.perf_counter()
    S = product(standard(1.0), integrable(1))
    orb = fixed([0.5, 0.3], [0.0, 0.0])
    N = 100_000
    rep = verify_thm1(S, orb, N=N, threshold=10 / N)
    lam = rep.data["spectrum"].exponents
    shape = bool(abs(lam[0] - GOLD) <= 1e-6 and abs(lam[3] + GOLD) <= 1e-6
                 and np.all(np.abs(lam[1:3]) <= 10 / N))
    tol = 1e-8
    diag = reduced_green_diagnostics(S, orb, rep.data["green"], tol=tol, k_check=10)
    el = time.perf_counter() - t0
    return record(3, {"thm1 with p=1": rep.passed and rep.data["p"] == 1,
                      "spectrum {l,0,0,-l}": shape,
                      "reduced order chain": diag.transverse_ok and diag.order_ok,
                      "reduced limits at 10 tol": diag.limits_ok},
                  el, 30.0, f"exponents={np.round(lam, 8).tolist()} "
                            f"limit dist={diag.limit_distance:.1e}")


def thm2_cases():
    for eps in (0.3, 0.7, 1.2):
        for N in range(1, 6):
            for rho in range(N):
                if math.gcd(rho, N) == 1:
                    yield eps, rho, N


def criterion_4():
    t0 = time.perf_counter()
    worst, skipped, bad = np.inf, [], []
    for i, (eps, rho, N) in enumerate(thm2_cases()):
        S = standard(eps)
        cfg = minimize_periodic(S, [rho], N, rng=i)
        orb = config_to_orbit(S, cfg)
        try:
            rep = verify_thm2(S, orb, N=10_000, threshold=1e-9)
        except SkippedAllZero:
            skipped.append((eps, rho, N))
            continue
        worst = min(worst, rep.data["slack"])
        if not rep.passed:
            bad.append((eps, rho, N, rep.data["slack"]))
    cases = len(list(thm2_cases()))
    el = time.perf_counter() - t0
    return record(4, {"lambda >= bound - 1e-6 in every case": not bad,
                      "no case skipped": not skipped},
                  el, 120.0, f"{cases} orbits, worst slack={worst:.3e}")


def criterion_5():
    t0 = time.perf_counter()
    res = appendix_suite(np.random.default_rng(20240501), instances=1000)
    el = time.perf_counter() - t0
    fails = {k: len(v) for k, v in res.failures.items()}
    return record(5, {"zero failures": res.ok and res.instances == 1000}, el, 30.0,
                  f"instances={res.instances} failures={fails}")


def criterion_6():
    t0 = time.perf_counter()
    res = pbilin_suite(np.random.default_rng(20240502), instances=1000)
    w = res.worst
    root = abs(0.75 * C0 ** 2 + 1.25 * C0 - 9 / 16)
    el = time.perf_counter() - t0
    return record(6, {"band >= -1e-9": w["min_band_eigenvalue"] >= -1e-9,
                      "residual <= 1e-10": w["max_residual"] <= 1e-10,
                      "no failures": res.ok,
                      "c0 root to 1e-15": root <= 1e-15},
                  el, 10.0, f"min band eig={w['min_band_eigenvalue']:.2e} "
                            f"max residual={w['max_residual']:.1e} c0 root={root:.1e}")


def criterion_7():
    t0 = time.perf_counter()
    eps = 0.5
    S = standard(eps)
    lbar = -eps / (4 * np.pi ** 2)
    res = 256
    lbar_err = abs(estimate_lbar(S, 3, rng=0) - lbar)
    u = solve_calibrated(S, lbar=lbar, resolution=res, tol=1e-8, max_iters=10_000)
    wk = conjugate_pair(S, u, lbar)
    # subaction inequality on random node pairs, all integer translates in the cost
    cm = CostMatrix(S, res, lbar)
    rng = np.random.default_rng(7)
    i, j = rng.integers(0, res, 10_000), rng.integers(0, res, 10_000)
    gap = cm.cost[i, j] - (u.values[j] - u.values[i])
    half = u.index_of([0.5])
    # the Mather set here is the fixed point q = 1/2 (minimal average action)
    fixed_defect = abs(float(contact_defect(S, u, [0.5], [0.5], lbar)[0]))
    el = time.perf_counter() - t0
    return record(7, {"estimated lbar matches closed form": lbar_err <= 1e-10,
                      "increment <= 1e-8 within 1e4 sweeps":
                      u.residual <= 1e-8 and u.info["iterations"] <= 10_000,
                      "subaction on 1e4 pairs within 2e-8": gap.min() >= -2e-8,
                      "coincidence contains q=1/2": half in set(wk.coincidence.tolist()),
                      "Mather orbit in contact set": fixed_defect <= 2e-8},
                  el, 120.0, f"sweeps={u.info['iterations']} min gap={gap.min():.1e} "
                             f"contact defect={fixed_defect:.1e}")


def criterion_8():
    t0 = time.perf_counter()
    S0 = integrable(1)
    x, y = np.array([0.2]), np.array([1.7])
    closed = max(abs(mane_potential(S0, x, y, m, starts=2, rng=0).value - 1.5 ** 2 / (2 * m))
                 for m in range(1, 21))
    S = standard(0.6)
    rng = np.random.default_rng(8)
    tri = np.inf
    for _ in range(200):
        a, b, c = rng.uniform(0, 2, (3, 1))
        m1, m2 = (int(k) for k in rng.integers(1, 4, 2))
        lhs = mane_potential(S, a, c, m1 + m2, rng=0).value
        rhs = mane_potential(S, a, b, m1, rng=0).value + mane_potential(S, b, c, m2, rng=0).value
        tri = min(tri, rhs - lhs)
    ident = 0.0
    for k in range(5):
        a, b = rng.uniform(0, 1.5, (2, 1))
        m = 2 + k
        r = mane_potential(S, a, b, m, rng=0)
        end = iterate(S, AnnulusPoint(a, -r.super_x), m)
        ident = max(ident, float(np.max(np.abs(np.concatenate([end.q - b, end.p - r.super_y])))))
    el = time.perf_counter() - t0
    return record(8, {"closed form to 1e-9": closed <= 1e-9,
                      "triangle inequality slack 1e-8": tri >= -1e-8,
                      "orbit identity to 1e-8": ident <= 1e-8},
                  el, 60.0, f"closed err={closed:.1e} min triangle gap={tri:.1e} "
                            f"identity err={ident:.1e}")


def criterion_9():
    t0 = time.perf_counter()
    reports = {}
    S = standard(1.0)
    orb = fixed(0.5, 0.0)
    reports["standard"] = verify_cone_theorem(
        S, unstable_manifold_samples(S, orb.point(0), count=400),
        green_bundles_all(S, orb, extrapolate=True), tol=1e-6)
    S = integrable(1)
    orb = fixed(0.3, 0.0)
    circle = invariant_circle_samples(0.0, 200, focus=0.3)
    reports["integrable"] = verify_cone_theorem(S, circle, green_bundles_all(S, orb, extrapolate=True),
                                                tol=1e-6)
    iso = c1_isotropic_check(limit_contingent_cone(circle, orb.point(0).vector))
    S = product(standard(1.0), integrable(1))
    orb = fixed([0.5, 0.3], [0.0, 0.0])
    samples = product_samples(unstable_manifold_samples(S.first, AnnulusPoint([0.5], [0.0]), count=120),
                              invariant_circle_samples(0.0, 60, focus=0.3))
    reports["product"] = verify_cone_theorem(S, samples, green_bundles_all(S, orb, extrapolate=True),
                                             tol=1e-6)
    el = time.perf_counter() - t0
    checks = {f"{k} 100%": r.ok and r.checked > 0 for k, r in reports.items()}
    checks["c1 isotropic on circle"] = iso
    return record(9, checks, el, 60.0,
                  " ".join(f"{k}={r.passed}/{r.checked}" for k, r in reports.items()))


def between_instance(rng):
    n = int(rng.integers(1, 4))
    wm = sym(rng.normal(size=(n, n)))
    rank = n if rng.random() < 0.6 else int(rng.integers(0, n))
    f = rng.normal(size=(n, rank))
    wp = wm + f @ f.T
    a = rng.normal(size=n)
    if rng.random() < 0.5:
        c = rng.uniform(0, 1, rank)
        b = (wm + f @ np.diag(c) @ f.T) @ a
    else:
        b = wm @ a + rng.normal(size=n)
    return a, b, wm, wp


def criterion_10():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    disagree, ambiguous, done, inside = 0, 0, 0, 0
    while done < 200:
        a, b, wm, wp = between_instance(rng)
        r = between_residual(a, b, wm, wp)
        if not np.isfinite(r) or 1e-6 < r < 1e-3:
            ambiguous += 1
            continue
        truth = r <= 1e-6
        inside += truth
        disagree += int(between_check(np.concatenate([a, b]), wm, wp) != truth)
        done += 1
    el = time.perf_counter() - t0
    return record(10, {"zero disagreements": disagree == 0,
                       "few redraws": ambiguous <= 20}, el, np.inf,
                  f"200 instances ({inside} between), disagreements={disagree}, "
                  f"ambiguous redrawn={ambiguous}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 11)])
def test_acceptance(crit):
    ok, line = crit()
    assert ok, line


if __name__ == "__main__":
    results = [crit()[0] for crit in CRITERIA]
    sys.exit(0 if all(results) else 1)
