"""Command-line batch driver.

Every subcommand reads one JSON config, writes ``report.json`` (sorted
keys, no timestamps) plus CSV data files into ``--out``, and records the
wall-clock time separately in ``meta.json``.

Config layout::

    {
      "map": {"family": "standard", "params": {"eps": 1.0}},
      "orbit": {"rho": [0], "period": 1},
      "tolerances": {"green": 1e-10, ...},
      "lyapunov": {"N": 10000},
      ...
    }

Exit codes: 0 success, 1 verification failed, 2 numerical
non-convergence, 3 invalid config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import ConvergenceError, InvalidConfig, SkippedAllZero, SolveDiverged, TwistLabError
from .maps import FAMILIES, AnnulusPoint, make_family

EXIT_OK, EXIT_FAILED, EXIT_NONCONVERGED, EXIT_INVALID = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "green": 1e-10,            # Green iterate increment
    "thm2": 1e-6,              # slack allowed in the Lyapunov lower bound
    "convergence": 1e-8,       # Lax-Oleinik sweep increment
    "subaction": 2e-8,         # subaction inequality slack
    "critical": 1e-8,          # gradient norm of critical configurations
    "cone": 1e-6,              # widening of the modified Green graphs
    "mane": 1e-8,              # forward-orbit identity of superdifferentials
    "slack": 1e-9,             # algebraic self-tests
}


# ---------------------------------------------------------------------------
# config handling


@dataclass
class Context:
    command: str
    config: dict
    tolerances: dict
    seed: int
    threads: int
    out: Optional[str]
    files: dict = field(default_factory=dict)
    _spawned: int = 0

    def rng(self) -> np.random.Generator:
        """Next child generator of the run's seed sequence (counted, so reproducible)."""
        child = np.random.SeedSequence(self.seed, spawn_key=(self._spawned,))
        self._spawned += 1
        return np.random.default_rng(child)

    def block(self, name: str) -> dict:
        blk = self.config.get(name, {})
        if not isinstance(blk, dict):
            raise InvalidConfig(f"config block {name!r} must be an object")
        return blk

    def tol(self, name: str) -> float:
        return self.tolerances[name]


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _validate_tolerances(config: dict) -> dict:
    tols = dict(DEFAULT_TOLERANCES)
    given = config.get("tolerances", {})
    if not isinstance(given, dict):
        raise InvalidConfig("'tolerances' must be an object")
    for key, val in given.items():
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise InvalidConfig(f"tolerance {key!r} must be a number")
        if not (math.isfinite(val) and val > 0):
            raise InvalidConfig(f"tolerance {key!r} must be positive and finite, got {val}")
        tols[key] = float(val)
    # tolerances given inside command blocks obey the same rule
    for name, blk in config.items():
        if isinstance(blk, dict) and name != "tolerances":
            for key, val in blk.items():
                if (key == "tol" or key.endswith("_tol")) and isinstance(val, (int, float)):
                    if not (math.isfinite(val) and val > 0):
                        raise InvalidConfig(f"{name}.{key} must be positive, got {val}")
    return tols


def _positive_int(blk: dict, key: str, default: int, where: str) -> int:
    val = blk.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int) or val <= 0:
        raise InvalidConfig(f"{where}.{key} must be a positive integer, got {val!r}")
    return val


def _build_map(ctx: Context):
    spec = ctx.config.get("map")
    if not isinstance(spec, dict):
        raise InvalidConfig("config needs a 'map' object with 'family' and 'params'")
    if spec.get("family") not in FAMILIES:
        raise InvalidConfig(f"unknown map family {spec.get('family')!r}; expected one of {FAMILIES}")
    try:
        return make_family(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad map parameters: {exc}") from exc


def _vector(val, n: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(val, dtype=float))
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise InvalidConfig(f"{what} must be a list of {n} finite numbers")
    return arr


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, (str, int)):
        return obj
    return str(obj)


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _add_csv(ctx: Context, name: str, header, rows) -> None:
    ctx.files[name] = csv_text(header, rows)


def _write_outputs(ctx: Context, report: dict, started: float) -> None:
    text = dumps_report(report)
    if ctx.out is None:
        sys.stdout.write(text)
        return
    os.makedirs(ctx.out, exist_ok=True)
    with open(os.path.join(ctx.out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    for name, content in ctx.files.items():
        mode = "wb" if isinstance(content, bytes) else "w"
        kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with open(os.path.join(ctx.out, name), mode, **kw) as fh:
            fh.write(content)
    meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "elapsed_seconds": time.perf_counter() - started, "version": __version__}
    with open(os.path.join(ctx.out, "meta.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# shared pieces


def _periodic_orbit(ctx: Context, S):
    from .variational import config_to_orbit, minimize_periodic
    blk = ctx.block("orbit")
    period = _positive_int(blk, "period", 1, "orbit")
    rho = _vector(blk.get("rho", [0] * S.n), S.n, "orbit.rho")
    starts = _positive_int(blk, "starts", 8, "orbit")
    cfg = minimize_periodic(S, rho, period, rng=ctx.rng(), starts=starts)
    orb = config_to_orbit(S, cfg, crit_tol=ctx.tol("critical"))
    return cfg, orb


def _orbit_rows(orb):
    rows = []
    for i in range(len(orb)):
        pt = orb.point(i)
        rows.append([i, *pt.q, *pt.p])
    return rows


def _orbit_header(n):
    return ["index"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]


def _green_rows(green, n):
    rows = []
    for j, g in enumerate(green):
        rows.append([j, *g.base.q, *g.base.p, *g.s_minus.ravel(), *g.s_plus.ravel(), g.p_dim,
                     g.q_plus_val, g.k_used, g.extrapolated])
    hdr = (["index"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
           + [f"s_minus_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
           + [f"s_plus_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
           + ["p_dim", "q_plus", "k_used", "extrapolated"])
    return hdr, rows


def _spectrum_csv(ctx, spec):
    _add_csv(ctx, "exponents.csv", ["index", "exponent"],
             [[i, e] for i, e in enumerate(spec.exponents)])


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, outputs)


def cmd_orbit_min(ctx: Context):
    from .variational import (check_strong_min, config_to_orbit, hessian_fixed_ends,
                              minimize_fixed_ends, minimize_periodic)
    S = _build_map(ctx)
    blk = ctx.block("orbit")
    out = {}
    if "start" in blk or "end" in blk:
        q0 = _vector(blk.get("start"), S.n, "orbit.start")
        q1 = _vector(blk.get("end"), S.n, "orbit.end")
        k = _positive_int(blk, "steps", 2, "orbit")
        if k < 2:
            raise InvalidConfig("orbit.steps must be at least 2")
        cfg = minimize_fixed_ends(S, q0, q1, k, rng=ctx.rng())
        hess = hessian_fixed_ends(S, cfg)
        out["hessian_min_eigenvalue"] = hess.min_eigenvalue
        out["vertical_transverse"] = hess.transverse
        passed = hess.min_eigenvalue >= -ctx.tol("critical")
    else:
        period = _positive_int(blk, "period", 1, "orbit")
        rho = _vector(blk.get("rho", [0] * S.n), S.n, "orbit.rho")
        cfg = minimize_periodic(S, rho, period, rng=ctx.rng(), starts=_positive_int(blk, "starts", 8, "orbit"))
        out["mean_action"] = cfg.info.get("mean_action")
        passed = True
    orb = config_to_orbit(S, cfg, crit_tol=ctx.tol("critical"))
    out["forward_residual"] = orb.meta.get("forward_residual")
    out["points"] = cfg.points
    sm_blk = ctx.block("strong_min")
    if sm_blk.get("enabled", True):
        lbar = float(sm_blk.get("lbar", cfg.info.get("mean_action", 0.0) if cfg.periodic else 0.0))
        sm = check_strong_min(S, cfg, lbar, competitors=_positive_int(sm_blk, "competitors", 200, "strong_min"),
                              rng=ctx.rng())
        out["strong_min"] = {"ok": sm.ok, "checked": sm.checked, "counterexample": sm.counterexample,
                             "lbar": lbar, "note": "competitor lengths sampled up to 2k"}
        passed = passed and sm.ok
    _add_csv(ctx, "orbit.csv", _orbit_header(S.n), _orbit_rows(orb))
    return passed, out


def cmd_green(ctx: Context):
    from .green import green_bundles_all, invariance_defect
    S = _build_map(ctx)
    _, orb = _periodic_orbit(ctx, S)
    blk = ctx.block("green")
    green = green_bundles_all(S, orb, tol=ctx.tol("green"),
                              k_max=_positive_int(blk, "k_max", 20000, "green"),
                              extrapolate=bool(blk.get("extrapolate", True)))
    hdr, rows = _green_rows(green, S.n)
    _add_csv(ctx, "green.csv", hdr, rows)
    defect = invariance_defect(S, orb, green)
    ordered = all(np.linalg.eigvalsh(g.delta_s).min() >= -g.cutoff for g in green)
    return ordered, {"points": [g.as_row() for g in green], "invariance_defect": defect,
                     "ordered": ordered}


def cmd_lyapunov(ctx: Context):
    from .green import lyapunov_spectrum
    S = _build_map(ctx)
    _, orb = _periodic_orbit(ctx, S)
    blk = ctx.block("lyapunov")
    N = _positive_int(blk, "N", 10000, "lyapunov")
    spec = lyapunov_spectrum(S, orb, N, threshold=blk.get("threshold"))
    _spectrum_csv(ctx, spec)
    return True, {"spectrum": spec.as_dict()}


def cmd_verify_thm1(ctx: Context):
    from .green import verify_thm1
    S = _build_map(ctx)
    _, orb = _periodic_orbit(ctx, S)
    blk = ctx.block("lyapunov")
    N = _positive_int(blk, "N", 10000, "lyapunov")
    rep = verify_thm1(S, orb, N=N, tol=ctx.tol("green"), threshold=blk.get("threshold"))
    spec = rep.data["spectrum"]
    _spectrum_csv(ctx, spec)
    hdr, rows = _green_rows(rep.data["green"], S.n)
    _add_csv(ctx, "green.csv", hdr, rows)
    return rep.passed, {"p": rep.data["p"], "expected_counts": rep.data["expected"],
                        "counts": [spec.pos_count, spec.zero_count, spec.neg_count],
                        "spectrum": spec.as_dict()}


def cmd_verify_thm2(ctx: Context):
    from .green import verify_thm2
    S = _build_map(ctx)
    _, orb = _periodic_orbit(ctx, S)
    blk = ctx.block("lyapunov")
    N = _positive_int(blk, "N", 10000, "lyapunov")
    try:
        rep = verify_thm2(S, orb, N=N, tol=ctx.tol("thm2"), threshold=blk.get("threshold"))
    except SkippedAllZero as exc:
        return True, {"skipped": True, "reason": str(exc)}
    spec = rep.data["spectrum"]
    _spectrum_csv(ctx, spec)
    hdr, rows = _green_rows(rep.data["green"], S.n)
    _add_csv(ctx, "green.csv", hdr, rows)
    return rep.passed, {"skipped": False, "lambda": rep.data["lambda"], "C": rep.data["C"],
                        "bound": rep.data["bound"], "slack": rep.data["slack"],
                        "spectrum": spec.as_dict(),
                        "note": "C is estimated on the orbit (a lower estimate of the supremum)"}


def cmd_weakkam(ctx: Context):
    from .weak_kam import Kind, conjugate_pair, estimate_lbar, solve_calibrated
    S = _build_map(ctx)
    blk = ctx.block("weakkam")
    res = _positive_int(blk, "resolution", 256 if S.n == 1 else 32, "weakkam")
    max_iters = _positive_int(blk, "max_iters", 10000, "weakkam")
    if blk.get("lbar") is None:
        lbar = estimate_lbar(S, _positive_int(blk, "lbar_period", 4, "weakkam"), rng=ctx.rng())
    else:
        lbar = float(blk["lbar"])
    u = solve_calibrated(S, Kind.BACKWARD, lbar, tol=ctx.tol("convergence"), max_iters=max_iters,
                         resolution=res, threads=ctx.threads)
    rep = conjugate_pair(S, u, lbar, tol=ctx.tol("convergence"), max_iters=max_iters)
    pairs = _positive_int(blk, "pairs", 10000, "weakkam")
    # random node pairs with integer translates; off-grid values would add interpolation error
    rng = ctx.rng()
    nodes = u.nodes
    a = rng.integers(0, len(nodes), pairs)
    b = rng.integers(0, len(nodes), pairs)
    shift = rng.integers(-1, 2, (pairs, S.n)).astype(float)
    sbar = S.value(nodes[a], nodes[b] + shift) - lbar
    worst = float(np.min(sbar - (u.values[b] - u.values[a])))
    passed = worst >= -ctx.tol("subaction")
    _add_csv(ctx, "u_minus.csv", [f"x{i + 1}" for i in range(S.n)] + ["value"],
             [[*nd, v] for nd, v in zip(u.nodes, u.values)])
    _add_csv(ctx, "u_plus.csv", [f"x{i + 1}" for i in range(S.n)] + ["value"],
             [[*nd, v] for nd, v in zip(rep.u_plus.nodes, rep.u_plus.values)])
    _add_csv(ctx, "coincidence.csv", [f"x{i + 1}" for i in range(S.n)],
             [list(nd) for nd in rep.coincidence_nodes()])
    ctx.files["u_minus.bin"] = u.to_bytes()
    ctx.files["u_plus.bin"] = rep.u_plus.to_bytes()
    return passed, {"lbar": lbar, "resolution": res, "iterations": u.info["iterations"],
                    "increment": u.residual, "calibration_defect": u.info["calibration_defect"],
                    "forward_iterations": rep.info["forward_iterations"],
                    "coincidence_size": int(len(rep.coincidence)),
                    "tol_coincidence": rep.tol_coincidence,
                    "subaction_worst_defect": worst, "pairs_checked": pairs}


def cmd_mane(ctx: Context):
    from .maps import forward
    from .variational import mane_potential
    S = _build_map(ctx)
    blk = ctx.block("mane")
    x = _vector(blk.get("x", [0.0] * S.n), S.n, "mane.x")
    y = _vector(blk.get("y", [0.5] * S.n), S.n, "mane.y")
    m = _positive_int(blk, "m", 1, "mane")
    lbar = float(blk.get("lbar", 0.0))
    res = mane_potential(S, x, y, m, lbar, starts=_positive_int(blk, "starts", 8, "mane"),
                         rng=ctx.rng(), threads=ctx.threads)
    # the superdifferentials are the momenta of one orbit: F^m(x, -sx) = (y, sy)
    pt = AnnulusPoint(x, -np.asarray(res.super_x, float))
    for _ in range(m):
        pt = forward(S, pt)
    err = float(max(np.abs(pt.q - y).max(), np.abs(pt.p - res.super_y).max()))
    passed = err <= ctx.tol("mane")
    _add_csv(ctx, "minimizer.csv", _orbit_header(S.n)[: S.n + 1],
             [[i, *q] for i, q in enumerate(res.minimizer.points)])
    return passed, {"value": res.value, "super_x": res.super_x, "super_y": res.super_y,
                    "orbit_identity_error": err}


def _samples(ctx: Context, S, blk: dict, base: Optional[AnnulusPoint] = None):
    """Sample set from a config block; ``base`` (an orbit point) fills in missing anchors."""
    from .geometry import invariant_circle_samples, product_samples, unstable_manifold_samples
    kind = blk.get("kind", "unstable_manifold")
    count = _positive_int(blk, "count", 400, "samples")
    if kind == "unstable_manifold":
        if "q" in blk or base is None:
            base = AnnulusPoint(_vector(blk.get("q"), S.n, "samples.q"),
                                _vector(blk.get("p"), S.n, "samples.p"))
        return unstable_manifold_samples(S, base, count=count,
                                         radius=float(blk.get("radius", 0.05)))
    if kind == "circle":
        focus = blk.get("focus", None if base is None else float(base.q[0]))
        p0 = blk.get("p0", 0.0 if base is None else float(base.p[0]))
        return invariant_circle_samples(float(p0), count,
                                        focus=None if focus is None else float(focus))
    if kind == "product":
        parts = blk.get("factors")
        if not isinstance(parts, list) or len(parts) != 2 or not hasattr(S, "first"):
            raise InvalidConfig("product samples need a product map and two factor sample specs")
        n1 = S.first.n
        b1 = b2 = None
        if base is not None:
            b1 = AnnulusPoint(base.q[:n1], base.p[:n1])
            b2 = AnnulusPoint(base.q[n1:], base.p[n1:])
        return product_samples(_samples(ctx, S.first, parts[0], b1),
                               _samples(ctx, S.second, parts[1], b2))
    if kind == "csv":
        path = blk.get("path")
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError, TypeError) as exc:
            raise InvalidConfig(f"cannot read samples file {path!r}: {exc}") from exc
        return data
    raise InvalidConfig(f"unknown samples kind {kind!r}")


def cmd_cone(ctx: Context):
    from .geometry import c1_isotropic_check, limit_contingent_cone
    S = _build_map(ctx)
    blk = ctx.block("cone")
    samples = _samples(ctx, S, ctx.block("samples"))
    if "base" in blk:
        base = _vector(blk["base"], 2 * S.n, "cone.base")
    else:
        base = samples[0]
    cone = limit_contingent_cone(samples, base, neighbor_count=_positive_int(blk, "neighbor_count", 5, "cone"),
                                 radii=blk.get("radius"))
    hdr = ([f"base_{i + 1}" for i in range(2 * S.n)] + [f"dir_{i + 1}" for i in range(2 * S.n)]
           + ["weight"])
    _add_csv(ctx, "cone.csv", hdr, cone.rows())
    return True, {"directions": cone.directions, "weights": cone.weights,
                  "radius_schedule": cone.radius_schedule,
                  "c1_isotropic": c1_isotropic_check(cone),
                  "note": "finite samples approximate the set; directions are estimates"}


def cmd_verify_cone(ctx: Context):
    from .geometry import verify_cone_theorem
    from .green import green_bundles_all
    S = _build_map(ctx)
    _, orb = _periodic_orbit(ctx, S)
    samples = _samples(ctx, S, ctx.block("samples"), orb.point(0) if len(orb) == 1 else None)
    green = green_bundles_all(S, orb, tol=ctx.tol("green"), extrapolate=True)
    blk = ctx.block("cone")
    rep = verify_cone_theorem(S, samples, green, tol=ctx.tol("cone"),
                              neighbor_count=_positive_int(blk, "neighbor_count", 5, "cone"),
                              radii=blk.get("radius"))
    rows = []
    for b in rep.per_base:
        for v, ok, margin in b["directions"]:
            rows.append([*b["base"], *v, ok, margin])
    hdr = ([f"base_{i + 1}" for i in range(2 * S.n)] + [f"dir_{i + 1}" for i in range(2 * S.n)]
           + ["between", "margin"])
    _add_csv(ctx, "cone_check.csv", hdr, rows)
    return rep.ok, {"checked": rep.checked, "passed": rep.passed, "pass_rate": rep.pass_rate,
                    "worst_margin": rep.worst_margin, "note": rep.note}


def cmd_pbilin_selftest(ctx: Context):
    from .selftest import pbilin_suite
    blk = ctx.block("selftest")
    n = _positive_int(blk, "instances", 1000, "selftest")
    res = pbilin_suite(ctx.rng(), n)
    return res.ok, res.summary()


def cmd_appendix_selftest(ctx: Context):
    from .selftest import appendix_suite
    blk = ctx.block("selftest")
    n = _positive_int(blk, "instances", 1000, "selftest")
    res = appendix_suite(ctx.rng(), n)
    return res.ok, res.summary()


COMMANDS: dict[str, tuple[Callable, str]] = {
    "orbit-min": (cmd_orbit_min, "variational.minimize"),
    "green": (cmd_green, "green_lyapunov.green_bundles"),
    "lyapunov": (cmd_lyapunov, "green_lyapunov.lyapunov_spectrum"),
    "verify-thm1": (cmd_verify_thm1, "green_lyapunov.verify_thm1"),
    "verify-thm2": (cmd_verify_thm2, "green_lyapunov.verify_thm2"),
    "weakkam": (cmd_weakkam, "weak_kam.solve_calibrated"),
    "mane": (cmd_mane, "variational.mane_potential"),
    "cone": (cmd_cone, "geometry.limit_contingent_cone"),
    "verify-cone": (cmd_verify_cone, "geometry.verify_cone_theorem"),
    "pbilin-selftest": (cmd_pbilin_selftest, "symplectic_core.pbilin_construct"),
    "appendix-selftest": (cmd_appendix_selftest, "symplectic_core.lagrangian_order"),
}

NEEDS_MAP = {c for c in COMMANDS if not c.endswith("selftest")}


# ---------------------------------------------------------------------------
# entry points


def run(command: str, config: dict, seed: int = 0, threads: int = 1,
        out: Optional[str] = None) -> tuple[int, dict]:
    """Run one subcommand; returns ``(exit_code, report)`` and writes files when ``out`` is set."""
    started = time.perf_counter()
    if command not in COMMANDS:
        raise InvalidConfig(f"unknown subcommand {command!r}")
    func, op = COMMANDS[command]
    report = {"command": command, "config": config, "seed": seed, "threads": threads,
              "operation": op}
    try:
        if not isinstance(config, dict):
            raise InvalidConfig("config must be a JSON object")
        if seed < 0 or seed >= 2 ** 64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        if threads < 1:
            raise InvalidConfig("threads must be >= 1")
        report["config_hash"] = config_hash(config)
        tols = _validate_tolerances(config)
        report["tolerances"] = tols
        if command in NEEDS_MAP and "map" not in config:
            raise InvalidConfig("config needs a 'map' object")
        ctx = Context(command, config, tols, seed, threads, out)
        passed, outputs = func(ctx)
        report["outputs"] = outputs
        report["passed"] = bool(passed)
        code = EXIT_OK if passed else EXIT_FAILED
    except InvalidConfig as exc:
        report.update(passed=False, error={"type": "InvalidConfig", "message": str(exc), "operation": "cli.run"})
        code = EXIT_INVALID
        ctx = Context(command, config if isinstance(config, dict) else {}, {}, 0, 1, out)
    except (ConvergenceError, SolveDiverged) as exc:
        report.update(passed=False, error={"type": type(exc).__name__, "message": str(exc), "operation": op})
        code = EXIT_NONCONVERGED
        ctx = Context(command, config, {}, seed, threads, out)
    except TwistLabError as exc:
        report.update(passed=False, error={"type": type(exc).__name__, "message": str(exc), "operation": op})
        code = EXIT_FAILED
        ctx = Context(command, config, {}, seed, threads, out)
    report["exit_code"] = code
    _write_outputs(ctx, report, started)
    if "error" in report:
        print(f"twistlab {command}: {report['error']['operation']}: {report['error']['type']}: "
              f"{report['error']['message']}", file=sys.stderr)
    return code, report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistlab", description="Symplectic twist map experiments.")
    parser.add_argument("--version", action="version", version=f"twistlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (optional for the self-tests)")
        p.add_argument("--out", help="output directory; report goes to stdout when omitted")
        p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"twistlab {args.command}: cli.load_config: {exc}", file=sys.stderr)
            return EXIT_INVALID
    elif args.command in NEEDS_MAP:
        print(f"twistlab {args.command}: cli.load_config: --config is required", file=sys.stderr)
        return EXIT_INVALID
    code, _ = run(args.command, config, seed=args.seed, threads=args.threads, out=args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
