"""Scenario execution behind the command line: disks, M-function, resolvent and checks."""

from __future__ import annotations

import csv
import json
import platform
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import matrixkit as mk
from . import resolvent as rv
from .config import ScenarioConfig
from .errors import ConeViolation
from .hamiltonian import fundamental_pair, greens_residual
from .mfunction import (
    coupling_profile,
    default_anchor,
    identity_m_difference,
    m_estimate,
    stable_weyl_solutions,
    tail_coupling,
    w_norm_bound,
)
from .weylsims import admissible, cone_margin, disk_at, nesting_report, stp, weight_on_grid

__version__ = "0.1.0"


@dataclass
class CheckResult:
    name: str
    lam: complex | None
    value: float
    tol: float | None
    passed: bool
    asserted: bool = True
    detail: str = ""


@dataclass
class Context:
    cfg: ScenarioConfig
    ts: object
    sys: object
    rot: object
    spec: object
    xi: complex
    output_times: list
    seeds: list = field(default_factory=list)
    _xi_pair: object = field(default=None, repr=False)
    _lock: object = field(default_factory=threading.Lock, repr=False)

    def xi_pair(self):
        """Weyl solutions at the anchor, built once and shared."""
        with self._lock:
            if self._xi_pair is None:
                traj = fundamental_pair(self.sys, self.ts, self.xi, rtol=self.cfg.rtol)
                self._xi_pair = stable_weyl_solutions(traj, self.rot)
            return self._xi_pair


def _index(ts, T):
    return int(np.searchsorted(ts.points, T + 1e-12 * max(1.0, abs(T)), side="right")) - 1


def prepare(cfg: ScenarioConfig, seed: int | None = None) -> Context:
    """Build the scale and problem, verify admissibility of ``lambda0`` and the cone."""
    seed = cfg.seed if seed is None else seed
    ts = cfg.build_timescale().truncate(max(cfg.horizons))
    prob = cfg.build_problem(ts)
    sys, rot = prob
    adm = admissible(sys, rot, ts, cfg.lambda0)
    if not adm.verified:
        raise ConeViolation(cfg.lambda0, adm.min_eig)
    xi = cfg.anchor if cfg.anchor is not None else default_anchor(sys, rot, ts, cfg.lambda0)
    span = ts.horizon - ts.t0
    times = {float(h) for h in cfg.horizons}
    times |= {ts.t0 + span / 2**j for j in range(5)}
    times = sorted(t for t in times if _index(ts, t) >= 1)
    ss = np.random.SeedSequence(seed)
    seeds = ss.spawn(len(cfg.lambdas) + 1)
    return Context(cfg, ts, sys, rot, prob.spec, xi, times, seeds)


def _cone_guard(ctx, lam):
    d = cone_margin(ctx.sys, ctx.rot, ctx.ts, lam, ctx.cfg.lambda0)
    if not d > 0:
        raise ConeViolation(lam, d)
    return d


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# disks ------------------------------------------------------------------------

def disk_rows(ctx: Context, threads: int = 1) -> list[dict]:
    def work(lam):
        _cone_guard(ctx, lam)
        traj = fundamental_pair(ctx.sys, ctx.ts, lam, rtol=ctx.cfg.rtol)
        rows = []
        for t in ctx.output_times:
            k = _index(ctx.ts, t)
            d = disk_at(traj, ctx.rot, k)
            row = {"t": float(ctx.ts.points[k]), "lam_re": lam.real, "lam_im": lam.imag,
                   "P_positive": int(d.P_positive), "P_min_eig": mk.min_eig(d.P)}
            n = d.n
            for i in range(n):
                for j in range(n):
                    c = d.center[i, j] if d.P_positive else np.nan
                    row[f"C{i}{j}_re"], row[f"C{i}{j}_im"] = float(np.real(c)), float(np.imag(c))
            ev = np.linalg.eigvalsh(d.radius) if d.P_positive else [np.nan] * n
            for i, e in enumerate(ev):
                row[f"R_eig{i}"] = float(e)
            rows.append(row)
        return rows

    return [r for rows in _map(work, ctx.cfg.lambdas, threads) for r in rows]


# M-function -------------------------------------------------------------------

def mfun_rows(ctx: Context, threads: int = 1) -> list[dict]:
    def work(lam):
        _cone_guard(ctx, lam)
        est = m_estimate(ctx.sys, ctx.ts, ctx.rot, lam, ctx.cfg.horizons, ctx.cfg.lambda0,
                         ctx.xi, rtol=ctx.cfg.rtol)
        row = {"lam_re": lam.real, "lam_im": lam.imag}
        n = est.M.shape[0]
        for i in range(n):
            for j in range(n):
                row[f"M{i}{j}_re"], row[f"M{i}{j}_im"] = est.M[i, j].real, est.M[i, j].imag
        row["cauchy_gap"] = est.cauchy_gap
        row["cone_delta"] = est.cone_margin
        row["contained_all"] = int(all(est.contained))
        return row

    return _map(work, ctx.cfg.lambdas, threads)


# resolvent --------------------------------------------------------------------

def _forcings(ctx, rng, n):
    kinds = ctx.cfg.forcings["kinds"]
    return [rv.make_forcing(kinds[i % len(kinds)], ctx.ts, n, rng)
            for i in range(ctx.cfg.forcings["count"])]


def _duality(ctx, kern, i, f, g):
    # Simpson is only O(h) across a jump, so continuous pairings use smooth forcings
    kinds = ctx.cfg.forcings["kinds"]
    if not ctx.ts.is_discrete and kinds[i % len(kinds)] == "indicator":
        return float("nan")
    return rv.duality_gap(kern, f, g)


def _resolvent_block(ctx, lam, pair, rng):
    kern = rv.green_kernel(pair)
    delta = cone_margin(ctx.sys, ctx.rot, ctx.ts, lam, ctx.cfg.lambda0)
    eps = ctx.cfg.forcings["eps_fraction"] * delta if np.isfinite(delta) else 0.5
    W0 = weight_on_grid(ctx.sys, ctx.rot, ctx.ts, ctx.cfg.lambda0)
    rows = []
    fs = _forcings(ctx, rng, ctx.sys.n)
    gs = _forcings(ctx, rng, ctx.sys.n)
    for i, (f, g) in enumerate(zip(fs, gs)):
        r = rv.apply_resolvent(kern, f)
        ra = rv.apply_adjoint_resolvent(kern, f)
        ni = rv.norm_inequalities(ctx.sys, ctx.ts, ctx.rot, r, lam, ctx.cfg.lambda0, eps,
                                  delta, kern.A, W0)
        tails = [r.tails[t] for t in sorted(r.tails)]
        Af = np.einsum("kij,kj->ki", kern.A, f)
        rows.append({
            "lam_re": lam.real, "lam_im": lam.imag, "forcing": i,
            "residual_max": r.residual_max,
            "rho_t0_zero": r.boundary["rho_t0_zero"],
            "chi_J_t0": r.boundary["chi_J_t0"],
            "tail_1": tails[0], "tail_2": tails[1], "tail_3": tails[2],
            "tail_decreasing": int(rv.tail_decreasing(r)),
            "adjoint_residual_max": ra.residual_max,
            "adjoint_rho_t0_zero": ra.boundary["rho_t0_zero"],
            "adjoint_phi_J_t0": ra.boundary["phi_J_t0"],
            "duality_gap": _duality(ctx, kern, i, f, g),
            "operator_residual": rv.operator_residual(ctx.sys, ctx.ts, r, lam, kern.A),
            "injectivity": rv.injectivity_norm(kern, r),
            "Af_norm": float(np.max(np.linalg.norm(Af, axis=1))),
            "delta": ni["delta"], "eps": ni["eps"],
            "ineq1_slack": ni["ineq1_slack"], "ineq2_slack": float(ni["ineq2_slack"]),
            "ineq2_squared_slack": ni["ineq2_squared_slack"],
            "ineq2_root_slack": float(ni["ineq2_root_slack"]),
        })
    return kern, rows


def resolve_rows(ctx: Context, threads: int = 1) -> list[dict]:
    def work(item):
        i, lam = item
        _cone_guard(ctx, lam)
        traj = fundamental_pair(ctx.sys, ctx.ts, lam, rtol=ctx.cfg.rtol)
        pair = stable_weyl_solutions(traj, ctx.rot)
        rng = np.random.default_rng(ctx.seeds[i])
        return _resolvent_block(ctx, lam, pair, rng)[1]

    out = _map(work, list(enumerate(ctx.cfg.lambdas)), threads)
    return [r for rows in out for r in rows]


# invariant suite --------------------------------------------------------------

def _lam_checks(ctx: Context, i: int, lam: complex) -> list[CheckResult]:
    tol = ctx.cfg.tolerances
    out: list[CheckResult] = []

    def add(name, value, t, passed, asserted=True, detail=""):
        out.append(CheckResult(name, lam, float(value), t, bool(passed), asserted, detail))

    delta = _cone_guard(ctx, lam)
    add("cone_margin", delta, 0.0, delta > 0)
    traj = fundamental_pair(ctx.sys, ctx.ts, lam, rtol=ctx.cfg.rtol)
    ts, n = ctx.ts, ctx.sys.n
    kT = len(ts.points) - 1
    lem = float(np.max(traj.symplectic_residual(relative=True)))
    add("lemma_identity", lem, tol["lemma"], lem <= tol["lemma"],
        detail="Z_hat* J Y_hat = J relative to ||Z|| ||Y||")
    add("lemma_closed_form", float(np.nanmax(traj.lemma_residual())), None, True,
        asserted=False, detail="Z_hat vs -J Y_hat^-* J relative to ||Z||")
    g = greens_residual(ts, traj.Yhat, traj.dYhat, traj.Zhat, traj.dZhat, 0, kT)
    scale = max(1.0, float(np.max(np.linalg.norm(traj.Yhat, ord=2, axis=(1, 2))
                                  * np.linalg.norm(traj.Zhat, ord=2, axis=(1, 2)))))
    gr = mk.norm(g) / scale
    add("greens_formula", gr, tol["greens"], gr <= tol["greens"], detail="relative to max ||Z|| ||Y||")
    gaps = [stp(traj, ctx.rot, _index(ts, t)).crosscheck_gap for t in ctx.output_times]
    add("block_crosscheck", max(gaps), tol["crosscheck"], max(gaps) <= tol["crosscheck"])
    disks = [disk_at(traj, ctx.rot, _index(ts, t)) for t in ctx.output_times]
    rng = np.random.default_rng(ctx.seeds[i])
    rep = nesting_report(disks, tol["nesting"], rng)
    nv = len(rep.p_violations) + len(rep.r_violations) + len(rep.containment_violations)
    add("nesting", nv, 0.0, rep.ok,
        detail=f"{len(rep.times)} disks, {rep.containment_checked} boundary tests, "
               f"{rep.unresolved} below centre resolution")
    est = m_estimate(ctx.sys, ts, ctx.rot, lam, ctx.cfg.horizons, ctx.cfg.lambda0, ctx.xi,
                     traj=traj)
    add("m_in_disks", sum(not c for c in est.contained), 0.0, all(est.contained))
    add("m_cauchy_gap", est.cauchy_gap, None, True, asserted=False)
    pair = stable_weyl_solutions(traj, ctx.rot)
    a, b = coupling_profile(pair)
    cp = float(max(np.nanmax(a), np.nanmax(b)))
    ar, br = coupling_profile(pair, relative=True)
    add("coupling_identities", cp, tol["coupling"], cp <= tol["coupling"],
        detail=f"relative {max(np.nanmax(ar), np.nanmax(br)):.3e}")
    wb = w_norm_bound(pair, ctx.rot, ts.horizon)
    add("w_norm_bound", wb.margin, 0.0, wb.ok, detail="min eigenvalue of rhs - lhs")
    if complex(lam) != complex(ctx.xi):
        md = identity_m_difference(ctx.sys, ts, ctx.rot, lam, ctx.xi, ts.horizon,
                                   ctx.cfg.lambda0, pairs=(pair, ctx.xi_pair()))
        add("m_difference", md.residual, None, True, asserted=False,
            detail=f"swapped {md.swapped:.3e}, tail {md.tail:.3e}")
    kern, rows = _resolvent_block(ctx, lam, pair, rng)
    if rows:
        def worst(key, fn=max):
            return fn(r[key] for r in rows)

        add("resolvent_residual", worst("residual_max"), tol["resolvent"],
            worst("residual_max") <= tol["resolvent"])
        bnd = max(worst("rho_t0_zero"), worst("chi_J_t0"))
        add("resolvent_boundary", bnd, tol["boundary"], bnd <= tol["boundary"])
        add("resolvent_tail_decreasing", sum(1 - r["tail_decreasing"] for r in rows), 0.0,
            all(r["tail_decreasing"] for r in rows))
        add("adjoint_residual", worst("adjoint_residual_max"), tol["resolvent"],
            worst("adjoint_residual_max") <= tol["resolvent"])
        abnd = max(worst("adjoint_rho_t0_zero"), worst("adjoint_phi_J_t0"))
        add("adjoint_boundary", abnd, tol["boundary"], abnd <= tol["boundary"])
        dg = float(np.nanmax([r["duality_gap"] for r in rows]))
        add("duality", dg, tol["duality"], dg <= tol["duality"])
        add("operator_residual", worst("operator_residual"), tol["operator"],
            worst("operator_residual") <= tol["operator"])
        inj = min(r["injectivity"] for r in rows if r["Af_norm"] > 0) if any(
            r["Af_norm"] > 0 for r in rows) else np.inf
        add("injectivity", inj, 1e-12, inj > 1e-12)
        s1 = worst("ineq1_slack", min)
        add("norm_ineq1", s1, tol["ineq1"], s1 >= -tol["ineq1"])
        for key in ("ineq2_slack", "ineq2_squared_slack", "ineq2_root_slack"):
            add("norm_" + key.replace("_slack", ""), worst(key, min), None, True, asserted=False)
    if i == 0:
        N = len(ts.points)
        pts = rng.integers(0, N - 1 if ts.is_discrete else N, size=(500, 2))
        sym = max(rv.kernel_symmetry_gap(kern, int(p), int(q)) for p, q in pts)
        add("kernel_symmetry", sym, tol["symmetry"], sym <= tol["symmetry"])
        dh = rv.dirac_hypothesis(kern)
        add("dirac_hypothesis_last", dh[-2] if ts.is_discrete else dh[-1], None, True,
            asserted=False)
    return out


def run_checks(ctx: Context, threads: int = 1) -> list[CheckResult]:
    out = []
    for res in _map(lambda item: _lam_checks(ctx, *item), list(enumerate(ctx.cfg.lambdas)),
                    threads):
        out.extend(res)
    return out


def check_rows(results: list[CheckResult]) -> list[dict]:
    return [{
        "check": r.name,
        "lam_re": np.nan if r.lam is None else r.lam.real,
        "lam_im": np.nan if r.lam is None else r.lam.imag,
        "value": r.value, "tol": np.nan if r.tol is None else r.tol,
        "passed": int(r.passed), "asserted": int(r.asserted), "detail": r.detail,
    } for r in results]


# output -----------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in cols])


def read_csv(path: Path) -> list[dict]:
    """Read a report back; numeric fields become floats (bit-exact for finite values)."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            out.append(row)
    return out


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def write_manifest(path: Path, ctx: Context, command: str, summary: dict, seed: int) -> None:
    doc = {
        "config_hash": ctx.cfg.config_hash,
        "scenario": ctx.cfg.name,
        "command": command,
        "seed": seed,
        "tolerances": ctx.cfg.tolerances,
        "results_summary": {k: _jsonable(v) for k, v in summary.items()},
        "versions": {"weylscale": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
