"""Scenario configuration: a single JSON document describing one problem run.

Complex numbers may be given as numbers, strings such as ``"1+2j"`` or pairs
``[re, im]``.  Coefficients may also be ``{"expr": "1 + 0.5*sin(t)"}``, an
arithmetic expression in ``t`` over a fixed set of numpy functions.
"""

from __future__ import annotations

import ast
import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, WeylScaleError
from .problems import (
    PROFILES,
    Problem,
    build_even_order,
    build_fourth_order,
    build_orr_sommerfeld,
    build_sturm_liouville,
)
from .timescale import TimeScale, make_continuous, make_discrete

DEFAULT_TOLERANCES = {
    "discrete": {
        "lemma": 1e-10, "greens": 1e-10, "crosscheck": 1e-9, "coupling": 1e-10,
        "resolvent": 1e-9, "boundary": 1e-10, "nesting": 1e-8, "ineq1": 1e-8,
        "duality": 1e-9, "symmetry": 1e-10, "operator": 1e-9,
    },
    "continuous": {
        "lemma": 1e-6, "greens": 1e-7, "crosscheck": 1e-6, "coupling": 1e-6,
        "resolvent": 1e-5, "boundary": 1e-10, "nesting": 1e-8, "ineq1": 1e-8,
        "duality": 1e-6, "symmetry": 1e-10, "operator": 1e-5,
    },
}

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "arctan": np.arctan,
}
_CONSTS = {"pi": np.pi, "e": np.e, "j": 1j}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)

VARIANT_KEYS = {
    "SturmLiouville": {"p", "q", "w"},
    "FourthOrder": {"p0", "p1", "p2", "w"},
    "EvenOrder": {"n", "p", "w"},
    "OrrSommerfeld": {"a", "R", "V", "Vdd", "profile", "interval"},
}
TOP_KEYS = {"name", "problem", "timescale", "lambda0", "anchor", "lambdas", "horizons",
            "tolerances", "seed", "forcings", "output", "rtol", "description"}
TS_KEYS = {"kind", "t0", "T", "step", "prepoint", "points", "step_pattern"}
FORCING_KEYS = {"count", "kinds", "eps_fraction"}


def parse_complex(value, path: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a complex number, got {value!r}")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        s = value.strip().replace(" ", "")
        if "j" not in s and s.endswith("i"):
            s = s[:-1] + "j"
        try:
            return complex(s)
        except ValueError:
            raise ConfigError(path, f"cannot read {value!r} as a complex number") from None
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(parse_real(value[0], path + "[0]"), parse_real(value[1], path + "[1]"))
    raise ConfigError(path, f"expected a complex number, got {value!r}")


def parse_real(value, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a real number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(path, f"cannot read {value!r} as a real number") from None
    raise ConfigError(path, f"expected a real number, got {value!r}")


def compile_expr(src: str, path: str):
    """Compile an expression in ``t`` after checking it uses arithmetic only."""
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(path, f"bad expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(path, f"{type(node).__name__} is not allowed in {src!r}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                and node.id != "t":
            raise ConfigError(path, f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _FUNCS
        ):
            raise ConfigError(path, f"only {sorted(_FUNCS)} may be called in {src!r}")
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def f(t):
        return complex(eval(code, env, {"t": t}))

    return f


def parse_coefficient(value, path: str):
    if isinstance(value, dict):
        extra = set(value) - {"expr"}
        if extra or "expr" not in value:
            raise ConfigError(path, "a coefficient object needs exactly the key 'expr'")
        return compile_expr(str(value["expr"]), path + ".expr")
    return parse_complex(value, path)


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected an object, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")


@dataclass
class ScenarioConfig:
    name: str
    problem: dict
    timescale: dict
    lambda0: complex
    lambdas: list
    horizons: list
    anchor: complex | None = None
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    forcings: dict = field(default_factory=lambda: {"count": 20, "kinds": ["gaussian", "indicator", "polynomial"], "eps_fraction": 0.5})
    output: str | None = None
    rtol: float = 1e-10
    raw: dict = field(default_factory=dict, repr=False)
    source: str | None = None

    def build_timescale(self) -> TimeScale:
        return build_timescale(self.timescale)

    def build_problem(self, ts: TimeScale | None = None) -> Problem:
        return build_problem(self.problem, ts)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def build_timescale(d: dict) -> TimeScale:
    kind = d["kind"]
    if kind == "continuous":
        return make_continuous(d["t0"], d["T"], d["step"])
    if "points" in d:
        return make_discrete(d["prepoint"], d["points"])
    t0, T = d["t0"], d["T"]
    pattern = d.get("step_pattern") or [d["step"]]
    pts = [t0]
    i = 0
    while pts[-1] < T - 1e-12 * max(1.0, abs(T)):
        pts.append(pts[-1] + pattern[i % len(pattern)])
        i += 1
    return make_discrete(d["prepoint"], pts)


def build_problem(d: dict, ts: TimeScale | None = None) -> Problem:
    v = d["variant"]
    eta = d["eta"]
    try:
        if v == "SturmLiouville":
            return build_sturm_liouville(d["p"], d["q"], d["w"], eta, ts)
        if v == "FourthOrder":
            return build_fourth_order(d["p0"], d["p1"], d["p2"], d["w"], eta, ts)
        if v == "EvenOrder":
            return build_even_order(d["p"], d["w"], d["n"], eta, ts)
        V, Vdd = d.get("V"), d.get("Vdd")
        if d.get("profile") is not None:
            lo, hi = d.get("interval") or (-1.0, 1.0)
            V, Vdd = PROFILES[d["profile"]](lo, hi)
        return build_orr_sommerfeld(d["a"], d["R"], V, Vdd, eta, ts)
    except WeylScaleError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("problem", str(exc)) from exc


def _parse_problem(d) -> dict:
    _check_keys(d, {"variant", "eta"} | set().union(*VARIANT_KEYS.values()), "problem")
    v = d.get("variant")
    if v not in VARIANT_KEYS:
        raise ConfigError("problem.variant", f"must be one of {sorted(VARIANT_KEYS)}, got {v!r}")
    _check_keys(d, {"variant", "eta"} | VARIANT_KEYS[v], "problem")
    out = {"variant": v, "eta": parse_real(d.get("eta", 0.0), "problem.eta")}
    if v == "SturmLiouville":
        for k, dflt in (("p", 1.0), ("q", 0.0), ("w", 1.0)):
            out[k] = parse_coefficient(d.get(k, dflt), f"problem.{k}")
    elif v == "FourthOrder":
        for k, dflt in (("p0", 0.0), ("p1", 0.0), ("p2", 1.0), ("w", 1.0)):
            out[k] = parse_coefficient(d.get(k, dflt), f"problem.{k}")
    elif v == "EvenOrder":
        n = d.get("n")
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ConfigError("problem.n", f"must be a positive integer, got {n!r}")
        ps = d.get("p")
        if not isinstance(ps, list) or len(ps) != n + 1:
            raise ConfigError("problem.p", f"must list n+1 = {n + 1} coefficients")
        out["n"] = n
        out["p"] = [parse_coefficient(x, f"problem.p[{i}]") for i, x in enumerate(ps)]
        out["w"] = parse_coefficient(d.get("w", 1.0), "problem.w")
    else:
        for k in ("a", "R"):
            if k not in d:
                raise ConfigError(f"problem.{k}", "is required")
            out[k] = parse_real(d[k], f"problem.{k}")
            if not out[k] > 0:
                raise ConfigError(f"problem.{k}", f"must be positive, got {out[k]!r}")
        prof = d.get("profile")
        if prof is not None:
            if prof not in PROFILES:
                raise ConfigError("problem.profile", f"must be one of {sorted(PROFILES)}")
            if "V" in d:
                raise ConfigError("problem.V", "give either a profile or V, not both")
            iv = d.get("interval", [-1.0, 1.0])
            if not (isinstance(iv, list) and len(iv) == 2):
                raise ConfigError("problem.interval", "must be [lo, hi]")
            lo, hi = (parse_real(x, f"problem.interval[{i}]") for i, x in enumerate(iv))
            if not hi > lo:
                raise ConfigError("problem.interval", "needs lo < hi")
            out["profile"], out["interval"] = prof, (lo, hi)
        else:
            out["V"] = parse_coefficient(d.get("V", 0.0), "problem.V")
            out["Vdd"] = parse_coefficient(d["Vdd"], "problem.Vdd") if "Vdd" in d else None
    return out


def _parse_timescale(d) -> dict:
    _check_keys(d, TS_KEYS, "timescale")
    kind = d.get("kind")
    if kind not in ("continuous", "discrete"):
        raise ConfigError("timescale.kind", f"must be 'continuous' or 'discrete', got {kind!r}")
    out = {"kind": kind}
    if kind == "continuous":
        for k in ("t0", "T", "step"):
            if k not in d:
                raise ConfigError(f"timescale.{k}", "is required")
            out[k] = parse_real(d[k], f"timescale.{k}")
        if "points" in d or "prepoint" in d or "step_pattern" in d:
            raise ConfigError("timescale", "continuous scales take only t0, T and step")
        if not out["step"] > 0 or not out["T"] > out["t0"]:
            raise ConfigError("timescale", "needs step > 0 and T > t0")
        return out
    if "prepoint" not in d:
        raise ConfigError("timescale.prepoint", "discrete scales need rho(t0)")
    out["prepoint"] = parse_real(d["prepoint"], "timescale.prepoint")
    if "points" in d:
        pts = d["points"]
        if not isinstance(pts, list) or len(pts) < 2:
            raise ConfigError("timescale.points", "needs at least two points")
        out["points"] = [parse_real(x, f"timescale.points[{i}]") for i, x in enumerate(pts)]
        if np.any(np.diff(out["points"]) <= 0) or out["prepoint"] >= out["points"][0]:
            raise ConfigError("timescale.points", "must increase strictly after prepoint")
        return out
    for k in ("t0", "T"):
        if k not in d:
            raise ConfigError(f"timescale.{k}", "is required")
        out[k] = parse_real(d[k], f"timescale.{k}")
    if "step_pattern" in d:
        pat = d["step_pattern"]
        if not isinstance(pat, list) or not pat:
            raise ConfigError("timescale.step_pattern", "must be a nonempty list")
        out["step_pattern"] = [parse_real(x, f"timescale.step_pattern[{i}]") for i, x in enumerate(pat)]
        if min(out["step_pattern"]) <= 0:
            raise ConfigError("timescale.step_pattern", "steps must be positive")
    elif "step" in d:
        out["step"] = parse_real(d["step"], "timescale.step")
        if not out["step"] > 0:
            raise ConfigError("timescale.step", "must be positive")
    else:
        raise ConfigError("timescale.step", "discrete scales need step, step_pattern or points")
    if not out["T"] > out["t0"] or out["prepoint"] >= out["t0"]:
        raise ConfigError("timescale", "needs prepoint < t0 < T")
    return out


def parse_config_dict(raw: dict, source: str | None = None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("", "the document must be a JSON object")
    _check_keys(raw, TOP_KEYS, "")
    for k in ("problem", "timescale", "lambda0", "lambdas", "horizons"):
        if k not in raw:
            raise ConfigError(k, "is required")
    problem = _parse_problem(raw["problem"])
    tsd = _parse_timescale(raw["timescale"])
    lam0 = parse_complex(raw["lambda0"], "lambda0")
    if not isinstance(raw["lambdas"], list) or not raw["lambdas"]:
        raise ConfigError("lambdas", "must be a nonempty list")
    lambdas = [parse_complex(x, f"lambdas[{i}]") for i, x in enumerate(raw["lambdas"])]
    if not isinstance(raw["horizons"], list) or not raw["horizons"]:
        raise ConfigError("horizons", "must be a nonempty list")
    horizons = [parse_real(x, f"horizons[{i}]") for i, x in enumerate(raw["horizons"])]
    ts = build_timescale(tsd)
    for i, h in enumerate(horizons):
        if not ts.t0 < h <= ts.horizon + 1e-12 * max(1.0, abs(h)):
            raise ConfigError(f"horizons[{i}]", f"{h!r} is outside ({ts.t0!r}, {ts.horizon!r}]")
    anchor = parse_complex(raw["anchor"], "anchor") if raw.get("anchor") is not None else None
    kind = tsd["kind"]
    tol = dict(DEFAULT_TOLERANCES[kind])
    user_tol = raw.get("tolerances", {})
    _check_keys(user_tol, set(tol), "tolerances")
    for k, v in user_tol.items():
        tol[k] = parse_real(v, f"tolerances.{k}")
        if not tol[k] > 0:
            raise ConfigError(f"tolerances.{k}", "must be positive")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", f"must be a nonnegative integer, got {seed!r}")
    forc = {"count": 20, "kinds": ["gaussian", "indicator", "polynomial"], "eps_fraction": 0.5}
    fd = raw.get("forcings", {})
    _check_keys(fd, FORCING_KEYS, "forcings")
    if "count" in fd:
        if not isinstance(fd["count"], int) or fd["count"] < 0:
            raise ConfigError("forcings.count", "must be a nonnegative integer")
        forc["count"] = fd["count"]
    if "kinds" in fd:
        bad = [k for k in fd["kinds"] if k not in ("gaussian", "indicator", "polynomial")]
        if bad or not fd["kinds"]:
            raise ConfigError("forcings.kinds", f"unknown kinds {bad}")
        forc["kinds"] = list(fd["kinds"])
    if "eps_fraction" in fd:
        e = parse_real(fd["eps_fraction"], "forcings.eps_fraction")
        if not 0 < e < 1:
            raise ConfigError("forcings.eps_fraction", "must lie in (0, 1)")
        forc["eps_fraction"] = e
    rtol = parse_real(raw.get("rtol", 1e-10), "rtol")
    cfg = ScenarioConfig(
        name=str(raw.get("name", Path(source).stem if source else "scenario")),
        problem=problem, timescale=tsd, lambda0=lam0, lambdas=lambdas, horizons=horizons,
        anchor=anchor, tolerances=tol, seed=seed, forcings=forc,
        output=raw.get("output"), rtol=rtol, raw=copy.deepcopy(raw), source=source,
    )
    # builder-level validation (zero leading coefficient, nonpositive weight)
    cfg.build_problem(ts)
    return cfg


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"no such file {str(p)!r}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config_dict(raw, str(p))


def bundled_scenarios() -> list[Path]:
    """Paths of the scenario files shipped with the package."""
    from importlib.resources import files

    root = files("weylscale") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if str(p).endswith(".json"))
