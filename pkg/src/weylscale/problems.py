"""Scalar problems written as Hamiltonian systems.

Each builder returns a :class:`Problem`, which unpacks as ``(sys, rot)`` and
also carries the :class:`ScalarProblemSpec` used for scalar reconstruction.
Coefficients are numbers or callables of ``t``; shifted values such as
``p(sigma(t))`` come from the second argument of the block callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    NonPositiveParams,
    NonPositiveW,
    VariantMismatch,
    ZeroCoefficient,
)
from .hamiltonian import CoefficientSystem
from .timescale import TimeScale
from .weylsims import RotationU, rotation_from_eta

ZERO_TOL = 1e-300


def _fn(c) -> Callable[[float], complex]:
    if callable(c):
        return c
    v = complex(c)
    return lambda t, _v=v: _v


def _leading(p, name):
    def f(t):
        v = complex(p(t))
        if abs(v) <= ZERO_TOL:
            raise ZeroCoefficient(f"{name} vanishes at t={t!r}")
        return v

    return f


def _weight(w):
    def f(t):
        v = complex(w(t))
        if not (abs(v.imag) <= 1e-14 * max(1.0, abs(v.real)) and v.real > 0):
            raise NonPositiveW(f"w(t) = {v!r} is not positive at t={t!r}")
        return v.real

    return f


@dataclass(frozen=True)
class ScalarProblemSpec:
    """Variant tag, coefficient callables and rotation angle ``eta``."""

    variant: str
    coeffs: dict
    eta: float
    order: int = 1
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Problem:
    sys: CoefficientSystem
    rot: RotationU
    spec: ScalarProblemSpec

    def __iter__(self):
        return iter((self.sys, self.rot))


def _validate_on(ts: TimeScale | None, checks):
    if ts is None:
        return
    pts = list(ts.points) + list(ts.sigma_values()[:-1])
    for t in pts:
        for c in checks:
            c(float(t))


def _diag(vals):
    return np.diag(np.asarray(vals, dtype=complex))


def _sub(n):
    return np.eye(n, k=-1, dtype=complex)


def build_even_order(p_list: Sequence, w, n: int, eta: float = 0.0, ts: TimeScale | None = None,
                     variant: str = "EvenOrder") -> Problem:
    """``sum_k (-1)^k (p_k v^{Delta^{k-1} nabla})^{nabla^{k-1} Delta} = lam w v``, ``k = 0..n``.

    ``y = (v, v^[1], ..., v^[n-1], v^[2n-1], ..., v^[n])``.
    """
    if n < 1 or len(p_list) != n + 1:
        raise LengthMismatch(f"need n+1 = {n + 1} coefficients, got {len(p_list)}")
    ps = [_fn(p) for p in p_list]
    ps[n] = _leading(ps[n], f"p{n}" if n > 1 else "p")
    wf = _weight(_fn(w))
    _validate_on(ts, [ps[n], wf])
    Z = np.zeros((n, n), dtype=complex)

    def A1(t, s):
        M = Z.copy()
        M[0, 0] = wf(t)
        return M

    def B1(t, s):
        return _diag([-ps[0](t)] + [-ps[k](s) for k in range(1, n)])

    def B4(t, s):
        M = Z.copy()
        M[n - 1, n - 1] = 1.0 / ps[n](s)
        return M

    S = _sub(n)
    sys = CoefficientSystem(
        n, A1, lambda t, s: Z, B1, lambda t, s: S, lambda t, s: S.T, B4, label=variant
    )
    spec = ScalarProblemSpec(variant, {"p": ps, "w": wf}, float(eta), n)
    return Problem(sys, rotation_from_eta(eta, n), spec)


def build_sturm_liouville(p, q, w, eta: float = 0.0, ts: TimeScale | None = None) -> Problem:
    """``-(p v^nabla)^Delta + q v = lam w v`` with ``y = (v, p^sigma v^Delta)``."""
    return build_even_order([q, p], w, 1, eta, ts, variant="SturmLiouville")


def build_fourth_order(p0, p1, p2, w, eta: float = 0.0, ts: TimeScale | None = None) -> Problem:
    """``(p2 v^{Delta nabla})^{nabla Delta} - (p1 v^nabla)^Delta + p0 v = lam w v``."""
    return build_even_order([p0, p1, p2], w, 2, eta, ts, variant="FourthOrder")


def poiseuille(lo: float = -1.0, hi: float = 1.0):
    """Plane Poiseuille ``V = 1 - x^2`` on ``[lo, hi]`` rescaled to ``[-1, 1]``;
    held constant outside.  Returns ``(V, V'')``."""
    c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def V(t):
        x = (min(max(t, lo), hi) - c) / h
        return 1.0 - x * x

    def Vdd(t):
        return -2.0 / h**2 if lo <= t <= hi else 0.0

    return V, Vdd


def couette(lo: float = -1.0, hi: float = 1.0):
    """Couette ``V = x`` on ``[lo, hi]`` rescaled to ``[-1, 1]``; held constant outside."""
    c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def V(t):
        return (min(max(t, lo), hi) - c) / h

    return V, (lambda t: 0.0)


PROFILES = {"poiseuille": poiseuille, "couette": couette}


def nabla_delta_fallback(V, ts: TimeScale | None):
    """``V^{nabla Delta}`` from grid values: the three-point formula on a discrete
    scale, a central second difference of step ``base_step`` otherwise."""
    if ts is not None and ts.is_discrete:
        pts = np.asarray(ts.points)
        left = np.concatenate([[ts.prepoint], pts[:-1]])

        def Vdd(t):
            k = int(np.argmin(np.abs(pts - t)))
            if k + 1 >= len(pts):
                k = len(pts) - 2
            tr, tl = pts[k + 1], left[k]
            mu, nu = tr - pts[k], pts[k] - tl
            return ((V(tr) - V(pts[k])) / mu - (V(pts[k]) - V(tl)) / nu) / mu

        return Vdd
    h = ts.base_step if ts is not None and ts.base_step else 1e-3
    return lambda t: (V(t + h) - 2 * V(t) + V(t - h)) / h**2


def build_orr_sommerfeld(a: float, R: float, V, Vdd=None, eta: float = 0.0,
                         ts: TimeScale | None = None) -> Problem:
    """``(-D^2+a^2)^2 u + i a R [V (-D^2+a^2) u + u D^2 V] = lam (-D^2+a^2) u``,
    ``D^2 = nabla Delta``, with ``y = ((-D^2+a^2)u, u, ((-D^2+a^2)u)^Delta, u^Delta)``."""
    if not (a > 0 and R > 0):
        raise NonPositiveParams(f"need a > 0 and R > 0, got a={a!r}, R={R!r}")
    Vf = _fn(V)
    Vddf = _fn(Vdd) if Vdd is not None else nabla_delta_fallback(Vf, ts)
    a2 = a * a
    I2 = np.eye(2, dtype=complex)
    Z2 = np.zeros((2, 2), dtype=complex)
    A1 = np.array([[1, 0], [0, 0]], dtype=complex)

    def B1(t, s):
        v, vdd = Vf(t).real, Vddf(t).real
        return np.array([[-a2 - 1j * a * R * v, -1j * a * R * vdd], [1.0, -a2]])

    sys = CoefficientSystem(
        2, lambda t, s: A1, lambda t, s: Z2, B1, lambda t, s: Z2, lambda t, s: Z2,
        lambda t, s: I2, label="OrrSommerfeld",
    )
    spec = ScalarProblemSpec("OrrSommerfeld", {"V": Vf, "Vdd": Vddf}, float(eta), 2,
                             {"a": float(a), "R": float(R)})
    return Problem(sys, rotation_from_eta(eta, 2), spec)


def w_formula(spec: ScalarProblemSpec, t: float, sigma: float, lam) -> np.ndarray:
    """The weight ``W(t, lam)`` written out per variant."""
    e = np.exp(1j * spec.eta)
    if spec.variant == "OrrSommerfeld":
        a, R = spec.params["a"], spec.params["R"]
        v, vdd = spec.coeffs["V"](t).real, spec.coeffs["Vdd"](t).real
        c, s = np.cos(spec.eta), np.sin(spec.eta)
        W = np.zeros((4, 4), dtype=complex)
        W[0, 0] = a * a * c - a * R * v * s - (lam * e).real
        W[0, 1] = 0.5 * (a * R * vdd * 1j * e - np.conj(e))
        W[1, 0] = -0.5 * (a * R * vdd * 1j * np.conj(e) + e)
        W[1, 1] = a * a * c
        W[2, 2] = W[3, 3] = c
        return W
    n = spec.order
    ps, w = spec.coeffs["p"], spec.coeffs["w"]
    d = [(e * (ps[0](t) - lam * w(t))).real]
    d += [(e * ps[k](sigma)).real for k in range(1, n)]
    d += [0.0] * (n - 1)
    pn = ps[n](sigma)
    d.append((e * pn).real / abs(pn) ** 2)
    return np.diag(np.asarray(d, dtype=complex))


def admissibility_margin(spec: ScalarProblemSpec, ts: TimeScale, lam0) -> float:
    """Smallest value over the grid of the quantities whose sign decides admissibility.

    For Orr-Sommerfeld this is ``rhs - Re(lam0 e^{i eta})`` from the displayed
    criterion (``-inf`` when ``cos eta <= 0``).
    """
    e = np.exp(1j * spec.eta)
    sig = ts.sigma_values()
    out = np.inf
    for k, t in enumerate(ts.points):
        s = t if not np.isfinite(sig[k]) else sig[k]
        if spec.variant == "OrrSommerfeld":
            a, R = spec.params["a"], spec.params["R"]
            c = np.cos(spec.eta)
            if c <= 0:
                return -np.inf
            v, vdd = spec.coeffs["V"](t).real, spec.coeffs["Vdd"](t).real
            rhs = a * a * c - a * R * v * np.sin(spec.eta) - (
                1 + (a * R * vdd) ** 2 + 2 * a * R * vdd * np.sin(2 * spec.eta)
            ) / (4 * a * a * c)
            out = min(out, rhs - (lam0 * e).real)
        else:
            ps, w = spec.coeffs["p"], spec.coeffs["w"]
            vals = [(e * (ps[0](t) - lam0 * w(t))).real]
            vals += [(e * ps[k](s)).real for k in range(1, spec.order + 1)]
            out = min(out, min(vals))
    return float(out)


def cone_contains(spec: ScalarProblemSpec, lam, lam0) -> bool:
    """Half-plane ``Re[(lam - lam0) e^{i eta}] < 0``."""
    return bool(((lam - lam0) * np.exp(1j * spec.eta)).real < 0)


# scalar reconstruction ------------------------------------------------------

def _fwd(ts, x):
    """Delta derivative on a discrete grid; NaN where sigma is unknown."""
    out = np.full_like(x, np.nan)
    out[:-1] = (x[1:] - x[:-1]) / ts.mu
    return out


def _bwd(ts, x):
    """Nabla derivative on a discrete grid; NaN at ``t0`` (rho(t0) is off-grid)."""
    out = np.full_like(x, np.nan)
    out[1:] = (x[1:] - x[:-1]) / np.diff(ts.points)
    return out


def _d(ts, x):
    from .resolvent import _five_point_derivative

    return _five_point_derivative(np.asarray(ts.points), x)


@dataclass
class ScalarReconstruction:
    v: np.ndarray
    quasi: dict
    residual: np.ndarray

    @property
    def residual_max(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else 0.0


def reconstruct_scalar(spec: ScalarProblemSpec, sys: CoefficientSystem, ts: TimeScale,
                       yhat: np.ndarray, lam, interior: int = 2) -> ScalarReconstruction:
    """Read the scalar solution and its quasi-derivatives from a hatted trajectory.

    ``yhat`` has shape ``(len(ts), 2n)``.  On discrete scales the scalar equation
    is evaluated literally from ``v`` alone with forward and backward
    differences.  On continuous scales each rung of the quasi-derivative ladder
    is checked with a five-point derivative; ``interior`` end points are dropped.
    """
    yhat = np.asarray(yhat, dtype=complex)
    if yhat.ndim != 2 or yhat.shape[1] != 2 * sys.n or sys.n != spec.order:
        raise VariantMismatch(f"trajectory of shape {yhat.shape} does not match {spec.variant}")
    n = spec.order
    t = np.asarray(ts.points)
    sig = np.where(np.isfinite(ts.sigma_values()), ts.sigma_values(), t)
    if spec.variant == "OrrSommerfeld":
        return _reconstruct_os(spec, ts, yhat, lam, interior)
    ps, w = spec.coeffs["p"], spec.coeffs["w"]
    v = yhat[:, 0]
    quasi = {k: yhat[:, k] for k in range(1, n)}
    for k in range(n):
        quasi[2 * n - 1 - k] = yhat[:, n + k]
    wv = np.array([w(x) for x in t])
    if ts.is_discrete:
        total = np.array([ps[0](x) for x in t]) * v - lam * wv * v
        for k in range(1, n + 1):
            inner = v
            for _ in range(k - 1):
                inner = _fwd(ts, inner)
            inner = _bwd(ts, inner) * np.array([ps[k](x) for x in t])
            for _ in range(k - 1):
                inner = _bwd(ts, inner)
            inner = _fwd(ts, inner)
            total = total + (-1) ** k * inner
        return ScalarReconstruction(v, quasi, np.abs(total))
    # continuous ladder
    res = []
    for k in range(1, n):
        prev = v if k == 1 else quasi[k - 1]
        res.append(_d(ts, prev) - quasi[k])
    pn = np.array([ps[n](x) for x in sig])
    prev = v if n == 1 else quasi[n - 1]
    res.append(pn * _d(ts, prev) - quasi[n])
    for k in range(1, n):
        pk = np.array([ps[n - k](x) for x in sig])
        res.append(pk * quasi[n - k] - _d(ts, quasi[n + k - 1]) - quasi[n + k])
    p0 = np.array([ps[0](x) for x in t])
    top = quasi[2 * n - 1]
    res.append(-_d(ts, top) + p0 * v - lam * wv * v)
    r = np.max(np.abs(np.array(res)), axis=0)
    if interior:
        r[:interior] = np.nan
        r[-interior:] = np.nan
    return ScalarReconstruction(v, quasi, r)


def _reconstruct_os(spec, ts, yhat, lam, interior):
    a, R = spec.params["a"], spec.params["R"]
    t = np.asarray(ts.points)
    V = np.array([spec.coeffs["V"](x).real for x in t])
    Vdd = np.array([spec.coeffs["Vdd"](x).real for x in t])
    u = yhat[:, 1]
    Lu_state = yhat[:, 0]
    quasi = {"Lu": Lu_state, "Lu_delta": yhat[:, 2], "u_delta": yhat[:, 3]}
    if ts.is_discrete:
        def L(x):
            return -_fwd(ts, _bwd(ts, x)) + a * a * x

        Lu = L(u)
        r = L(Lu) + 1j * a * R * (V * Lu + u * Vdd) - lam * Lu
        return ScalarReconstruction(u, quasi, np.abs(r))
    # ladder: Lu' = y3, u' = y4, -y3' = (lam - a^2 - i a R V) y1 - i a R V'' u, -y4' = y1 - a^2 u
    y1, y3, y4 = Lu_state, yhat[:, 2], yhat[:, 3]
    res = [
        _d(ts, y1) - y3,
        _d(ts, u) - y4,
        -_d(ts, y3) - ((lam - a * a - 1j * a * R * V) * y1 - 1j * a * R * Vdd * u),
        -_d(ts, y4) - (y1 - a * a * u),
    ]
    r = np.max(np.abs(np.array(res)), axis=0)
    if interior:
        r[:interior] = np.nan
        r[-interior:] = np.nan
    return ScalarReconstruction(u, quasi, r)
