"""Truncated Sturmian time scales.

Two kinds are supported: a continuous half-interval ``[t0, T]`` sampled on a
uniform output grid, and a strictly increasing sequence of isolated points
carrying an explicit pre-point ``rho(t0)``.  Mixtures of intervals and
isolated points are not Sturmian once the scale is unbounded above (an
interval endpoint next to a scattered point is one-sided dense), so they are
only handled by :func:`validate_sturmian`, which reports the offending points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .errors import EmptyInterval, IndexOutOfRange, MissingPrepoint, NonMonotone

CONTINUOUS = "continuous"
DISCRETE = "discrete"


class Jumps(NamedTuple):
    sigma: float
    rho: float
    mu: float
    nu: float


@dataclass(frozen=True, eq=False)
class TimeScale:
    """A time scale truncated at ``horizon``.

    ``points`` is the full grid ``t0 < t1 < ... <= T``.  For discrete scales
    ``mu[k] = t[k+1] - t[k]`` is only known for ``k < len(points) - 1``; the
    horizon point has no right neighbour inside the truncation.
    """

    kind: str
    points: np.ndarray
    prepoint: float | None = None
    base_step: float | None = None

    def __post_init__(self):
        self.points.setflags(write=False)

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def __len__(self):
        return len(self.points)

    @property
    def mu(self) -> np.ndarray:
        """Right graininess at ``points[:-1]``."""
        if self.is_discrete:
            return np.diff(self.points)
        return np.zeros(len(self.points) - 1)

    @property
    def nu(self) -> np.ndarray:
        """Left graininess at every grid point (``nu[0] = t0 - rho(t0)``)."""
        if self.is_discrete:
            return np.diff(self.points, prepend=self.prepoint)
        return np.zeros(len(self.points))

    def sigma_values(self) -> np.ndarray:
        """sigma(t_k) for every k; the horizon point maps to NaN on discrete scales."""
        if self.is_discrete:
            return np.append(self.points[1:], np.nan)
        return np.array(self.points, dtype=float)

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        k = int(np.searchsorted(self.points, t - atol))
        if k >= len(self.points) or abs(self.points[k] - t) > atol * max(1.0, abs(t)):
            raise IndexOutOfRange(f"t={t!r} is not a grid point")
        return k

    def truncate(self, T: float) -> "TimeScale":
        """The same scale cut at the last grid point not exceeding ``T``."""
        k = int(np.searchsorted(self.points, T + 1e-12 * max(1.0, abs(T)), side="right"))
        if k < 2:
            raise EmptyInterval(f"horizon {T!r} leaves fewer than two grid points")
        return TimeScale(self.kind, np.array(self.points[:k]), self.prepoint, self.base_step)

    def _check_index(self, k: int):
        if not 0 <= k < len(self.points):
            raise IndexOutOfRange(f"grid index {k} outside [0, {len(self.points)})")


def make_discrete(prepoint: float, points: Sequence[float]) -> TimeScale:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 1:
        raise NonMonotone("points must be a non-empty 1-d sequence")
    steps = np.diff(pts)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0))
        raise NonMonotone(f"non-increasing step between points[{bad}] and points[{bad + 1}]")
    if not prepoint < pts[0]:
        raise MissingPrepoint(f"prepoint {prepoint!r} must lie strictly left of t0={pts[0]!r}")
    return TimeScale(DISCRETE, pts, prepoint=float(prepoint))


def make_uniform_discrete(t0: float, T: float, h: float) -> TimeScale:
    """hZ-like grid t0, t0+h, ..., up to T, with prepoint t0-h."""
    if T <= t0:
        raise EmptyInterval(f"T={T!r} must exceed t0={t0!r}")
    m = int(round((T - t0) / h))
    return make_discrete(t0 - h, t0 + h * np.arange(m + 1))


def make_continuous(t0: float, T: float, base_step: float) -> TimeScale:
    if not T > t0:
        raise EmptyInterval(f"T={T!r} must exceed t0={t0!r}")
    if not base_step > 0:
        raise ValueError("base_step must be positive")
    m = int(np.ceil((T - t0) / base_step - 1e-9))
    pts = np.linspace(t0, T, m + 1)
    return TimeScale(CONTINUOUS, pts, base_step=float(base_step))


def jumps(ts: TimeScale, k: int) -> Jumps:
    """sigma, rho, mu, nu at grid index ``k``.

    On a discrete scale the horizon point has no known successor, so its
    sigma and mu are NaN.
    """
    ts._check_index(k)
    t = float(ts.points[k])
    if not ts.is_discrete:
        return Jumps(t, t, 0.0, 0.0)
    rho = ts.prepoint if k == 0 else float(ts.points[k - 1])
    if k + 1 < len(ts.points):
        sigma = float(ts.points[k + 1])
        mu = sigma - t
    else:
        sigma = mu = float("nan")
    return Jumps(sigma, rho, mu, t - rho)


def validate_sturmian(components) -> list[float]:
    """Check sigma(rho(t)) = rho(sigma(t)) = t on a finite union of pieces.

    ``components`` mixes closed intervals given as ``(a, b)`` pairs and
    isolated points given as numbers.  Returns the sorted list of violating
    points; an empty list means the set is Sturmian.  The overall minimum and
    maximum are not tested: the set stands for a truncation of a scale that
    continues on both sides, so their outer neighbours are unknown.
    """
    intervals = []
    isolated = []
    for c in components:
        if np.ndim(c) == 0:
            isolated.append(float(c))
        else:
            a, b = map(float, c)
            if b < a:
                raise NonMonotone(f"interval ({a}, {b}) is reversed")
            intervals.append((a, b) if b > a else None)
            if b == a:
                isolated.append(a)
    intervals = sorted(iv for iv in intervals if iv is not None)
    merged: list[list[float]] = []
    for a, b in intervals:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    isolated = sorted(
        {p for p in isolated if not any(a <= p <= b for a, b in merged)}
    )

    def in_interval(t, strict_left=False, strict_right=False):
        for a, b in merged:
            lo = a < t if strict_left else a <= t
            hi = t < b if strict_right else t <= b
            if lo and hi:
                return True
        return False

    # candidate points: everything except interval interiors
    cand = sorted(set(isolated) | {x for ab in merged for x in ab})
    pts = np.array(cand)

    def sigma(t):
        if in_interval(t, strict_right=True):
            return t
        right = pts[pts > t]
        return float(right[0]) if right.size else t

    def rho(t):
        if in_interval(t, strict_left=True):
            return t
        left = pts[pts < t]
        return float(left[-1]) if left.size else t

    inner = cand[1:-1]
    return [t for t in inner if sigma(rho(t)) != t or rho(sigma(t)) != t]


def delta_integral(ts: TimeScale, samples, a: int, b: int):
    """Delta integral of grid samples over ``[t_a, t_b)``.

    Discrete scales give the exact sum ``sum mu(t_k) f(t_k)``; continuous
    scales use composite Simpson on the output grid.  ``samples`` has the
    grid along axis 0 and arbitrary trailing shape.
    """
    n = len(ts.points)
    if not (0 <= a <= b < n):
        raise IndexOutOfRange(f"integration range [{a}, {b}] outside grid of {n} points")
    f = np.asarray(samples)
    if a == b:
        return np.zeros(f.shape[1:], dtype=f.dtype)
    if ts.is_discrete:
        mu = ts.mu[a:b].reshape((-1,) + (1,) * (f.ndim - 1))
        return np.sum(mu * f[a:b], axis=0)
    if b - a == 1:
        return 0.5 * (ts.points[b] - ts.points[a]) * (f[a] + f[b])
    if np.iscomplexobj(f):
        return delta_integral(ts, f.real, a, b) + 1j * delta_integral(ts, f.imag, a, b)
    return integrate.simpson(f[a : b + 1], x=ts.points[a : b + 1], axis=0)


def cumulative_delta_integral(ts: TimeScale, samples, reverse: bool = False) -> np.ndarray:
    """``F[k] = int_{t0}^{t_k} f(s) Delta s`` for every grid index ``k``.

    With ``reverse`` the integral runs over ``[t_k, T)`` instead, accumulated
    from the horizon so small tails are not swamped by the total.
    """
    f = np.asarray(samples)
    if ts.is_discrete:
        mu = ts.mu.reshape((-1,) + (1,) * (f.ndim - 1))
        out = np.zeros_like(f, dtype=np.result_type(f, float))
        if reverse:
            out[:-1] = np.cumsum((mu * f[:-1])[::-1], axis=0)[::-1]
        else:
            np.cumsum(mu * f[:-1], axis=0, out=out[1:])
        return out
    if np.iscomplexobj(f):
        return (cumulative_delta_integral(ts, f.real, reverse)
                + 1j * cumulative_delta_integral(ts, f.imag, reverse))
    x = ts.points
    if reverse:
        f, x = f[::-1], -x[::-1]
    if len(f) < 3:
        out = integrate.cumulative_trapezoid(f, x=x, axis=0, initial=0)
    else:
        out = integrate.cumulative_simpson(f, x=x, axis=0, initial=0)
    return out[::-1] if reverse else out
