"""Green's kernels and the resolvent ``R_lam f = int G(., s) A(s) f(s) Delta s``.

``G(t, s) = psi(t) chi*(s)`` for ``s < t`` and ``phi(t) zeta*(s) + N(t) delta_ts``
for ``t <= s``.  On a scattered point the Dirac term carries weight
``1 / mu(t)``, so it contributes ``N(t) A(t) f(t)``; on dense points ``N = 0``.
The integrals over ``[t, infinity)`` are truncated at the grid horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matrixkit as mk
from .errors import ConeViolation, DimensionMismatch, EpsilonOutOfRange, IndexOutOfRange
from .hamiltonian import J_matrix
from .mfunction import WeylSolutionPair
from .timescale import TimeScale, cumulative_delta_integral, delta_integral
from .weylsims import RotationU, cone_margin, weight_on_grid

TAIL_FLOOR = 1e-12


def _hconj(X):
    return np.conj(np.swapaxes(X, -1, -2))


def _sig(ts, k):
    if ts.is_discrete:
        return float(ts.points[k + 1]) if k + 1 < len(ts.points) else float(ts.points[k])
    return float(ts.points[k])


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Kernel data for one ``lam``: the Weyl pair, ``phi``, ``chi`` and ``N`` on the grid."""

    pair: WeylSolutionPair
    A: np.ndarray
    N: np.ndarray
    pencil: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def lam(self):
        return self.pair.lam

    @property
    def ts(self) -> TimeScale:
        return self.pair.ts

    @property
    def sys(self):
        return self.pair.traj.sys

    @property
    def n(self):
        return self.pair.traj.n


def green_kernel(pair: WeylSolutionPair, lam0=None, rot=None) -> GreenKernel:
    """Sample ``A``, ``lam A + B`` and ``N`` for the pair's grid.

    When ``lam0`` and ``rot`` are given the cone condition is enforced.
    """
    traj = pair.traj
    ts, sys, lam = traj.ts, traj.sys, traj.lam
    if lam0 is not None and rot is not None:
        d = cone_margin(sys, rot, ts, lam, lam0)
        if not d > 0:
            raise ConeViolation(lam, d)
    m = 2 * sys.n
    A = np.array([sys.A(t, _sig(ts, k)) for k, t in enumerate(ts.points)])
    P = np.array([sys.pencil(t, _sig(ts, k), lam) for k, t in enumerate(ts.points)])
    N = np.zeros((len(ts.points), m, m), dtype=complex)
    for k, sl in enumerate(traj.slices):
        if sl is not None:
            N[k] = sl.N
    return GreenKernel(pair, A, N, P)


def kernel_eval(kern: GreenKernel, k: int, j: int, adjoint: bool = False) -> np.ndarray:
    """``G(t_k, s_j)`` (or ``G~``) without the Dirac part."""
    ts = kern.ts
    ts._check_index(k)
    ts._check_index(j)
    p = kern.pair
    if not adjoint:
        if j < k:
            return p.psi[k] @ p.chi[j].conj().T
        return p.phi[k] @ p.zeta[j].conj().T
    if k < j:
        return p.chi[k] @ p.psi[j].conj().T
    return p.zeta[k] @ p.phi[j].conj().T


def kernel_symmetry_gap(kern: GreenKernel, k: int, j: int) -> float:
    """``||G~(t_k, s_j) - G*(s_j, t_k)||``."""
    return mk.norm(kernel_eval(kern, k, j, adjoint=True) - kernel_eval(kern, j, k).conj().T)


@dataclass
class ResolventResult:
    f: np.ndarray
    Rf: np.ndarray
    Rf_hat: np.ndarray
    residual: np.ndarray
    boundary: dict
    tails: dict
    adjoint: bool = False
    residual_fd: float | None = None
    residual_vectors: np.ndarray | None = field(default=None, repr=False)
    tail_floor: float = 0.0

    @property
    def residual_max(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else 0.0


def _sample_f(ts, f, m):
    if callable(f):
        f = np.array([f(t) for t in ts.points])
    f = np.asarray(f, dtype=complex)
    if f.shape != (len(ts.points), m):
        raise DimensionMismatch(f"forcing must have shape {(len(ts.points), m)}, got {f.shape}")
    return f


def _tail_points(ts: TimeScale, fractions=(0.125, 0.25, 0.5)):
    out = []
    span = ts.horizon - ts.t0
    for q in fractions:
        T = ts.t0 + q * span
        k = int(np.searchsorted(ts.points, T + 1e-12 * max(1.0, abs(T)), side="right")) - 1
        out.append(max(k, 1))
    return out


def _restrict(kern, T):
    if T is None or T >= kern.ts.horizon:
        return len(kern.ts.points) - 1
    k = int(np.searchsorted(kern.ts.points, T + 1e-12 * max(1.0, abs(T)), side="right")) - 1
    if k < 1:
        raise IndexOutOfRange(f"horizon {T!r} leaves no interval")
    return k


def _five_point_derivative(x, y):
    """Fourth-order finite differences on a uniform grid (second order at the ends)."""
    h = x[1] - x[0]
    d = np.gradient(y, x, axis=0, edge_order=2)
    if len(x) >= 5:
        d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    return d


def apply_resolvent(kern: GreenKernel, f, T=None) -> ResolventResult:
    """``R_lam f`` on ``[t0, T]`` together with residual and boundary diagnostics."""
    ts, n, p = kern.ts, kern.n, kern.pair
    kT = _restrict(kern, T)
    m = 2 * n
    f = _sample_f(ts, f, m)[: kT + 1]
    sub = TimeScale(ts.kind, np.array(ts.points[: kT + 1]), ts.prepoint, ts.base_step)
    A, N, Pn = kern.A[: kT + 1], kern.N[: kT + 1], kern.pencil[: kT + 1]
    Af = np.einsum("kij,kj->ki", A, f)
    psi, phi = p.psi[: kT + 1], p.phi[: kT + 1]
    chi, zeta = p.chi[: kT + 1], p.zeta[: kT + 1]
    psih, phih = p.psi_hat[: kT + 1], p.phi_hat[: kT + 1]
    J = J_matrix(n)
    g1 = np.einsum("kji,kj->ki", chi.conj(), Af)  # chi* A f
    g2 = np.einsum("kji,kj->ki", zeta.conj(), Af)  # zeta* A f
    if ts.is_discrete:
        g1[-1] = 0.0
        g2[-1] = 0.0
    I1 = cumulative_delta_integral(sub, g1)  # over [t0, t)
    I2 = cumulative_delta_integral(sub, g2, reverse=True)  # over [t, T)
    Rhat = np.einsum("kij,kj->ki", psih, I1) + np.einsum("kij,kj->ki", phih, I2)
    Rf = (
        np.einsum("kij,kj->ki", psi, I1)
        + np.einsum("kij,kj->ki", phi, I2)
        + np.einsum("kij,kj->ki", N, Af)
    )
    if ts.is_discrete:
        Rhat[0, n:] = 0.0  # y2(rho(t0)) = 0, exact already since phi_hat(t0) = (-I, 0)
        mu = sub.mu[:, None]
        lhs = (J @ (Rhat[1:] - Rhat[:-1]).T).T / mu
        res = lhs - np.einsum("kij,kj->ki", Pn[:-1], Rf[:-1]) - Af[:-1]
        res = np.vstack([res, np.full((1, m), np.nan)])
        fd = None
    else:
        # product rule: Rhat' = K Rhat + (psi_hat chi* - phi_hat zeta*) A f
        jump = np.einsum("kij,kj->ki", psih, g1) - np.einsum("kij,kj->ki", phih, g2)
        dR = -np.einsum("ij,kjl,kl->ki", J, Pn, Rhat) + jump
        res = (J @ dR.T).T - np.einsum("kij,kj->ki", Pn, Rf) - Af
        dfd = _five_point_derivative(sub.points, Rhat)
        rfd = (J @ dfd.T).T - np.einsum("kij,kj->ki", Pn, Rf) - Af
        fd = float(np.max(np.linalg.norm(rfd, axis=1)))
    chi0 = p.chi_hat[0]
    boundary = {
        "rho_t0_zero": float(np.linalg.norm(Rhat[0, n:])),
        "chi_J_t0": float(np.linalg.norm(chi0.conj().T @ J @ Rhat[0])),
        "tail_horizon": float(np.linalg.norm(p.zeta_hat[kT].conj().T @ J @ Rhat[kT])),
    }
    tails = {
        float(sub.points[k]): float(np.linalg.norm(p.zeta_hat[k].conj().T @ J @ Rhat[k]))
        for k in _tail_points(sub)
    }
    floor = TAIL_FLOOR * max(1.0, float(np.real(delta_integral(sub, np.linalg.norm(g2, axis=1), 0, kT))))
    return ResolventResult(f, Rf, Rhat, np.linalg.norm(res, axis=1), boundary, tails, False, fd,
                           res, floor)


def apply_adjoint_resolvent(kern: GreenKernel, f, T=None) -> ResolventResult:
    """``R~_lam f`` with ``G~(t, s) = chi(t) psi*(s)`` for ``t < s`` and
    ``zeta(t) phi*(s) + N*(t) delta_ts`` for ``s <= t``."""
    ts, n, p = kern.ts, kern.n, kern.pair
    kT = _restrict(kern, T)
    m = 2 * n
    f = _sample_f(ts, f, m)[: kT + 1]
    sub = TimeScale(ts.kind, np.array(ts.points[: kT + 1]), ts.prepoint, ts.base_step)
    A, N, Pn = kern.A[: kT + 1], kern.N[: kT + 1], kern.pencil[: kT + 1]
    Af = np.einsum("kij,kj->ki", A, f)
    psi, phi = p.psi[: kT + 1], p.phi[: kT + 1]
    chi, zeta = p.chi[: kT + 1], p.zeta[: kT + 1]
    chih, zetah = p.chi_hat[: kT + 1], p.zeta_hat[: kT + 1]
    J = J_matrix(n)
    h1 = np.einsum("kji,kj->ki", phi.conj(), Af)  # phi* A f
    h2 = np.einsum("kji,kj->ki", psi.conj(), Af)  # psi* A f
    if ts.is_discrete:
        h1[-1] = 0.0
        h2[-1] = 0.0
    K1 = cumulative_delta_integral(sub, h1)  # over [t0, t)
    K2 = cumulative_delta_integral(sub, h2, reverse=True)  # over [t, T)
    # hatted: z_hat = zeta_hat K1 + chi_hat K2; unhatted picks up the s = t term
    Zhat = np.einsum("kij,kj->ki", zetah, K1) + np.einsum("kij,kj->ki", chih, K2)
    if ts.is_discrete:
        mu = np.append(sub.mu, 0.0)[:, None]
        K1c = K1 + mu * h1
        K2c = K2 - mu * h2
    else:
        K1c, K2c = K1, K2
    Rf = (
        np.einsum("kij,kj->ki", zeta, K1c)
        + np.einsum("kij,kj->ki", chi, K2c)
        + np.einsum("kji,kj->ki", N.conj(), Af)
    )
    Pa = np.conj(np.swapaxes(Pn, 1, 2))
    if ts.is_discrete:
        mu = sub.mu[:, None]
        lhs = (J @ (Zhat[1:] - Zhat[:-1]).T).T / mu
        res = lhs - np.einsum("kij,kj->ki", Pa[:-1], Rf[:-1]) - Af[:-1]
        res = np.vstack([res, np.full((1, m), np.nan)])
        fd = None
    else:
        jump = np.einsum("kij,kj->ki", zetah, h1) - np.einsum("kij,kj->ki", chih, h2)
        dZ = -np.einsum("ij,kjl,kl->ki", J, Pa, Zhat) + jump
        res = (J @ dZ.T).T - np.einsum("kij,kj->ki", Pa, Rf) - Af
        dfd = _five_point_derivative(sub.points, Zhat)
        rfd = (J @ dfd.T).T - np.einsum("kij,kj->ki", Pa, Rf) - Af
        fd = float(np.max(np.linalg.norm(rfd, axis=1)))
    phih0 = p.phi_hat[0]
    boundary = {
        "rho_t0_zero": float(np.linalg.norm(Zhat[0, n:])),
        "phi_J_t0": float(np.linalg.norm(phih0.conj().T @ J @ Zhat[0])),
        "tail_horizon": float(np.linalg.norm(p.psi_hat[kT].conj().T @ J @ Zhat[kT])),
    }
    tails = {
        float(sub.points[k]): float(np.linalg.norm(p.psi_hat[k].conj().T @ J @ Zhat[k]))
        for k in _tail_points(sub)
    }
    floor = TAIL_FLOOR * max(1.0, float(np.real(delta_integral(sub, np.linalg.norm(h2, axis=1), 0, kT))))
    return ResolventResult(f, Rf, Zhat, np.linalg.norm(res, axis=1), boundary, tails, True, fd,
                           res, floor)


def a_inner(kern: GreenKernel, x, y) -> complex:
    """``(x, y)_A = int y* A x`` over the kernel's grid (scattered horizon excluded)."""
    ts = kern.ts
    k = min(len(x), len(y), len(ts.points)) - 1
    A = kern.A[: k + 1]
    xv, yv = np.array(x[: k + 1]), np.array(y[: k + 1])
    if ts.is_discrete:
        xv[-1] = 0.0
        yv[-1] = 0.0
    g = np.einsum("ki,kij,kj->k", yv.conj(), A, xv)
    sub = TimeScale(ts.kind, np.array(ts.points[: k + 1]), ts.prepoint, ts.base_step)
    return complex(delta_integral(sub, g, 0, k))


def weighted_norm2(ts: TimeScale, Wgrid, x) -> float:
    """``int x* W x`` (real part) over the grid of ``x``."""
    k = len(x) - 1
    xv = np.array(x)
    if ts.is_discrete:
        xv[-1] = 0.0
    g = np.einsum("ki,kij,kj->k", xv.conj(), Wgrid[: k + 1], xv)
    sub = TimeScale(ts.kind, np.array(ts.points[: k + 1]), ts.prepoint, ts.base_step)
    return float(np.real(delta_integral(sub, g, 0, k)))


def duality_gap(kern: GreenKernel, f, g) -> float:
    """``|(R f, g)_A - (f, R~ g)_A|`` relative to ``max(1, |(R f, g)_A|)``."""
    Rf = apply_resolvent(kern, f).Rf
    Rg = apply_adjoint_resolvent(kern, g).Rf
    f = _sample_f(kern.ts, f, 2 * kern.n)
    g = _sample_f(kern.ts, g, 2 * kern.n)
    lhs = a_inner(kern, Rf, g)
    rhs = a_inner(kern, f, Rg)
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def resolvent_residual(sys, ts, result: ResolventResult, lam=None) -> dict:
    """Summary of the residual and boundary diagnostics of a resolvent application."""
    out = {"residual_max": result.residual_max}
    out.update(result.boundary)
    out["tails"] = dict(result.tails)
    if result.residual_fd is not None:
        out["residual_fd"] = result.residual_fd
    return out


def tail_decreasing(result: ResolventResult) -> bool:
    """Strict decrease of the tail values, treating values under ``tail_floor`` as zero.

    The floor is ``TAIL_FLOOR`` times ``int |zeta* A f|``, the rounding level
    of the integrals; a forcing with bounded support leaves exact zeros there.
    """
    vals = [result.tails[t] for t in sorted(result.tails)]
    fl = result.tail_floor
    return all(b < a or (a <= fl and b <= fl) for a, b in zip(vals, vals[1:]))


def operator_residual(sys, ts, result: ResolventResult, xi=None, A=None) -> float:
    """A-seminorm of ``J Phi_hat^Delta - (xi A + B) Phi - A f`` over the grid."""
    k = len(result.Rf) - 1
    sub = TimeScale(ts.kind, np.array(ts.points[: k + 1]), ts.prepoint, ts.base_step)
    if A is None:
        A = np.array([sys.A(t, _sig(ts, j)) for j, t in enumerate(sub.points)])
    A = A[: k + 1]
    r = np.nan_to_num(result.residual_vectors)
    return float(np.sqrt(max(weighted_norm2(sub, A, r), 0.0)))


def injectivity_norm(kern: GreenKernel, result: ResolventResult) -> float:
    """``max_t ||A (R f)(t)||``, a necessary-condition smoke test for injectivity."""
    k = len(result.Rf)
    ARf = np.einsum("kij,kj->ki", kern.A[:k], np.nan_to_num(result.Rf))
    return float(np.max(np.linalg.norm(ARf, axis=1)))


def dirac_hypothesis(kern: GreenKernel) -> np.ndarray:
    """``||A^{1/2} N* A N A^{1/2}||`` per grid point."""
    out = []
    for A, N in zip(kern.A, kern.N):
        Ah = mk.psd_sqrt(A, tol=1.0)
        out.append(mk.norm(Ah @ N.conj().T @ A @ N @ Ah))
    return np.array(out)


def norm_inequalities(sys, ts, rot: RotationU, result: ResolventResult, lam, lam0, eps,
                      delta=None, A=None, W0=None) -> dict:
    """Slacks of the resolvent norm bounds on the truncated horizon.

    ``ineq1``: ``|f|_A^2 / (4 eps) - |Phi|_{W(lam0)}^2 - (delta - eps) |Phi|_{A~}^2``.
    ``ineq2`` as printed (``|f|_A`` unsquared), ``ineq2_squared`` with ``|f|_A^2``,
    and ``ineq2_root``, ``|f|_A / delta - |Phi|_{A~}``, which ``ineq1`` implies.
    ``delta``, ``A`` and ``W0 = W(lam0)`` may be passed precomputed on the grid.
    """
    if delta is None:
        delta = cone_margin(sys, rot, ts, lam, lam0)
    if not 0 < eps < delta:
        raise EpsilonOutOfRange(f"eps={eps!r} must lie in (0, {delta!r})")
    k = len(result.Rf) - 1
    sub = TimeScale(ts.kind, np.array(ts.points[: k + 1]), ts.prepoint, ts.base_step)
    if A is None:
        A = np.array([sys.A(t, _sig(ts, j)) for j, t in enumerate(sub.points)])
    A = A[: k + 1]
    At = rot.U2n[None] @ A @ rot.U2n.conj().T[None]
    W0 = (weight_on_grid(sys, rot, ts, lam0) if W0 is None else W0)[: k + 1]
    Phi = np.nan_to_num(result.Rf)
    f2 = weighted_norm2(sub, A, result.f)
    w2 = weighted_norm2(sub, W0, Phi)
    a2 = weighted_norm2(sub, At, Phi)
    fa = np.sqrt(max(f2, 0.0))
    return {
        "delta": delta,
        "eps": eps,
        "ineq1_slack": f2 / (4 * eps) - (w2 + (delta - eps) * a2),
        "ineq2_slack": fa / delta - a2,
        "ineq2_squared_slack": f2 / delta - a2,
        "ineq2_root_slack": fa / delta - np.sqrt(max(a2, 0.0)),
        "f_A2": f2,
        "Phi_W2": w2,
        "Phi_At2": a2,
    }


def make_forcing(kind: str, ts: TimeScale, n: int, rng: np.random.Generator, **kw) -> np.ndarray:
    """Built-in forcings sampled on the grid: ``gaussian``, ``indicator``, ``polynomial``.

    Every profile carries a random complex direction in ``C^{2n}``.  By default
    the mass sits in the first eighth of the span, ahead of the tail points.
    """
    t = np.asarray(ts.points)
    a, T = ts.t0, ts.horizon
    span = max(T - a, 1e-300)
    vec = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    if kind == "gaussian":
        c = kw.get("center", a + rng.uniform(0.02, 0.06) * span)
        w = kw.get("width", rng.uniform(0.005, 0.015) * span)
        prof = np.exp(-0.5 * ((t - c) / w) ** 2)
    elif kind == "indicator":
        lo = kw.get("lo", a + rng.uniform(0.0, 0.05) * span)
        hi = kw.get("hi", lo + rng.uniform(0.02, 0.06) * span)
        prof = ((t >= lo) & (t <= hi)).astype(float)
    elif kind == "polynomial":
        deg = kw.get("degree", 3)
        coef = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
        s = (t - a) / span
        prof = np.polynomial.polynomial.polyval(s, coef) * np.exp(-kw.get("decay", 40.0 / span) * (t - a))
    else:
        raise ValueError(f"unknown forcing kind {kind!r}")
    return prof[:, None] * vec[None, :]
