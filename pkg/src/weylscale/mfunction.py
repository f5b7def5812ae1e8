"""M-function estimates and Weyl solutions.

``M(lam)`` is the disk centre at the largest horizon.  The Weyl solution
``psi = theta + phi M`` decays while ``theta`` and ``phi`` grow, so forming it
literally loses all digits after a few e-foldings.  :func:`stable_weyl_solutions`
instead sweeps the decaying subspace backwards from the horizon (a stable
direction), seeded with the limit of ``span(psi_hat(T))`` obtained from the
adjoint system, and normalises it at ``t0`` to ``psi_hat(t0) = (-M, I)``.
The adjoint pair ``(zeta_hat | chi_hat)`` then follows from
``Z_hat = -J Y_hat^{-*} J`` applied to the well-conditioned, column-scaled
basis ``(psi_hat | phi_hat)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import matrixkit as mk
from .errors import ConeViolation, DimensionMismatch, IllConditioned, IntegratorFailure
from .hamiltonian import (
    FundamentalTrajectory,
    J_matrix,
    _forward_step,
    _slice,
    fundamental_pair,
    unhat_trajectory,
)
from .timescale import TimeScale, delta_integral
from .weylsims import (
    RotationU,
    cone_margin,
    disk_at,
    membership,
    weight_on_grid,
)


def _hconj(X):
    return np.conj(np.swapaxes(X, -1, -2))


def _horizon_index(ts: TimeScale, T: float) -> int:
    k = int(np.searchsorted(ts.points, T + 1e-12 * max(1.0, abs(T)), side="right")) - 1
    if k < 1:
        raise ValueError(f"horizon {T!r} is not past t0={ts.t0!r}")
    return k


def default_anchor(sys, rot, ts, lam0, directions: int = 16) -> complex:
    """``lam0 + d / delta*(lam0 + d)`` for the unit direction ``d`` with the largest margin.

    The margin is positively homogeneous in ``lam - lam0``, so the returned
    anchor has margin exactly 1.
    """
    best, best_d = -np.inf, None
    for j in range(directions):
        d = np.exp(2j * np.pi * j / directions)
        m = cone_margin(sys, rot, ts, lam0 + d, lam0)
        if np.isfinite(m) and m > best:
            best, best_d = m, d
    if best_d is None or best <= 0:
        raise ConeViolation(lam0, best)
    return complex(lam0 + best_d / best)


@dataclass
class MEstimate:
    lam: complex
    xi: complex | None
    M: np.ndarray
    horizons: list
    centers: list
    cauchy_gap: float
    contained: list
    cone_margin: float


def m_estimate(sys, ts, rot, lam, horizons, lam0, xi=None, traj=None, rtol=1e-10) -> MEstimate:
    """Disk centres at each horizon; ``M`` is the one at the largest.

    ``contained[i]`` records whether ``M`` lies in ``D(horizons[i])``.
    """
    delta = cone_margin(sys, rot, ts, lam, lam0)
    if not delta > 0:
        raise ConeViolation(lam, delta)
    horizons = sorted(float(h) for h in horizons)
    if traj is None:
        traj = fundamental_pair(sys, ts.truncate(horizons[-1]), lam, rtol=rtol)
    disks = [disk_at(traj, rot, _horizon_index(traj.ts, T)) for T in horizons]
    for T, d in zip(horizons, disks):
        if not d.P_positive:
            from .errors import DiskUndefined

            raise DiskUndefined(f"P is singular at horizon {T!r}")
    M = disks[-1].center
    gap = mk.norm(disks[-1].center - disks[-2].center) if len(disks) > 1 else float("nan")
    contained = [membership(d, M).contained for d in disks]
    return MEstimate(complex(lam), xi, M, horizons, [d.center for d in disks], gap,
                     contained, delta)


@dataclass(frozen=True, eq=False)
class WeylSolutionPair:
    """Hatted Weyl solutions ``psi_hat`` and adjoint Weyl solutions ``zeta_hat``.

    ``chi_hat`` is the adjoint partner used together with ``zeta_hat``; for the
    stable construction it is recomputed from ``(psi_hat | phi_hat)`` so the
    pair satisfies the coupling identities to rounding.
    """

    traj: FundamentalTrajectory
    M: np.ndarray
    psi_hat: np.ndarray
    zeta_hat: np.ndarray
    chi_hat: np.ndarray
    method: str
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def lam(self):
        return self.traj.lam

    @property
    def ts(self):
        return self.traj.ts

    @property
    def phi_hat(self):
        return self.traj.phi_hat

    @property
    def eta_hat(self):
        return self.zeta_hat - self.chi_hat @ self.M.conj().T

    def _unhat(self, name, arr, adjoint):
        if name not in self._cache:
            self._cache[name] = unhat_trajectory(self.traj, arr, adjoint=adjoint)
        return self._cache[name]

    @property
    def psi(self):
        return self._unhat("psi", self.psi_hat, False)

    @property
    def phi(self):
        return self._unhat("phi", self.traj.phi_hat, False)

    @property
    def zeta(self):
        return self._unhat("zeta", self.zeta_hat, True)

    @property
    def chi(self):
        return self._unhat("chi", self.chi_hat, True)


def weyl_solutions(traj: FundamentalTrajectory, M) -> WeylSolutionPair:
    """Literal ``psi_hat = theta_hat + phi_hat M``, ``zeta_hat = eta_hat + chi_hat M*``."""
    n = traj.n
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if M.shape != (n, n):
        raise DimensionMismatch(f"M must be {n}x{n}, got {M.shape}")
    psi = traj.theta_hat + traj.phi_hat @ M
    zeta = traj.eta_hat + traj.chi_hat @ M.conj().T
    return WeylSolutionPair(traj, M, psi, zeta, traj.chi_hat.copy(), "literal")


def _backward_segment(sys, ts, lam, lo, hi, seed, rtol):
    """Integrate the hatted system from ``points[hi]`` back to ``points[lo]``."""
    J = J_matrix(sys.n)
    pts = ts.points[lo : hi + 1][::-1]
    shape = seed.shape
    sol = solve_ivp(
        lambda t, y: (-J @ sys.pencil(t, t, lam) @ y.reshape(shape)).ravel(),
        (pts[0], pts[-1]),
        seed.ravel(),
        method="DOP853",
        t_eval=pts,
        rtol=rtol,
        atol=rtol * 1e-3,
    )
    if not sol.success:
        raise IntegratorFailure(sol.message)
    return sol.y.T.reshape((len(pts),) + shape)[::-1]


def _qr(V):
    Q, R = np.linalg.qr(V)
    return Q, R


def decaying_subspace(traj: FundamentalTrajectory, rot: RotationU, segment: int = 100):
    """Backward subspace sweep; returns ``(psi_hat, M)`` normalised at ``t0``."""
    sys, ts, lam, n = traj.sys, traj.ts, traj.lam, traj.n
    J = J_matrix(n)
    N = len(ts.points)
    chiT = traj.Zhat[-1][:, n:]
    seed = J @ rot.U2n_inv @ J @ chiT
    Qs = {}
    Rs = {}
    pieces = {}
    Q, _ = _qr(seed)
    if ts.is_discrete:
        bounds = list(range(N))
    else:
        bounds = list(range(0, N - 1, segment)) + [N - 1]
    Qs[len(bounds) - 1] = Q
    for i in range(len(bounds) - 2, -1, -1):
        lo, hi = bounds[i], bounds[i + 1]
        Qhi = Qs[i + 1]
        if ts.is_discrete:
            sl = _slice(sys, ts, lo, need_mu=True)
            V0 = mk.solve(_forward_step(sl, lam, J), Qhi, what="step matrix")
            seg = None
        else:
            seg = _backward_segment(sys, ts, lam, lo, hi, Qhi, traj.rtol)
            V0 = seg[0]
        Qs[i], Rs[i] = _qr(V0)
        pieces[i] = seg
    # forward recursion of the n x n coordinates: psi_hat(b_i) = Q_i C_i
    C = mk.inverse(Qs[0][n:], what="lower block of the decaying subspace at t0")
    M = -Qs[0][:n] @ C
    psi = np.empty((N, 2 * n, n), dtype=complex)
    psi[0] = Qs[0] @ C
    for i in range(len(bounds) - 1):
        lo, hi = bounds[i], bounds[i + 1]
        Cn = np.linalg.solve(Rs[i], C)
        if pieces[i] is not None:
            # inside the segment psi_hat = V(t) C_{i+1}
            psi[lo + 1 : hi + 1] = pieces[i][1:] @ Cn
        psi[hi] = Qs[i + 1] @ Cn
        C = Cn
    return psi, M


def stable_weyl_solutions(traj: FundamentalTrajectory, rot: RotationU, segment: int = 100):
    """Weyl solution pair via the backward sweep; carries its own ``M``."""
    n = traj.n
    J = J_matrix(n)
    psi, M = decaying_subspace(traj, rot, segment)
    phi = traj.phi_hat
    Yp = np.concatenate([psi, phi], axis=2)
    scale = 1.0 / np.linalg.norm(Yp, axis=1)  # per column
    Ys = Yp * scale[:, None, :]
    try:
        inv = np.linalg.inv(Ys)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned("(psi_hat | phi_hat) is numerically singular") from exc
    # Z' = -J Y'^{-*} J with Y' = Ys D^{-1}  =>  Y'^{-*} = Ys^{-*} D
    Zp = -J @ (_hconj(inv) * scale[:, None, :]) @ J
    return WeylSolutionPair(traj, M, psi, Zp[:, :, :n], Zp[:, :, n:], "stable")


def coupling_identities(traj, pair: WeylSolutionPair, k: int) -> dict:
    """``||zeta_hat* J psi_hat||`` and ``||zeta_hat* J phi_hat + I||`` at grid index ``k``."""
    n = traj.n
    J = J_matrix(n)
    z = pair.zeta_hat[k]
    a = mk.norm(z.conj().T @ J @ pair.psi_hat[k])
    b = mk.norm(z.conj().T @ J @ traj.phi_hat[k] + np.eye(n))
    return {"zJpsi": a, "zJphi_plus_I": b}


def coupling_profile(pair: WeylSolutionPair, relative: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Both coupling norms on the whole grid.

    With ``relative`` each norm is divided by ``max(1, ||zeta_hat|| ||psi_hat||)``
    (respectively ``||phi_hat||``), the size of the rounding in the products.
    """
    n = pair.traj.n
    J = J_matrix(n)
    zs = _hconj(pair.zeta_hat)
    a = np.linalg.norm(zs @ J @ pair.psi_hat, ord=2, axis=(1, 2))
    b = np.linalg.norm(zs @ J @ pair.phi_hat + np.eye(n), ord=2, axis=(1, 2))
    if relative:
        nz = np.linalg.norm(pair.zeta_hat, ord=2, axis=(1, 2))
        a = a / np.maximum(1.0, nz * np.linalg.norm(pair.psi_hat, ord=2, axis=(1, 2)))
        b = b / np.maximum(1.0, nz * np.linalg.norm(pair.phi_hat, ord=2, axis=(1, 2)))
    return a, b


def a_inner(sys, ts, left, right, kT: int) -> np.ndarray:
    """``int_{t0}^{t_kT} left* A right`` for unhatted matrix trajectories."""
    A = np.array([sys.A(t, _sig(ts, k)) for k, t in enumerate(ts.points[: kT + 1])])
    L = left[: kT + 1].copy()
    R = right[: kT + 1].copy()
    if ts.is_discrete:
        L[-1] = 0.0
        R[-1] = 0.0
    f = _hconj(L) @ A @ R
    return delta_integral(ts, f, 0, kT)


def _sig(ts, k):
    if ts.is_discrete:
        return float(ts.points[k + 1]) if k + 1 < len(ts.points) else float(ts.points[k])
    return float(ts.points[k])


@dataclass
class MDifference:
    residual: float
    swapped: float
    tail: float
    M_lam: np.ndarray
    M_xi: np.ndarray


def identity_m_difference(sys, ts, rot, lam, xi, T, lam0, rtol=1e-10, pairs=None) -> MDifference:
    """Residual of ``M(lam) - M(xi) = (lam - xi) int_{t0}^T zeta*(xi) A psi(lam)``.

    Both solution pairs are built on ``[t0, T]`` and use their own ``M``.
    ``tail`` is ``||zeta_hat*(T, xi) J psi_hat(T, lam)||``, which the
    truncated identity leaves over.
    """
    for z in (lam, xi):
        d = cone_margin(sys, rot, ts, z, lam0)
        if not d > 0:
            raise ConeViolation(z, d)
    if pairs is None:
        tsT = ts.truncate(T)
        pl = stable_weyl_solutions(fundamental_pair(sys, tsT, lam, rtol=rtol), rot)
        px = stable_weyl_solutions(fundamental_pair(sys, tsT, xi, rtol=rtol), rot)
    else:
        pl, px = pairs
    tsT = pl.ts
    kT = len(tsT.points) - 1
    if complex(lam) == complex(xi):
        return MDifference(0.0, 0.0, 0.0, pl.M, pl.M)
    diff = pl.M - px.M
    I1 = a_inner(sys, tsT, px.zeta, pl.psi, kT)
    I2 = a_inner(sys, tsT, pl.zeta, px.psi, kT)
    r1 = mk.norm(diff - (lam - xi) * I1)
    r2 = mk.norm(diff - (lam - xi) * I2)
    return MDifference(r1, r2, tail_coupling(px, pl, kT), pl.M, px.M)


def tail_coupling(pair_xi: WeylSolutionPair, pair_lam: WeylSolutionPair, k: int) -> float:
    J = J_matrix(pair_lam.traj.n)
    return mk.norm(pair_xi.zeta_hat[k].conj().T @ J @ pair_lam.psi_hat[k])


@dataclass
class WNormBound:
    lhs: float
    rhs: float
    ok: bool
    margin: float = float("nan")


def w_norm_bound(pair: WeylSolutionPair, rot: RotationU, T: float, tol: float = 1e-8) -> WNormBound:
    """``int_{t0}^T psi* W psi <= -1/2 psi_hat*(t0) U2n J psi_hat(t0)``.

    Holds exactly when ``M`` lies in ``D(T)``; reported with the largest
    eigenvalues of both sides.
    """
    traj = pair.traj
    ts = traj.ts
    J = J_matrix(traj.n)
    p0 = pair.psi_hat[0]
    rhs_m = mk.re(-0.5 * p0.conj().T @ rot.U2n @ J @ p0)
    kT = _horizon_index(ts, T) if T > ts.t0 else 0
    if kT == 0:
        lhs_m = np.zeros_like(rhs_m)
    else:
        W = weight_on_grid(traj.sys, rot, ts, traj.lam)[: kT + 1]
        psi = pair.psi[: kT + 1].copy()
        if ts.is_discrete:
            psi[-1] = 0.0
        lhs_m = mk.re(delta_integral(ts, _hconj(psi) @ W @ psi, 0, kT))
    ok = mk.loewner_geq(rhs_m, lhs_m, tol)
    lmax = lambda X: float(np.linalg.eigvalsh(X)[-1])
    margin = float(np.linalg.eigvalsh(rhs_m - lhs_m)[0])
    return WNormBound(lmax(lhs_m), lmax(rhs_m), bool(ok), margin)
