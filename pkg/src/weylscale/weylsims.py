"""Admissible pairs, cone margins, and Weyl-Sims disks.

For ``lam`` in the cone the set of boundary coefficients ``l`` with
``(theta_hat + phi_hat l)* U2n J (theta_hat + phi_hat l) <= 0`` is the matrix
disk ``(l - C)* P (l - C) <= R``.  The centre comes from the forward
fundamental system.  The radius is taken from the adjoint fundamental system,
``R^{-1} = 2 chi_hat* U2n^{-1} J chi_hat``, which avoids the cancellation in
``T P^{-1} T* - S`` once the solutions have grown; the literal Schur form is
kept alongside for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import matrixkit as mk
from .errors import DiskUndefined, NegativeRadius, NotContraction, SingularU
from .hamiltonian import CoefficientSystem, FundamentalTrajectory, J_matrix
from .timescale import TimeScale, cumulative_delta_integral, delta_integral

DISK_TOL = 1e-9
# centres are trusted to roughly this relative accuracy
CENTER_RESOLUTION = 1e-9


@dataclass(frozen=True, eq=False)
class RotationU:
    U: np.ndarray
    U2n: np.ndarray
    U2n_inv: np.ndarray

    @property
    def n(self):
        return self.U.shape[0]


def make_rotation(U) -> RotationU:
    """``U2n = diag(U, -U*)``; ``U2n J`` must be Hermitian with signature (n, n)."""
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    if U.shape[0] != U.shape[1]:
        raise SingularU(f"U must be square, got {U.shape}")
    if mk.cond(U) > mk.COND_CAP:
        raise SingularU("U is singular or too ill-conditioned")
    n = U.shape[0]
    Z = np.zeros((n, n))
    U2n = np.block([[U, Z], [Z, -U.conj().T]])
    G = U2n @ J_matrix(n)
    if mk.norm(G - G.conj().T) > 1e-12 * max(1.0, mk.norm(G)):
        raise SingularU("U2n J is not Hermitian")
    w = np.linalg.eigvalsh((G + G.conj().T) / 2)
    if np.sum(w > 0) != n or np.sum(w < 0) != n:
        raise SingularU("U2n J does not have n positive and n negative eigenvalues")
    return RotationU(U, U2n, np.linalg.inv(U2n))


def rotation_from_eta(eta: float, n: int = 1) -> RotationU:
    """``U = -e^{i eta} I``, the choice used by the scalar examples."""
    return make_rotation(-np.exp(1j * eta) * np.eye(n))


class Weights(NamedTuple):
    W: np.ndarray
    Wtilde: np.ndarray
    gap: float


def _sigma(ts: TimeScale, k: int) -> float:
    if ts.is_discrete:
        return float(ts.points[k + 1]) if k + 1 < len(ts.points) else float(ts.points[k])
    return float(ts.points[k])


def weight_W(sys: CoefficientSystem, rot: RotationU, t: float, lam, sigma=None) -> Weights:
    """``W = Re[U2n (lam A + B)]`` and ``W~ = Re[U2n^{-1} (conj(lam) A + B*)]``."""
    M = sys.pencil(t, t if sigma is None else sigma, lam)
    W = mk.re(rot.U2n @ M)
    Wt = mk.re(rot.U2n_inv @ M.conj().T)
    gap = mk.norm(W - rot.U2n @ Wt @ rot.U2n.conj().T)
    return Weights(W, Wt, gap)


def weight_on_grid(sys, rot, ts, lam) -> np.ndarray:
    return np.array(
        [weight_W(sys, rot, t, lam, _sigma(ts, k)).W for k, t in enumerate(ts.points)]
    )


@dataclass(frozen=True)
class AdmissiblePair:
    lam0: complex
    rot: RotationU
    verified: bool
    worst_t: float
    min_eig: float


def admissible(sys, rot, ts, lam0, tol: float = mk.PSD_TOL) -> AdmissiblePair:
    """Check ``W(t, lam0) >= 0`` at every grid point; report the worst one."""
    worst_t, worst = float(ts.points[0]), np.inf
    ok = True
    for k, t in enumerate(ts.points):
        W = weight_W(sys, rot, t, lam0, _sigma(ts, k)).W
        res = mk.psd_check(W, tol)
        if res.min_eig < worst:
            worst, worst_t = res.min_eig, float(t)
        ok &= res.psd
    return AdmissiblePair(complex(lam0), rot, bool(ok), worst_t, float(worst))


def _pointwise_margin(big, small, rank_tol=1e-10, range_tol=1e-9):
    ws, V = np.linalg.eigh(small)
    top = ws[-1] if ws.size else 0.0
    if top <= 0:
        return np.inf if mk.norm(big) <= range_tol else -np.inf
    keep = ws > rank_tol * top
    Q = V[:, keep]
    outside = big - Q @ (Q.conj().T @ big)
    if mk.norm(outside) > range_tol * max(1.0, mk.norm(big)):
        return -np.inf
    Sr = ws[keep]
    Br = Q.conj().T @ big @ Q
    s = 1.0 / np.sqrt(Sr)
    return float(np.linalg.eigvalsh((Br * s[None, :]) * s[:, None])[0])


_CONE_CACHE: dict = {}
_CONE_CACHE_SIZE = 16


def _cone_data(sys, rot, ts):
    """Per-grid ``Re(U2n A)``, ``Im(U2n A)`` and ``Re(U2n A U2n*)``, cached per problem."""
    key = (id(sys), id(rot), id(ts))
    hit = _CONE_CACHE.get(key)
    if hit is not None and hit[0] is sys and hit[1] is rot and hit[2] is ts:
        return hit[3]
    Ure, Uim, S = [], [], []
    for k, t in enumerate(ts.points):
        UA = rot.U2n @ sys.A(t, _sigma(ts, k))
        Ure.append(mk.re(UA))
        Uim.append(mk.re(-1j * UA))
        S.append(mk.re(UA @ rot.U2n.conj().T))
    data = (np.array(Ure), np.array(Uim), np.array(S))
    if len(_CONE_CACHE) >= _CONE_CACHE_SIZE:
        _CONE_CACHE.pop(next(iter(_CONE_CACHE)))
    _CONE_CACHE[key] = (sys, rot, ts, data)
    return data


def cone_margin(sys, rot, ts, lam, lam0) -> float:
    """Largest ``delta`` with ``Re[(lam - lam0) U2n A] >= delta U2n A U2n*`` on the grid.

    Computed on the numerical range of ``U2n A U2n*``.  Returns ``-inf`` when
    the left side reaches outside that range, and ``+inf`` if ``A`` vanishes
    identically.
    """
    Ure, Uim, S = _cone_data(sys, rot, ts)
    d = complex(lam - lam0)
    # Re(d X) = Re(d) Re(X) - Im(d) Im(X)
    big = d.real * Ure - d.imag * Uim
    best = np.inf
    for b, sm in zip(big, S):
        best = min(best, _pointwise_margin(b, sm))
    return float(best)


class STP(NamedTuple):
    k: int
    t: float
    lam: complex
    S: np.ndarray
    T: np.ndarray
    P: np.ndarray
    crosscheck_gap: float
    radius_adjoint: np.ndarray | None


def block_form(traj: FundamentalTrajectory, rot: RotationU, k: int) -> np.ndarray:
    Y = traj.Yhat[k]
    return Y.conj().T @ rot.U2n @ J_matrix(traj.n) @ Y


def _integrated_form(traj, rot):
    """``2 int_{t0}^{t_k} Y* W Y`` for every k (cached on the trajectory)."""
    key = ("YWY", id(rot))
    if key not in traj._cache:
        ts = traj.ts
        W = weight_on_grid(traj.sys, rot, ts, traj.lam)
        Y = traj.Y
        if ts.is_discrete:
            Y = Y.copy()
            Y[-1] = 0.0
        f = np.conj(np.swapaxes(Y, 1, 2)) @ W @ Y
        traj._cache[key] = 2 * cumulative_delta_integral(ts, f)
    return traj._cache[key]


def adjoint_radius(traj: FundamentalTrajectory, rot: RotationU, k: int):
    """``R = (2 chi_hat* U2n^{-1} J chi_hat)^{-1}``, or ``None`` if that form is singular."""
    chi = traj.Zhat[k][:, traj.n :]
    F = 2 * chi.conj().T @ rot.U2n_inv @ J_matrix(traj.n) @ chi
    F = (F + F.conj().T) / 2
    if mk.cond(F) > mk.COND_CAP:
        return None
    return np.linalg.inv(F)


def stp(traj: FundamentalTrajectory, rot: RotationU, k: int) -> STP:
    """S, T, P blocks at grid index ``k`` plus the integrated cross-check.

    The cross-check compares ``Y_hat* U2n J Y_hat(t)`` with
    ``Y_hat* U2n J Y_hat(t0) + 2 int Y* W Y``; the gap is relative to
    ``max(1, ||Y_hat* U2n J Y_hat(t)||)``.
    """
    traj.ts._check_index(k)
    n = traj.n
    F = block_form(traj, rot, k)
    G = F / 2
    S, T, P = G[:n, :n], G[:n, n:], G[n:, n:]
    rhs = block_form(traj, rot, 0) + _integrated_form(traj, rot)[k]
    gap = mk.norm(F - rhs) / max(1.0, mk.norm(F))
    return STP(k, float(traj.ts.points[k]), traj.lam, mk.re(S), T, mk.re(P), float(gap),
               adjoint_radius(traj, rot, k))


@dataclass(frozen=True, eq=False)
class WeylDisk:
    t: float
    lam: complex
    S: np.ndarray
    T: np.ndarray
    P: np.ndarray
    P_positive: bool
    center: np.ndarray | None = None
    radius: np.ndarray | None = None
    radius_literal: np.ndarray | None = None
    k: int = -1
    _roots: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.P.shape[0]

    def _root(self, name):
        if name not in self._roots:
            if name == "P":
                self._roots["P"] = mk.psd_sqrt(self.P, tol=1.0)
            else:
                self._roots["R"] = mk.psd_sqrt(self.radius, tol=1.0)
        return self._roots[name]

    @property
    def radius_euclidean(self) -> float:
        """Largest ``||l - C||`` over the disk, ``sqrt(||R|| ||P^{-1}||)``."""
        return float(np.sqrt(mk.norm(self.radius) / mk.min_eig(self.P)))


def disk(sl: STP, tol: float = DISK_TOL) -> WeylDisk:
    """Centre and radius from an S/T/P slice; undefined while ``P`` is singular."""
    P = sl.P
    pmin = mk.min_eig(P)
    if not pmin > tol * max(mk.norm(P), np.finfo(float).tiny):
        return WeylDisk(sl.t, sl.lam, sl.S, sl.T, P, False, k=sl.k)
    C = -np.linalg.solve(P, sl.T.conj().T)
    R_lit = mk.re(sl.T @ np.linalg.solve(P, sl.T.conj().T) - sl.S)
    R = mk.re(sl.radius_adjoint) if sl.radius_adjoint is not None else R_lit
    rmin = mk.min_eig(R)
    if rmin < -tol * mk.norm(R):
        raise NegativeRadius(
            f"radius has eigenvalue {rmin:.3e} at t={sl.t!r}; is lambda inside the cone?"
        )
    return WeylDisk(sl.t, sl.lam, sl.S, sl.T, P, True, C, R, R_lit, sl.k)


def disk_at(traj, rot, k, tol: float = DISK_TOL) -> WeylDisk:
    return disk(stp(traj, rot, k), tol)


class Membership(NamedTuple):
    contained: bool
    quad_margin: float
    form_margin: float | None
    resolved: bool


def membership(d: WeylDisk, l, tol: float = 1e-8, traj=None, rot=None) -> Membership:
    """Both descriptions of the disk evaluated at ``l``.

    ``quad_margin`` is ``lambda_min(R - (l-C)* P (l-C)) / ||R||``.
    ``form_margin`` is ``-lambda_max`` of the defining form built from
    ``Y_hat`` (only when ``traj`` and ``rot`` are given), scaled by
    ``2 ||R||``, so both margins agree in exact arithmetic.  When the disk is
    smaller than the accuracy of the centre, membership is decided by
    ``||l - C|| <= CENTER_RESOLUTION * max(1, ||C||)`` and ``resolved`` is false.
    """
    if not d.P_positive:
        raise DiskUndefined(f"P is not positive definite at t={d.t!r}")
    l = np.atleast_2d(np.asarray(l, dtype=complex))
    D = l - d.center
    q = D.conj().T @ d.P @ D
    rn = mk.norm(d.radius)
    quad = mk.min_eig(d.radius - q) / rn
    form = None
    if traj is not None and rot is not None:
        n = d.n
        Y = traj.Yhat[d.k]
        v = Y[:, :n] + Y[:, n:] @ l
        F = v.conj().T @ rot.U2n @ J_matrix(n) @ v
        form = -float(np.linalg.eigvalsh(mk.re(F))[-1]) / (2 * rn)
    resolution = CENTER_RESOLUTION * max(1.0, mk.norm(d.center))
    resolved = d.radius_euclidean > resolution
    if resolved:
        ok = quad >= -tol
    else:
        ok = mk.norm(D) <= resolution or quad >= -tol
    return Membership(bool(ok), float(quad), form, bool(resolved))


def disk_contains(d: WeylDisk, l, tol: float = 1e-8) -> bool:
    return membership(d, l, tol).contained


def boundary_point(d: WeylDisk, V) -> np.ndarray:
    """``l = C + P^{-1/2} V R^{1/2}`` for a contraction ``V``."""
    if not d.P_positive:
        raise DiskUndefined(f"P is not positive definite at t={d.t!r}")
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    if mk.norm(V) > 1 + 1e-12:
        raise NotContraction(f"||V|| = {mk.norm(V):.6g} exceeds 1")
    Ph = d._root("P")
    return d.center + np.linalg.solve(Ph, V @ d._root("R"))


def recover_V(d: WeylDisk, l) -> np.ndarray:
    """Inverse of :func:`boundary_point`: ``V = P^{1/2} (l - C) R^{-1/2}``."""
    l = np.atleast_2d(np.asarray(l, dtype=complex))
    Rh = d._root("R")
    return np.linalg.solve(Rh.T, (d._root("P") @ (l - d.center)).T).T


def definiteness_margin(sys, rot, ts, lam, traj, T) -> float:
    """``lambda_min`` of ``int_{t0}^{T} phi* W phi``; positive certifies definiteness."""
    kT = int(np.searchsorted(ts.points, T + 1e-12 * max(1.0, abs(T)), side="right")) - 1
    if kT <= 0:
        return 0.0
    n = sys.n
    W = weight_on_grid(sys, rot, ts, lam)[: kT + 1]
    phi = traj.Y[: kT + 1, :, n:].copy()
    if ts.is_discrete:
        phi[-1] = 0.0
    f = np.conj(np.swapaxes(phi, 1, 2)) @ W @ phi
    return mk.min_eig(delta_integral(ts, f, 0, kT))


def sample_contractions(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``2 n^2`` unit-norm contractions: coordinate matrices and random unitaries."""
    out = []
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1.0
            out.append(E)
    for _ in range(n * n):
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        Q, R = np.linalg.qr(X)
        out.append(Q * (np.diag(R) / np.abs(np.diag(R)))[None, :])
    return out


@dataclass
class NestingReport:
    times: list
    p_violations: list = field(default_factory=list)
    r_violations: list = field(default_factory=list)
    containment_violations: list = field(default_factory=list)
    cauchy_gaps: list = field(default_factory=list)
    containment_checked: int = 0
    unresolved: int = 0

    @property
    def ok(self) -> bool:
        return not (self.p_violations or self.r_violations or self.containment_violations)


def nesting_report(disks: Sequence[WeylDisk], tol: float = 1e-8, rng=None) -> NestingReport:
    """Monotonicity of P and R, containment of later boundaries, centre gaps.

    P and R comparisons are relative to the norm of the larger matrix of each
    pair.  Boundary points of every later disk are tested against every
    earlier disk.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    ds = sorted((d for d in disks if d.P_positive), key=lambda d: d.t)
    rep = NestingReport([d.t for d in ds])
    if len(ds) < 2:
        return rep
    n = ds[0].n
    Vs = sample_contractions(n, rng)
    for j in range(1, len(ds)):
        t = ds[j]
        bpts = [boundary_point(t, V) for V in Vs]
        for i in range(j):
            tau = ds[i]
            if not mk.loewner_geq(t.P, tau.P, tol, scale=mk.norm(t.P)):
                rep.p_violations.append((tau.t, t.t, mk.min_eig(t.P - tau.P)))
            if not mk.loewner_geq(tau.radius, t.radius, tol, scale=mk.norm(tau.radius)):
                rep.r_violations.append((tau.t, t.t, mk.min_eig(tau.radius - t.radius)))
            for l in bpts:
                m = membership(tau, l, tol)
                rep.containment_checked += 1
                rep.unresolved += not m.resolved
                if not m.contained:
                    rep.containment_violations.append((tau.t, t.t, m.quad_margin))
        rep.cauchy_gaps.append(mk.norm(t.center - ds[j - 1].center))
    return rep
