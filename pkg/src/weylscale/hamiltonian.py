"""Linear Hamiltonian dynamic systems ``J y_hat^Delta = (lam A + B) y``.

States are stored in hatted form ``y_hat = (y1(t), y2(rho(t)))``.  On a
discrete scale one step is ``y_hat(sigma) = (I + mu K) y_hat`` with
``K = -J (lam A + B) H``; on a continuous scale ``y_hat' = -J (lam A + B) y_hat``
is integrated with an embedded Runge-Kutta pair.

The adjoint system ``J z_hat^Delta = H* (conj(lam) A + B*) z_hat^sigma`` is
propagated directly, and also recovered from ``Z_hat = -J (Y_hat^{-1})* J``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from . import matrixkit as mk
from .errors import (
    AdjointMismatch,
    DimensionMismatch,
    IndexOutOfRange,
    IntegratorFailure,
    MissingSigmaSample,
    SingularAt,
    SingularE2,
)
from .timescale import TimeScale

COND_CAP = mk.COND_CAP
# closed-form Z_hat is trusted only where Y_hat is this well conditioned
CLOSED_FORM_COND = 1e12
# the two adjoint computations are compared only where cond(Y_hat) is below this
ADJOINT_COMPARE_COND = 1e8
ADJOINT_TOL = 1e-6

Coefficient = Callable[[float, float], np.ndarray]


def J_matrix(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]]).astype(complex)


class Blocks(NamedTuple):
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray
    B4: np.ndarray


def _as_coefficient(value, n):
    if callable(value):
        return value
    if value is None:
        value = np.zeros((n, n))
    M = np.array(value, dtype=complex).reshape(n, n)
    M.setflags(write=False)
    return lambda t, s, _M=M: _M


@dataclass(frozen=True)
class CoefficientSystem:
    """Block coefficients of ``A = diag(A1, A2)`` and ``B = [[B1, B2], [B3, B4]]``.

    Each block is a callable ``f(t, sigma_t)`` returning an ``n x n`` array; the
    second argument lets builders evaluate shifted data such as ``p(sigma(t))``.
    """

    n: int
    A1: Coefficient
    A2: Coefficient
    B1: Coefficient
    B2: Coefficient
    B3: Coefficient
    B4: Coefficient
    label: str = ""

    @classmethod
    def from_constant(cls, n, A1=None, A2=None, B1=None, B2=None, B3=None, B4=None, label=""):
        """Constant blocks; omitted blocks are zero."""
        blocks = [_as_coefficient(b, n) for b in (A1, A2, B1, B2, B3, B4)]
        return cls(n, *blocks, label=label)

    @classmethod
    def from_samples(cls, ts: TimeScale, A1, A2, B1, B2, B3, B4, label=""):
        """Piecewise-constant blocks from arrays of shape ``(len(ts), n, n)``.

        Sample ``k`` applies on ``[t_k, t_{k+1})``, matching right-dense
        continuity on discrete scales.
        """
        arrays = [np.asarray(b, dtype=complex) for b in (A1, A2, B1, B2, B3, B4)]
        n = arrays[0].shape[-1]
        pts = np.asarray(ts.points)

        def sampler(arr):
            def f(t, s):
                k = int(np.searchsorted(pts, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
                return arr[min(max(k, 0), len(arr) - 1)]

            return f

        return cls(n, *[sampler(a) for a in arrays], label=label)

    def blocks(self, t: float, s: float | None = None) -> Blocks:
        s = t if s is None or not np.isfinite(s) else s
        n = self.n
        out = []
        for f in (self.A1, self.A2, self.B1, self.B2, self.B3, self.B4):
            M = np.asarray(f(t, s), dtype=complex)
            if M.shape != (n, n):
                M = M.reshape(n, n)
            out.append(M)
        return Blocks(*out)

    def A(self, t, s=None) -> np.ndarray:
        b = self.blocks(t, s)
        Z = np.zeros((self.n, self.n))
        return np.block([[b.A1, Z], [Z, b.A2]])

    def B(self, t, s=None) -> np.ndarray:
        b = self.blocks(t, s)
        return np.block([[b.B1, b.B2], [b.B3, b.B4]])

    def pencil(self, t, s, lam) -> np.ndarray:
        """``lam A + B``."""
        b = self.blocks(t, s)
        return np.block([[lam * b.A1 + b.B1, b.B2], [b.B3, lam * b.A2 + b.B4]])


class HatState(NamedTuple):
    y1: np.ndarray
    y2rho: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.y1, self.y2rho])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v)
        if v.shape[0] % 2:
            raise DimensionMismatch("hatted state must have even length")
        n = v.shape[0] // 2
        return cls(v[:n], v[n:])


class TransformSlices(NamedTuple):
    H: np.ndarray
    Htilde: np.ndarray
    N: np.ndarray


@dataclass(frozen=True)
class _Slice:
    """Everything needed at one grid point for one lam."""

    t: float
    sigma: float
    mu: float
    blocks: Blocks
    E2: np.ndarray


def _slice(sys: CoefficientSystem, ts: TimeScale, k: int, need_mu=False) -> _Slice:
    ts._check_index(k)
    t = float(ts.points[k])
    if ts.is_discrete:
        if k + 1 < len(ts.points):
            sigma = float(ts.points[k + 1])
            mu = sigma - t
        else:
            if need_mu:
                raise MissingSigmaSample(f"sigma(t) is outside the truncated grid at t={t!r}")
            sigma = mu = float("nan")
    else:
        sigma, mu = t, 0.0
    b = sys.blocks(t, sigma)
    n = sys.n
    if mu == 0.0 or not np.isfinite(mu):
        E2 = np.eye(n, dtype=complex)
    else:
        F = np.eye(n) + mu * b.B2
        c = mk.cond(F)
        if not np.isfinite(c) or c > COND_CAP:
            raise SingularE2(t, c)
        E2 = np.linalg.solve(F, np.eye(n))
    return _Slice(t, sigma, mu, b, E2)


def _H(sl: _Slice, lam) -> np.ndarray:
    n = sl.E2.shape[0]
    if sl.mu == 0.0:
        return np.eye(2 * n, dtype=complex)
    b = sl.blocks
    Z = np.zeros((n, n))
    return np.block([[np.eye(n), Z], [-sl.mu * sl.E2 @ (lam * b.A1 + b.B1), sl.E2]])


def _Htilde(sl: _Slice, lam) -> np.ndarray:
    n = sl.E2.shape[0]
    if sl.mu == 0.0:
        return np.eye(2 * n, dtype=complex)
    b = sl.blocks
    E2s = sl.E2.conj().T
    lb = np.conj(lam)
    return np.block(
        [[E2s, -sl.mu * E2s @ (lb * b.A2 + b.B4.conj().T)], [np.zeros((n, n)), np.eye(n)]]
    )


def _N(sl: _Slice) -> np.ndarray:
    n = sl.E2.shape[0]
    N = np.zeros((2 * n, 2 * n), dtype=complex)
    if sl.mu != 0.0:
        N[n:, :n] = -sl.mu * sl.E2
    return N


def _pencil(sl: _Slice, lam) -> np.ndarray:
    b = sl.blocks
    return np.block([[lam * b.A1 + b.B1, b.B2], [b.B3, lam * b.A2 + b.B4]])


def transform_slices(sys, ts, k, lam) -> TransformSlices:
    sl = _slice(sys, ts, k, need_mu=True)
    return TransformSlices(_H(sl, lam), _Htilde(sl, lam), _N(sl))


def transfer_K(sys: CoefficientSystem, ts: TimeScale, k: int, lam) -> np.ndarray:
    """``K = -J (lam A + B) H`` at grid index ``k``."""
    sl = _slice(sys, ts, k, need_mu=ts.is_discrete)
    return -J_matrix(sys.n) @ _pencil(sl, lam) @ _H(sl, lam)


def step_factors(sys, ts, k, lam):
    """The two block-triangular factors whose product is ``I + mu K``."""
    sl = _slice(sys, ts, k, need_mu=True)
    n = sys.n
    b = sl.blocks
    upper = np.block(
        [[np.eye(n) + sl.mu * b.B3, sl.mu * (lam * b.A2 + b.B4)], [np.zeros((n, n)), np.eye(n)]]
    )
    return upper, _H(sl, lam)


def regressivity_check(sys: CoefficientSystem, ts: TimeScale, lam) -> bool:
    """Raise :class:`SingularAt` at the first scattered point where a step is not invertible."""
    if not ts.is_discrete:
        return True
    n = sys.n
    for k in range(len(ts.points) - 1):
        sl = _slice(sys, ts, k, need_mu=True)
        b = sl.blocks
        for name, F in (("I + mu*B3", np.eye(n) + sl.mu * b.B3),):
            c = mk.cond(F)
            if not np.isfinite(c) or c > COND_CAP:
                raise SingularAt(sl.t, name, c)
        step = np.eye(2 * n) + sl.mu * (-J_matrix(n) @ _pencil(sl, lam) @ _H(sl, lam))
        c = mk.cond(step)
        if not np.isfinite(c) or c > COND_CAP:
            raise SingularAt(sl.t, "I + mu*K", c)
    return True


def _forward_step(sl, lam, J):
    return np.eye(J.shape[0]) + sl.mu * (-J @ _pencil(sl, lam) @ _H(sl, lam))


def _adjoint_step_lhs(sl, lam, J):
    """``J - mu H* (conj(lam) A + B*)``; the adjoint step solves ``lhs z(sigma) = J z``."""
    return J - sl.mu * _H(sl, lam).conj().T @ _pencil(sl, lam).conj().T


def _integrate(rhs, ts: TimeScale, init, rtol, atol, direction=1):
    shape = init.shape
    pts = ts.points if direction > 0 else ts.points[::-1]
    sol = solve_ivp(
        lambda t, y: rhs(t, y.reshape(shape)).ravel(),
        (pts[0], pts[-1]),
        np.asarray(init, dtype=complex).ravel(),
        method="DOP853",
        t_eval=pts,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegratorFailure(sol.message)
    out = sol.y.T.reshape((len(pts),) + shape)
    return out if direction > 0 else out[::-1]


def propagate(sys, ts, lam, init, rtol=1e-10, atol=None) -> np.ndarray:
    """Hatted solution matrix on every grid point, starting from ``init`` at ``t0``."""
    init = np.asarray(init, dtype=complex)
    n2 = 2 * sys.n
    if init.shape[0] != n2:
        raise DimensionMismatch(f"initial value needs {n2} rows, got {init.shape[0]}")
    J = J_matrix(sys.n)
    if ts.is_discrete:
        out = np.empty((len(ts.points),) + init.shape, dtype=complex)
        out[0] = init
        for k in range(len(ts.points) - 1):
            sl = _slice(sys, ts, k, need_mu=True)
            step = _forward_step(sl, lam, J)
            c = mk.cond(step)
            if not np.isfinite(c) or c > COND_CAP:
                raise SingularAt(sl.t, "I + mu*K", c)
            out[k + 1] = step @ out[k]
        return out
    atol = rtol * 1e-3 if atol is None else atol
    return _integrate(lambda t, Y: -J @ sys.pencil(t, t, lam) @ Y, ts, init, rtol, atol)


def propagate_adjoint(sys, ts, lam, init, rtol=1e-10, atol=None) -> np.ndarray:
    """Hatted adjoint solution matrix, integrated directly."""
    init = np.asarray(init, dtype=complex)
    J = J_matrix(sys.n)
    if ts.is_discrete:
        out = np.empty((len(ts.points),) + init.shape, dtype=complex)
        out[0] = init
        for k in range(len(ts.points) - 1):
            sl = _slice(sys, ts, k, need_mu=True)
            lhs = _adjoint_step_lhs(sl, lam, J)
            out[k + 1] = mk.solve(lhs, J @ out[k], what=f"adjoint step at t={sl.t!r}")
        return out
    atol = rtol * 1e-3 if atol is None else atol
    lb = np.conj(lam)
    return _integrate(
        lambda t, Z: -J @ sys.pencil(t, t, lam).conj().T @ Z, ts, init, rtol, atol
    )


def derivative_matrices(sys, ts, lam, Yhat, adjoint=False) -> np.ndarray:
    """Delta derivative of hatted trajectories on the grid.

    Scattered points use ``(Y(sigma) - Y) / mu`` (NaN at the horizon);
    dense points use the right-hand side of the equation.
    """
    J = J_matrix(sys.n)
    out = np.empty_like(Yhat)
    if ts.is_discrete:
        mu = ts.mu.reshape((-1,) + (1,) * (Yhat.ndim - 1))
        out[:-1] = (Yhat[1:] - Yhat[:-1]) / mu
        out[-1] = np.nan
        return out
    for k, t in enumerate(ts.points):
        P = sys.pencil(t, t, lam)
        out[k] = -J @ (P.conj().T if adjoint else P) @ Yhat[k]
    return out


def _closed_form_Z(Yhat, J, cond):
    Z = np.full_like(Yhat, np.nan)
    for k, Y in enumerate(Yhat):
        if cond[k] <= CLOSED_FORM_COND:
            Yinv = np.linalg.solve(Y, np.eye(Y.shape[0]))
            Z[k] = -J @ Yinv.conj().T @ J
    return Z


@dataclass(frozen=True, eq=False)
class FundamentalTrajectory:
    """``Y_hat = (theta_hat | phi_hat)`` and ``Z_hat = (eta_hat | chi_hat)`` with value J at t0.

    ``Zhat`` is the closed form ``-J (Y_hat^{-1})* J`` wherever
    ``cond(Y_hat) <= 1e12`` and the directly propagated adjoint elsewhere
    (flagged in ``zhat_from_closed``).
    """

    sys: CoefficientSystem
    ts: TimeScale
    lam: complex
    Yhat: np.ndarray
    Zhat: np.ndarray
    Zhat_direct: np.ndarray
    zhat_from_closed: np.ndarray
    cond: np.ndarray
    adjoint_gap: float
    rtol: float = 1e-10
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def theta_hat(self):
        return self.Yhat[:, :, : self.n]

    @property
    def phi_hat(self):
        return self.Yhat[:, :, self.n :]

    @property
    def eta_hat(self):
        return self.Zhat[:, :, : self.n]

    @property
    def chi_hat(self):
        return self.Zhat[:, :, self.n :]

    @property
    def slices(self) -> list[TransformSlices | None]:
        """H, H~, N per grid point; ``None`` at a discrete horizon."""
        if "slices" not in self._cache:
            out = []
            for k in range(len(self.ts.points)):
                try:
                    out.append(transform_slices(self.sys, self.ts, k, self.lam))
                except MissingSigmaSample:
                    out.append(None)
            self._cache["slices"] = out
        return self._cache["slices"]

    @property
    def Y(self) -> np.ndarray:
        """Unhatted ``Y = H Y_hat`` (NaN where sigma is unknown)."""
        if "Y" not in self._cache:
            self._cache["Y"] = unhat_trajectory(self, self.Yhat, adjoint=False)
        return self._cache["Y"]

    @property
    def Z(self) -> np.ndarray:
        if "Z" not in self._cache:
            self._cache["Z"] = unhat_trajectory(self, self.Zhat, adjoint=True)
        return self._cache["Z"]

    @property
    def dYhat(self):
        if "dY" not in self._cache:
            self._cache["dY"] = derivative_matrices(self.sys, self.ts, self.lam, self.Yhat)
        return self._cache["dY"]

    @property
    def dZhat(self):
        if "dZ" not in self._cache:
            self._cache["dZ"] = derivative_matrices(
                self.sys, self.ts, self.lam, self.Zhat, adjoint=True
            )
        return self._cache["dZ"]

    def lemma_residual(self, relative: bool = True) -> np.ndarray:
        """``||Z_hat + J (Y_hat^{-1})* J||`` per grid point (NaN where not formed).

        Compares the directly propagated adjoint with the closed form.  By
        default the gap is divided by ``max(1, ||Z_hat||)``.
        """
        J = J_matrix(self.n)
        out = np.full(len(self.ts.points), np.nan)
        for k, Y in enumerate(self.Yhat):
            if self.cond[k] <= CLOSED_FORM_COND:
                Yinv = np.linalg.solve(Y, np.eye(2 * self.n))
                gap = mk.norm(self.Zhat_direct[k] + J @ Yinv.conj().T @ J)
                out[k] = gap / max(1.0, mk.norm(self.Zhat_direct[k])) if relative else gap
        return out

    def symplectic_residual(self, relative: bool = False) -> np.ndarray:
        """``||Z_hat* J Y_hat - J||`` per grid point, the inverse-free form of the lemma.

        With ``relative`` the value is divided by ``max(1, ||Z_hat|| ||Y_hat||)``.
        """
        J = J_matrix(self.n)
        Z = self.Zhat_direct
        out = np.array([mk.norm(Z[k].conj().T @ J @ self.Yhat[k] - J) for k in range(len(Z))])
        if relative:
            nz = np.linalg.norm(Z, ord=2, axis=(1, 2))
            ny = np.linalg.norm(self.Yhat, ord=2, axis=(1, 2))
            out = out / np.maximum(1.0, nz * ny)
        return out


def fundamental_pair(sys, ts, lam, rtol=1e-10, atol=None, check=True) -> FundamentalTrajectory:
    lam = complex(lam)
    regressivity_check(sys, ts, lam)
    J = J_matrix(sys.n)
    Yhat = propagate(sys, ts, lam, J, rtol, atol)
    Zdir = propagate_adjoint(sys, ts, lam, J, rtol, atol)
    cond = np.array([mk.cond(Y) for Y in Yhat])
    Zclosed = _closed_form_Z(Yhat, J, cond)
    closed = cond <= CLOSED_FORM_COND
    Zhat = np.where(closed[:, None, None], Zclosed, Zdir)
    cmp = cond <= ADJOINT_COMPARE_COND
    gap = 0.0
    if np.any(cmp):
        diff = [
            mk.norm(Zclosed[k] - Zdir[k]) / max(1.0, mk.norm(Zclosed[k]))
            for k in np.flatnonzero(cmp)
        ]
        gap = float(max(diff))
    if check and gap > ADJOINT_TOL:
        raise AdjointMismatch(
            f"closed-form and propagated adjoint differ by {gap:.3e} (relative); "
            "tighten the integrator tolerance"
        )
    return FundamentalTrajectory(sys, ts, lam, Yhat, Zhat, Zdir, closed, cond, gap, rtol)


def unhat(sys, ts, k, lam, yhat, adjoint=False, yhat_sigma=None) -> np.ndarray:
    """Forward: ``y = H y_hat``.  Adjoint: ``z = H~ z_hat(sigma)``.

    For the adjoint variant pass ``yhat_sigma`` (the hatted state at
    ``sigma(t_k)``); on dense points ``z = z_hat``.
    """
    ts._check_index(k)
    if not ts.is_discrete:
        return np.asarray(yhat if not adjoint or yhat_sigma is None else yhat_sigma)
    if k == len(ts.points) - 1:
        raise MissingSigmaSample(f"no grid point to the right of t={ts.points[k]!r}")
    sl = _slice(sys, ts, k, need_mu=True)
    if adjoint:
        if yhat_sigma is None:
            raise MissingSigmaSample("adjoint unhatting needs the state at sigma(t)")
        return _Htilde(sl, lam) @ np.asarray(yhat_sigma)
    return _H(sl, lam) @ np.asarray(yhat)


def unhat_trajectory(traj: FundamentalTrajectory, hat: np.ndarray, adjoint=False) -> np.ndarray:
    """Unhat a sampled hatted trajectory (grid on axis 0)."""
    ts = traj.ts
    if not ts.is_discrete:
        return hat.copy()
    out = np.full_like(hat, np.nan)
    for k, sl in enumerate(traj.slices):
        if sl is None:
            continue
        out[k] = (sl.Htilde @ hat[k + 1]) if adjoint else (sl.H @ hat[k])
    return out


def greens_residual(ts: TimeScale, yhat, dyhat, zhat, dzhat, a: int, b: int) -> np.ndarray:
    """Green's formula defect on ``[t_a, t_b]``.

    Returns ``int_a^b [z* J y_hat^Delta - (J z_hat^Delta)* y] Delta t`` minus
    ``z_hat*(b) J y_hat(b) - z_hat*(a) J y_hat(a)``.  Inputs are hatted
    trajectories (grid on axis 0, shape ``(N, 2n, m)``) with their delta
    derivatives.  The unhatted values come from the hat relation itself,
    ``y(t_k) = (y1(t_k), y2_hat(t_{k+1}))``, which holds for any function.
    """
    N = len(ts.points)
    if not (0 <= a <= b < N):
        raise IndexOutOfRange(f"range [{a}, {b}] outside grid of {N} points")
    yhat, zhat = np.asarray(yhat), np.asarray(zhat)
    if yhat.ndim == 2:
        yhat, zhat = yhat[..., None], zhat[..., None]
        dyhat, dzhat = np.asarray(dyhat)[..., None], np.asarray(dzhat)[..., None]
    n = yhat.shape[1] // 2
    J = J_matrix(n)
    boundary = _hconj(zhat[b]) @ J @ yhat[b] - _hconj(zhat[a]) @ J @ yhat[a]
    if a == b:
        return -boundary
    if ts.is_discrete:
        y = yhat[a:b].copy()
        z = zhat[a:b].copy()
        y[:, n:] = yhat[a + 1 : b + 1, n:]
        z[:, n:] = zhat[a + 1 : b + 1, n:]
        dy, dz = dyhat[a:b], dzhat[a:b]
        integrand = _hconj(z) @ J @ dy - _hconj(J @ dz) @ y
        mu = ts.mu[a:b].reshape(-1, 1, 1)
        integral = np.sum(mu * integrand, axis=0)
    else:
        from .timescale import delta_integral

        sl = slice(a, b + 1)
        integrand = _hconj(zhat[sl]) @ J @ dyhat[sl] - _hconj(J @ dzhat[sl]) @ yhat[sl]
        sub = TimeScale(ts.kind, np.array(ts.points[sl]), ts.prepoint, ts.base_step)
        integral = delta_integral(sub, integrand, 0, b - a)
    return integral - boundary


def _hconj(X):
    return np.conj(np.swapaxes(X, -1, -2))
