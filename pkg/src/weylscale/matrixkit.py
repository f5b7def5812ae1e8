"""Small dense-matrix helpers: Hermitian parts, semidefinite order, square roots."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    IllConditioned,
    IndefiniteInput,
    NonSquare,
    NotHermitian,
)

PSD_TOL = 1e-9
COND_CAP = 1e12


class HermitianDecomposition(NamedTuple):
    re_part: np.ndarray
    im_part: np.ndarray


class PsdResult(NamedTuple):
    psd: bool
    min_eig: float


def _square(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")
    return M


def norm(M) -> float:
    """Spectral norm (0 for empty input)."""
    M = np.asarray(M)
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def hermitian_split(M) -> HermitianDecomposition:
    """Return Hermitian ``(Re M, Im M)`` with ``M = Re M + i Im M``."""
    M = _square(M).astype(complex)
    MH = M.conj().T
    return HermitianDecomposition((M + MH) / 2, (M - MH) / 2j)


def re(M) -> np.ndarray:
    """Hermitian real part ``(M + M*) / 2``."""
    return hermitian_split(M).re_part


def _hermitian_eigvalsh(M, tol):
    M = _square(M)
    scale = max(1.0, norm(M))
    if norm(M - M.conj().T) > tol * scale:
        raise NotHermitian(
            f"matrix departs from Hermitian by {norm(M - M.conj().T):.3e}"
        )
    H = (M + M.conj().T) / 2
    return np.linalg.eigvalsh(H), scale


def psd_check(M, tol: float = PSD_TOL) -> PsdResult:
    """Positive semidefiniteness with a relative floor ``-tol * max(1, ||M||)``."""
    w, scale = _hermitian_eigvalsh(M, max(tol, 1e-12))
    lo = float(w[0]) if w.size else 0.0
    return PsdResult(lo >= -tol * scale, lo)


def psd_sqrt(M, tol: float = PSD_TOL) -> np.ndarray:
    """Hermitian psd square root; small negative eigenvalues are clamped."""
    M = _square(M)
    H = (M + M.conj().T) / 2
    if norm(M - M.conj().T) > max(tol, 1e-12) * max(1.0, norm(M)):
        raise NotHermitian("psd_sqrt needs a Hermitian matrix")
    w, V = np.linalg.eigh(H)
    if w.size and w[0] < -tol * max(1.0, norm(M)):
        raise IndefiniteInput(f"smallest eigenvalue {w[0]:.3e} is negative")
    r = np.sqrt(np.clip(w, 0.0, None))
    return (V * r) @ V.conj().T


def loewner_geq(Mbig, Msmall, tol: float = PSD_TOL, scale: float | None = None) -> bool:
    """``Mbig >= Msmall`` in the Loewner order, up to a relative tolerance.

    The eigenvalue floor is ``-tol * scale``; by default ``scale`` is
    ``max(1, ||Mbig||, ||Msmall||)``.
    """
    Mbig = _square(Mbig)
    Msmall = _square(Msmall)
    if Mbig.shape != Msmall.shape:
        raise DimensionMismatch(f"shapes {Mbig.shape} and {Msmall.shape} differ")
    D = Mbig - Msmall
    D = (D + D.conj().T) / 2
    if scale is None:
        scale = max(1.0, norm(Mbig), norm(Msmall))
    w = np.linalg.eigvalsh(D)
    return bool(w[0] >= -tol * scale) if w.size else True


def min_eig(M) -> float:
    M = _square(M)
    return float(np.linalg.eigvalsh((M + M.conj().T) / 2)[0])


def cond(M) -> float:
    M = np.asarray(M)
    try:
        return float(np.linalg.cond(M))
    except np.linalg.LinAlgError:
        return float("inf")


def solve(M, rhs, cap: float = COND_CAP, what: str = "matrix") -> np.ndarray:
    """LU solve with a condition-number guard."""
    M = _square(M)
    c = cond(M)
    if not np.isfinite(c) or c > cap:
        raise IllConditioned(f"{what} has condition number {c:.3e} > {cap:.1e}")
    return sla.solve(M, rhs)


def inverse(M, cap: float = COND_CAP, what: str = "matrix") -> np.ndarray:
    M = _square(M)
    return solve(M, np.eye(M.shape[0], dtype=np.result_type(M, float)), cap, what)
