from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_discrete_system
from weylscale import (
    CoefficientSystem,
    J_matrix,
    fundamental_pair,
    greens_residual,
    make_continuous,
    make_discrete,
    make_uniform_discrete,
    propagate,
    regressivity_check,
    transform_slices,
    unhat_trajectory,
)
from weylscale.errors import DimensionMismatch, IndexOutOfRange, SingularAt

seeds = st.integers(0, 2**32 - 1)


def test_J_properties():
    for n in (1, 2, 3):
        J = J_matrix(n)
        assert np.array_equal(J @ J, -np.eye(2 * n))
        assert np.array_equal(J.conj().T, -J)


# exact rational recursion --------------------------------------------------------

def _solve_exact(M, b):
    """Gauss-Jordan over Fractions for the small blocks used here."""
    n = len(b)
    aug = [list(M[i]) + [b[i]] for i in range(n)]
    for c in range(n):
        p = next(r for r in range(c, n) if aug[r][c] != 0)
        aug[c], aug[p] = aug[p], aug[c]
        piv = aug[c][c]
        aug[c] = [x / piv for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    return [aug[i][n] for i in range(n)]


def _mat(F, v):
    return [sum(F[i][j] * v[j] for j in range(len(v))) for i in range(len(F))]


def exact_steps(blocks, mus, lam, y0, n):
    """Step the system J (y_hat^sigma - y_hat) / mu = (lam A + B) y in exact arithmetic.

    With ``y_hat = (a, b)`` the unknowns are ``a' = y1(sigma)`` and
    ``c = y2(t)``; the first block row gives ``(I + mu B2) c = b - mu (lam A1 + B1) a``.
    """
    out = [list(y0)]
    a, b = list(y0[:n]), list(y0[n:])
    for (A1, A2, B1, B2, B3, B4), mu in zip(blocks, mus):
        lhs = [[(1 if i == j else 0) + mu * B2[i][j] for j in range(n)] for i in range(n)]
        P1 = [[lam * A1[i][j] + B1[i][j] for j in range(n)] for i in range(n)]
        rhs = [b[i] - mu * x for i, x in enumerate(_mat(P1, a))]
        c = _solve_exact(lhs, rhs)
        P4 = [[lam * A2[i][j] + B4[i][j] for j in range(n)] for i in range(n)]
        a = [a[i] + mu * (u + v) for i, (u, v) in enumerate(zip(_mat(B3, a), _mat(P4, c)))]
        b = c
        out.append(a + b)
    return out


@given(seeds, st.integers(1, 2))
def test_discrete_propagation_matches_rational_recursion(seed, n):
    rng = np.random.default_rng(seed)
    steps = 5

    def dyadic(shape):
        return rng.integers(-4, 5, size=shape) / 8.0

    mus = rng.integers(1, 9, size=steps) / 4.0
    pts = np.concatenate([[0.0], np.cumsum(mus)])
    ts = make_discrete(-1.0, pts)
    arrs = [dyadic((steps + 1, n, n)) for _ in range(6)]
    arrs[0] = np.abs(arrs[0])
    arrs[1] = np.abs(arrs[1])
    sys = CoefficientSystem.from_samples(ts, *arrs)
    lam = Fraction(int(rng.integers(-8, 9)), 4)
    y0 = dyadic(2 * n)
    try:
        Y = propagate(sys, ts, float(lam), y0[:, None])[:, :, 0]
    except SingularAt:
        return
    blocks = [[[[Fraction(float(x)) for x in row] for row in arr[k]] for arr in arrs]
              for k in range(steps)]
    ex = exact_steps(blocks, [Fraction(float(m)) for m in mus], lam,
                     [Fraction(float(v)) for v in y0], n)
    for k in range(steps + 1):
        ref = np.array([float(v) for v in ex[k]])
        assert np.max(np.abs(Y[k] - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


# slices, regressivity and hatting ------------------------------------------------

@given(seeds)
def test_H_Htilde_N_identity(seed):
    sys, ts, lam = random_discrete_system(np.random.default_rng(seed), steps=10, scale=0.3)
    for k in range(len(ts) - 1):
        sl = transform_slices(sys, ts, k, lam)
        P = sys.pencil(ts.points[k], ts.points[k + 1], lam)
        gap = np.linalg.norm(P @ sl.N + np.eye(2 * sys.n) - sl.Htilde.conj().T, 2)
        assert gap <= 1e-13 * max(1.0, np.linalg.norm(P, 2))


def test_continuous_slices_trivial():
    sys = CoefficientSystem.from_constant(1, A1=[[1]], B4=[[1]])
    sl = transform_slices(sys, make_continuous(0, 1, 0.1), 3, 1j)
    assert np.array_equal(sl.H, np.eye(2)) and not sl.N.any()


def test_regressivity_failure():
    ts = make_uniform_discrete(0, 5, 1.0)
    sys = CoefficientSystem.from_constant(1, A1=[[1]], B3=[[-1.0]], B4=[[1]])
    with pytest.raises(SingularAt) as exc:
        regressivity_check(sys, ts, 1j)
    assert exc.value.t == 0.0
    assert regressivity_check(CoefficientSystem.from_constant(1, A1=[[1]], B4=[[1]]), ts, 1j)


def test_unhat_relation_discrete():
    sys, ts, lam = random_discrete_system(np.random.default_rng(5), steps=12)
    traj = fundamental_pair(sys, ts, lam)
    Y = unhat_trajectory(traj, traj.Yhat)
    n = sys.n
    assert np.allclose(Y[:-1, :n], traj.Yhat[:-1, :n])
    assert np.allclose(Y[:-1, n:], traj.Yhat[1:, n:], atol=1e-13)


def test_dimension_mismatch():
    sys = CoefficientSystem.from_constant(1, A1=[[1]], B4=[[1]])
    with pytest.raises(DimensionMismatch):
        propagate(sys, make_uniform_discrete(0, 2, 1), 1j, np.eye(3))


# solutions of the free Sturm-Liouville equation ---------------------------------------

def test_free_sl_closed_form(free_sl):
    sys, _ = free_sl
    lam = 1 + 1j
    k = np.sqrt(lam)
    ts = make_continuous(0, 5, 0.01)
    traj = fundamental_pair(sys, ts, lam)
    t = ts.points
    # theta: v(0)=0, (pv')(0)=1; phi: v(0)=-1, v'(0)=0
    assert np.max(np.abs(traj.Yhat[:, 0, 0] - np.sin(k * t) / k)) <= 1e-8
    assert np.max(np.abs(traj.Yhat[:, 0, 1] + np.cos(k * t))) <= 1e-8
    assert np.max(np.abs(traj.Yhat[:, 1, 0] - np.cos(k * t))) <= 1e-8


def test_symplectic_and_greens_continuous(free_sl):
    sys, _ = free_sl
    traj = fundamental_pair(sys, make_continuous(0, 10, 0.01), 1j)
    assert traj.symplectic_residual().max() <= 1e-6
    kT = len(traj.ts) - 1
    g = greens_residual(traj.ts, traj.Yhat, traj.dYhat, traj.Zhat, traj.dZhat, 0, kT)
    assert np.linalg.norm(g, 2) <= 1e-7


def test_greens_zero_and_range():
    ts = make_uniform_discrete(0, 3, 1)
    z = np.zeros((4, 2))
    assert not greens_residual(ts, z, z, z, z, 0, 3).any()
    with pytest.raises(IndexOutOfRange):
        greens_residual(ts, z, z, z, z, 0, 4)


@given(seeds)
def test_discrete_identities_random(seed):
    sys, ts, lam = random_discrete_system(np.random.default_rng(seed))
    traj = fundamental_pair(sys, ts, lam)
    assert np.nanmax(traj.lemma_residual(relative=False)) <= 1e-10
    assert traj.symplectic_residual().max() <= 1e-10
    for a, b in ((0, len(ts) - 1), (3, 17), (10, 10)):
        g = greens_residual(ts, traj.Yhat, traj.dYhat, traj.Zhat, traj.dZhat, a, b)
        assert np.linalg.norm(g, 2) <= 1e-10


@given(seeds)
def test_greens_arbitrary_columns(seed):
    # the formula holds for any pair of solutions, not just fundamental columns
    rng = np.random.default_rng(seed)
    sys, ts, lam = random_discrete_system(rng)
    traj = fundamental_pair(sys, ts, lam)
    c = rng.standard_normal((2 * sys.n, 1)) + 1j * rng.standard_normal((2 * sys.n, 1))
    d = rng.standard_normal((2 * sys.n, 1))
    y, z = traj.Yhat @ c, traj.Zhat @ d
    dy, dz = traj.dYhat @ c, traj.dZhat @ d
    g = greens_residual(ts, y, dy, z, dz, 0, len(ts) - 1)
    assert np.linalg.norm(g) <= 1e-10 * max(1.0, np.linalg.norm(c) * np.linalg.norm(d))
