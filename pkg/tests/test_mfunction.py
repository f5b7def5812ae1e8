import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from test_weylsims import random_sl
from weylscale import (
    cone_margin,
    coupling_identities,
    default_anchor,
    disk_at,
    fundamental_pair,
    identity_m_difference,
    m_estimate,
    make_continuous,
    stable_weyl_solutions,
    w_norm_bound,
    weyl_solutions,
)
from weylscale.errors import ConeViolation, DimensionMismatch
from weylscale.mfunction import coupling_profile

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def free_pair(free_sl, free_sl_grid):
    sys, rot = free_sl
    traj = fundamental_pair(sys, free_sl_grid, 1 + 1j)
    return stable_weyl_solutions(traj, rot), rot


def test_initial_blocks(free_pair):
    pair, _ = free_pair
    n = pair.traj.n
    assert np.allclose(pair.psi_hat[0][:n], -pair.M, atol=1e-14)
    assert np.allclose(pair.psi_hat[0][n:], np.eye(n), atol=1e-14)


def test_free_sl_weyl_solution_closed_form(free_pair):
    pair, _ = free_pair
    k = np.sqrt(1 + 1j)
    t = pair.ts.points
    # psi = theta + phi M with M = i/k is v(t) = -(i/k) exp(i k t)
    assert np.max(np.abs(pair.psi[:, 0, 0] + (1j / k) * np.exp(1j * k * t))) <= 1e-6
    assert abs(pair.M[0, 0] - 1j / k) <= 1e-6


def test_coupling_continuous(free_pair):
    pair, _ = free_pair
    a, b = coupling_profile(pair)
    assert max(a.max(), b.max()) <= 1e-6
    c = coupling_identities(pair.traj, pair, len(pair.ts) // 2)
    assert max(c.values()) <= 1e-6


@given(seeds)
def test_coupling_discrete_random_sl(seed):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng, 40)
    traj = fundamental_pair(sys, ts, complex(rng.uniform(-2, 2), rng.uniform(0.2, 1.5)))
    a, b = coupling_profile(stable_weyl_solutions(traj, rot))
    assert max(a.max(), b.max()) <= 1e-10


@given(seeds)
def test_m_inside_every_disk(seed):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng, 60)
    lam = complex(rng.uniform(-2, 2), rng.uniform(0.2, 1.5))
    T = ts.horizon
    est = m_estimate(sys, ts, rot, lam, [T / 8, T / 4, T / 2, T], 0.0)
    assert all(est.contained)
    assert est.cauchy_gap >= 0


def test_w_norm_bound_cases(free_sl):
    sys, rot = free_sl
    ts = make_continuous(0, 4, 0.01)
    traj = fundamental_pair(sys, ts, 1 + 1j)
    d = disk_at(traj, rot, len(ts) - 1)
    centre = weyl_solutions(traj, d.center)
    assert w_norm_bound(centre, rot, ts.horizon).ok
    start = w_norm_bound(centre, rot, 0.0)
    assert start.ok and start.lhs == 0.0
    outside = weyl_solutions(traj, d.center + 3 * d.radius_euclidean)
    assert not w_norm_bound(outside, rot, ts.horizon).ok


def test_literal_and_stable_agree_early(free_pair):
    pair, rot = free_pair
    lit = weyl_solutions(pair.traj, pair.M)
    k = pair.ts.index_of(5.0)
    assert np.allclose(lit.psi_hat[:k], pair.psi_hat[:k], atol=1e-6)
    with pytest.raises(DimensionMismatch):
        weyl_solutions(pair.traj, np.eye(2))


def test_default_anchor_margin(free_sl, free_sl_grid):
    sys, rot = free_sl
    xi = default_anchor(sys, rot, free_sl_grid, 0.0)
    assert cone_margin(sys, rot, free_sl_grid, xi, 0.0) == pytest.approx(1.0, rel=1e-12)
    assert xi == pytest.approx(1j)


def test_cone_violation(free_sl, free_sl_grid):
    sys, rot = free_sl
    with pytest.raises(ConeViolation):
        m_estimate(sys, free_sl_grid, rot, 1.0 - 1j, [10, 20], 0.0)
    with pytest.raises(ConeViolation):
        identity_m_difference(sys, free_sl_grid, rot, 1j, -1j, 10.0, 0.0)


def test_m_difference_swapped_and_tail(free_sl, free_sl_grid):
    sys, rot = free_sl
    r10 = identity_m_difference(sys, free_sl_grid, rot, 1j, 2j, 10.0, 0.0)
    r40 = identity_m_difference(sys, free_sl_grid, rot, 1j, 2j, 40.0, 0.0)
    assert r40.residual < r10.residual and r40.tail < r10.tail
    assert r40.swapped <= 1e-8
    same = identity_m_difference(sys, free_sl_grid, rot, 1j, 1j, 10.0, 0.0)
    assert same.residual == 0.0
