import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weylscale import (
    admissible,
    build_sturm_liouville,
    cone_margin,
    disk_at,
    fundamental_pair,
    make_continuous,
    make_discrete,
    make_rotation,
    make_uniform_discrete,
    membership,
    nesting_report,
    rotation_from_eta,
    stp,
    weight_W,
)
from weylscale.errors import DiskUndefined, NotContraction, SingularU
from weylscale.weylsims import boundary_point, recover_V, sample_contractions

seeds = st.integers(0, 2**32 - 1)


def _idx(ts, T):
    return ts.index_of(T)


@pytest.fixture(scope="module")
def free_traj(free_sl):
    sys, rot = free_sl
    ts = make_continuous(0, 16, 0.01)
    return fundamental_pair(sys, ts, 1 + 1j), rot


def random_sl(rng, N=80):
    """Discrete SL with sampled positive ``p``, ``w`` and real ``q`` on a random grid."""
    pts = np.concatenate([[0.0], np.cumsum(rng.uniform(0.3, 1.5, N - 1))])
    ts = make_discrete(-0.5, pts)
    p = rng.uniform(0.5, 2.0, N + 1)
    q = rng.uniform(-1.0, 1.0, N + 1)
    w = rng.uniform(0.5, 2.0, N + 1)

    def sampled(arr):
        return lambda t: arr[min(int(np.searchsorted(pts, t - 1e-12)), N)]

    sys, rot = build_sturm_liouville(sampled(p), sampled(q), sampled(w), eta=np.pi / 2, ts=ts)
    return sys, rot, ts


def test_rotation_checks():
    rot = rotation_from_eta(0.3, 2)
    assert rot.U2n.shape == (4, 4)
    with pytest.raises(SingularU):
        make_rotation(np.zeros((1, 1)))
    with pytest.raises(SingularU):
        make_rotation(np.ones((2, 3)))


def test_admissible_free_sl(free_sl):
    sys, rot = free_sl
    ts = make_continuous(0, 2, 0.1)
    assert admissible(sys, rot, ts, 0.0).verified
    assert admissible(sys, rot, ts, 0.5j).verified
    bad = admissible(sys, rot, ts, -0.5j)
    assert not bad.verified and bad.min_eig < 0


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_cone_margin_free_sl_oracle(a, b, c, d):
    # with U = -i and A = diag(1, 0) the margin is Im(lam - lam0)
    sys, rot = build_sturm_liouville(1.0, 0.0, 1.0, eta=np.pi / 2)
    ts = make_continuous(0, 1, 0.25)
    lam, lam0 = complex(a, b), complex(c, d)
    assert cone_margin(sys, rot, ts, lam, lam0) == pytest.approx(b - d, abs=1e-12)


@given(seeds)
def test_weight_adjoint_relation(seed):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng, 10)
    lam = complex(*rng.standard_normal(2))
    for t in ts.points[:-1]:
        assert weight_W(sys, rot, t, lam).gap <= 1e-13


def test_single_disk_report_empty(free_traj):
    traj, rot = free_traj
    rep = nesting_report([disk_at(traj, rot, _idx(traj.ts, 4.0))])
    assert rep.ok and rep.containment_checked == 0


def test_free_sl_nesting(free_traj):
    traj, rot = free_traj
    disks = [disk_at(traj, rot, _idx(traj.ts, T)) for T in (2.0, 4.0, 8.0, 16.0)]
    rep = nesting_report(disks, 1e-8, np.random.default_rng(0))
    assert rep.ok
    assert rep.containment_checked == 6 * 2
    assert all(b < a for a, b in zip(rep.cauchy_gaps, rep.cauchy_gaps[1:]))


def test_block_identity_crosscheck(free_traj):
    traj, rot = free_traj
    for T in (1.0, 4.0, 16.0):
        assert stp(traj, rot, _idx(traj.ts, T)).crosscheck_gap <= 1e-6


def test_euclidean_disk_n1(free_traj):
    traj, rot = free_traj
    d = disk_at(traj, rot, _idx(traj.ts, 2.0))
    r = np.sqrt(d.radius[0, 0].real / d.P[0, 0].real)
    assert d.radius_euclidean == pytest.approx(r, rel=1e-12)
    for ang in np.linspace(0, 2 * np.pi, 7):
        l = boundary_point(d, [[np.exp(1j * ang)]])
        assert abs(l[0, 0] - d.center[0, 0]) == pytest.approx(r, rel=1e-9)
    # adjoint and literal radius agree while the solutions are still small
    assert abs(d.radius - d.radius_literal)[0, 0] <= 1e-8 * abs(d.radius[0, 0])


def test_membership_equivalence(free_traj):
    traj, rot = free_traj
    d = disk_at(traj, rot, _idx(traj.ts, 2.0))
    rng = np.random.default_rng(11)
    r = d.radius_euclidean
    for _ in range(1000):
        l = d.center + r * 2 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
        m = membership(d, l, traj=traj, rot=rot)
        if abs(m.quad_margin) > 1e-8:
            assert (m.quad_margin > 0) == (m.form_margin > 0)
        assert abs(m.quad_margin - m.form_margin) <= 1e-8 * max(1.0, abs(m.quad_margin))


@given(seeds)
def test_boundary_round_trip(seed):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng, 5)
    traj = fundamental_pair(sys, ts, complex(rng.uniform(-1, 1), rng.uniform(0.3, 1)))
    d = disk_at(traj, rot, len(ts) - 1)
    assert d.radius_euclidean > 1e-6 * (1 + np.abs(d.center).max())
    for V in sample_contractions(1, rng):
        l = boundary_point(d, V)
        assert np.allclose(recover_V(d, l), V, atol=1e-9)
        assert abs(membership(d, l).quad_margin) <= 1e-8


@given(seeds)
def test_nesting_random_discrete_sl(seed):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng)
    lam = complex(rng.uniform(-2, 2), rng.uniform(0.2, 1.5))
    traj = fundamental_pair(sys, ts, lam)
    N = len(ts) - 1
    disks = [disk_at(traj, rot, k) for k in (N // 8, N // 4, N // 2, N)]
    rep = nesting_report(disks, 1e-8, rng)
    assert rep.ok, rep


def test_contraction_guard_and_undefined(free_traj):
    traj, rot = free_traj
    d = disk_at(traj, rot, _idx(traj.ts, 2.0))
    with pytest.raises(NotContraction):
        boundary_point(d, [[2.0]])
    d0 = disk_at(traj, rot, 0)
    assert not d0.P_positive
    with pytest.raises(DiskUndefined):
        membership(d0, [[0.0]])


def test_integer_grid_centres_converge(free_sl):
    sys, rot = free_sl
    ts = make_uniform_discrete(0, 400, 1.0)
    traj = fundamental_pair(sys, ts, 1j)
    C = [disk_at(traj, rot, ts.index_of(T)).center for T in (50.0, 100.0, 200.0, 400.0)]
    gaps = [np.linalg.norm(b - a) for a, b in zip(C, C[1:])]
    assert gaps[0] > gaps[1] > gaps[2] or gaps[2] <= 1e-14
