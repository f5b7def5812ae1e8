import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from test_weylsims import random_sl
from weylscale import (
    apply_adjoint_resolvent,
    apply_resolvent,
    fundamental_pair,
    green_kernel,
    norm_inequalities,
    operator_residual,
    stable_weyl_solutions,
)
from weylscale.errors import ConeViolation, DimensionMismatch, EpsilonOutOfRange
from weylscale.resolvent import (
    duality_gap,
    injectivity_norm,
    kernel_symmetry_gap,
    make_forcing,
    tail_decreasing,
)

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def free_kernel(free_sl, free_sl_grid):
    sys, rot = free_sl
    traj = fundamental_pair(sys, free_sl_grid, 1 + 1j)
    return green_kernel(stable_weyl_solutions(traj, rot), lam0=0.5j, rot=rot), rot


def _cumsimpson(y, x):
    # scipy's cumulative_simpson drops imaginary parts
    q = integrate.cumulative_simpson
    return q(y.real, x=x, initial=0) + 1j * q(y.imag, x=x, initial=0)


def _random_kernel(seed, N=60):
    rng = np.random.default_rng(seed)
    sys, rot, ts = random_sl(rng, N)
    lam = complex(rng.uniform(-2, 2), rng.uniform(0.2, 1.5))
    traj = fundamental_pair(sys, ts, lam)
    return green_kernel(stable_weyl_solutions(traj, rot), lam0=0.0, rot=rot), rot, rng


def test_zero_forcing(free_kernel):
    kern, _ = free_kernel
    r = apply_resolvent(kern, np.zeros((len(kern.ts), 2)))
    assert not np.abs(r.Rf).any()
    assert tail_decreasing(r)


def test_variation_of_parameters_oracle(free_kernel):
    kern, _ = free_kernel
    k = np.sqrt(1 + 1j)
    t = kern.ts.points
    f1 = np.exp(-0.5 * (t - 5) ** 2)
    r = apply_resolvent(kern, np.stack([f1, 0 * f1], 1))
    # -(p v')' + q v = lam w v + f with v(0) = 0 and v in L^2
    c = _cumsimpson(np.cos(k * t) * f1, t)
    e = _cumsimpson(np.exp(1j * k * t) * f1, t)
    v = -(np.exp(1j * k * t) * c + np.cos(k * t) * (e[-1] - e)) / (1j * k)
    assert np.max(np.abs(r.Rf[:, 0] - v)) <= 1e-6
    assert r.residual_max <= 1e-6


def test_continuous_adjoint_and_duality(free_kernel):
    kern, _ = free_kernel
    rng = np.random.default_rng(3)
    f = make_forcing("gaussian", kern.ts, 1, rng)
    g = make_forcing("polynomial", kern.ts, 1, rng)
    ra = apply_adjoint_resolvent(kern, f)
    assert ra.adjoint and ra.residual_max <= 1e-6
    assert duality_gap(kern, f, g) <= 1e-6


@given(seeds)
def test_discrete_resolvent_identities(seed):
    kern, rot, rng = _random_kernel(seed)
    ts, sys = kern.ts, kern.sys
    for kind in ("gaussian", "indicator", "polynomial"):
        f = make_forcing(kind, ts, 1, rng)
        g = make_forcing(kind, ts, 1, rng)
        r = apply_resolvent(kern, f)
        scale = max(1.0, np.abs(r.Rf).max())
        assert r.residual_max <= 1e-9 * scale
        assert r.boundary["rho_t0_zero"] <= 1e-9 * scale
        assert apply_adjoint_resolvent(kern, f).residual_max <= 1e-9 * scale
        assert duality_gap(kern, f, g) <= 1e-9
        assert operator_residual(sys, ts, r, kern.lam, kern.A) <= 1e-9 * scale
        assert injectivity_norm(kern, r) > 0


@given(seeds)
def test_kernel_symmetry(seed):
    kern, _, rng = _random_kernel(seed, 20)
    for _ in range(10):
        k, j = rng.integers(0, len(kern.ts) - 1, 2)
        G = kern.pair
        scale = max(1.0, np.abs(G.psi[k]).max() * np.abs(G.chi[j]).max(),
                    np.abs(G.phi[k]).max() * np.abs(G.zeta[j]).max())
        assert kernel_symmetry_gap(kern, int(k), int(j)) <= 1e-10 * scale


@given(seeds)
def test_norm_inequality_one(seed):
    kern, rot, rng = _random_kernel(seed)
    f = make_forcing("gaussian", kern.ts, 1, rng)
    r = apply_resolvent(kern, f)
    d = norm_inequalities(kern.sys, kern.ts, rot, r, kern.lam, 0.0, 0.5 * kern.lam.imag)
    assert d["delta"] == pytest.approx(kern.lam.imag, rel=1e-12)
    assert d["ineq1_slack"] >= -1e-9 * max(1.0, d["f_A2"])
    assert d["ineq2_root_slack"] >= -1e-9


def test_epsilon_range(free_kernel):
    kern, rot = free_kernel
    r = apply_resolvent(kern, make_forcing("gaussian", kern.ts, 1, np.random.default_rng(0)))
    for eps in (0.0, 0.5, 2.0):
        with pytest.raises(EpsilonOutOfRange):
            norm_inequalities(kern.sys, kern.ts, rot, r, kern.lam, 0.5j, eps)


def test_tail_floor(free_kernel):
    kern, _ = free_kernel
    f = make_forcing("indicator", kern.ts, 1, np.random.default_rng(1))
    r = apply_resolvent(kern, f)
    assert r.tail_floor > 0
    assert all(v <= r.tail_floor for v in r.tails.values())
    assert tail_decreasing(r)
    g = make_forcing("gaussian", kern.ts, 1, np.random.default_rng(1), center=30.0, width=1.0)
    rg = apply_resolvent(kern, g)
    tails = [rg.tails[t] for t in sorted(rg.tails)]
    assert tails[1] > tails[2] and tails[0] > rg.tail_floor


def test_forcing_kinds_and_errors(free_kernel):
    kern, rot = free_kernel
    rng = np.random.default_rng(0)
    for kind in ("gaussian", "indicator", "polynomial"):
        f = make_forcing(kind, kern.ts, 1, rng)
        assert f.shape == (len(kern.ts), 2) and np.isfinite(f).all()
    with pytest.raises(ValueError):
        make_forcing("sawtooth", kern.ts, 1, rng)
    with pytest.raises(DimensionMismatch):
        apply_resolvent(kern, np.zeros((3, 2)))
    with pytest.raises(ConeViolation):
        green_kernel(kern.pair, lam0=2j, rot=rot)
