import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weylscale import (
    build_even_order,
    build_fourth_order,
    build_orr_sommerfeld,
    build_sturm_liouville,
    fundamental_pair,
    make_continuous,
    make_discrete,
    reconstruct_scalar,
    regressivity_check,
    weight_W,
)
from weylscale.errors import (
    LengthMismatch,
    NonPositiveParams,
    NonPositiveW,
    VariantMismatch,
    ZeroCoefficient,
)
from weylscale.problems import admissibility_margin, cone_contains, couette, poiseuille, w_formula

seeds = st.integers(0, 2**32 - 1)


def _grid(rng, N=30):
    pts = np.concatenate([[0.0], np.cumsum(rng.uniform(0.2, 1.0, N - 1))])
    return make_discrete(-0.5, pts)


def _problems(rng):
    """One of each variant with smooth random coefficients."""
    c = rng.uniform(0.2, 1.0, 6)
    eta = rng.uniform(-1.2, 1.2)
    p = lambda t: 1.0 + c[0] * np.sin(t) ** 2  # noqa: E731
    q = lambda t: c[1] * np.cos(t)  # noqa: E731
    w = lambda t: 1.0 + c[2] / (1 + t * t)  # noqa: E731
    V, Vdd = poiseuille(0, 6)
    return [
        build_sturm_liouville(p, q, w, eta),
        build_fourth_order(q, c[3], p, w, eta),
        build_even_order([q, c[3], c[4], p], w, 3, eta),
        build_orr_sommerfeld(c[5], 10 * c[4], V, Vdd, eta),
    ]


@given(seeds)
def test_w_formula_matches_weight(seed):
    rng = np.random.default_rng(seed)
    lam = complex(*rng.standard_normal(2))
    for prob in _problems(rng):
        for t in rng.uniform(0, 6, 4):
            s = t + rng.uniform(0, 1)
            W = weight_W(prob.sys, prob.rot, t, lam, s).W
            assert np.abs(W - w_formula(prob.spec, t, s, lam)).max() <= 1e-13 * max(1, np.abs(W).max())


@given(seeds)
def test_regressive_on_discrete_grids(seed):
    rng = np.random.default_rng(seed)
    ts = _grid(rng)
    lam = complex(rng.standard_normal(), rng.uniform(0.1, 2))
    for prob in _problems(rng):
        assert regressivity_check(prob.sys, ts, lam)


@given(seeds)
def test_discrete_reconstruction(seed):
    rng = np.random.default_rng(seed)
    ts = _grid(rng, 20)
    lam = complex(rng.standard_normal(), rng.uniform(0.1, 2))
    for prob in _problems(rng):
        traj = fundamental_pair(prob.sys, ts, lam)
        for col in range(2 * prob.sys.n):
            y = traj.Yhat[:, :, col]
            rec = reconstruct_scalar(prob.spec, prob.sys, ts, y, lam)
            scale = max(1.0, np.abs(y).max())
            assert rec.residual_max <= 1e-10 * scale


def test_continuous_reconstruction():
    ts = make_continuous(0, 2, 0.005)
    lam = 0.5 + 1j
    V = lambda t: np.cos(t)  # noqa: E731
    Vdd = lambda t: -np.cos(t)  # noqa: E731
    probs = [
        build_sturm_liouville(lambda t: 1 + 0.3 * np.sin(t), 0.5, 1.0),
        build_fourth_order(0.5, 1.0, lambda t: 1 + 0.2 * t, 1.0),
        build_orr_sommerfeld(1.0, 5.0, V, Vdd),
    ]
    for prob in probs:
        traj = fundamental_pair(prob.sys, ts, lam)
        for col in range(2 * prob.sys.n):
            y = traj.Yhat[:, :, col]
            rec = reconstruct_scalar(prob.spec, prob.sys, ts, y, lam)
            assert rec.residual_max <= 1e-6 * max(1.0, np.abs(y).max())


def test_even_order_specializes():
    rng = np.random.default_rng(4)
    ts = _grid(rng, 10)
    for a, b in ((build_sturm_liouville(2.0, 0.5, 1.5), build_even_order([0.5, 2.0], 1.5, 1)),
                 (build_fourth_order(0.5, 0.3, 2.0, 1.5), build_even_order([0.5, 0.3, 2.0], 1.5, 2))):
        for t, s in zip(ts.points[:-1], ts.points[1:]):
            assert np.array_equal(a.sys.pencil(t, s, 1j), b.sys.pencil(t, s, 1j))


def test_constructor_errors():
    ts = make_discrete(-1, [0, 1, 2])
    with pytest.raises(ZeroCoefficient):
        build_sturm_liouville(lambda t: t - 1, 0, 1, ts=ts)
    with pytest.raises(NonPositiveW):
        build_sturm_liouville(1, 0, lambda t: 1 - t, ts=ts)
    with pytest.raises(LengthMismatch):
        build_even_order([1, 1], 1, 2)
    with pytest.raises(NonPositiveParams):
        build_orr_sommerfeld(0.0, 1.0, 0.0)
    with pytest.raises(NonPositiveParams):
        build_orr_sommerfeld(1.0, -1.0, 0.0)
    sl = build_sturm_liouville(1, 0, 1)
    fo = build_fourth_order(1, 1, 1, 1)
    with pytest.raises(VariantMismatch):
        reconstruct_scalar(fo.spec, sl.sys, ts, np.zeros((3, 2)), 1j)


def test_admissibility_and_cone():
    ts = make_continuous(0, 1, 0.1)
    sl = build_sturm_liouville(1, 0, 1, eta=np.pi / 2)
    # the q - lam0 w term gives Im(lam0), the p term gives cos(eta)
    assert admissibility_margin(sl.spec, ts, 0.25j) == pytest.approx(0.0, abs=1e-12)
    tilted = build_sturm_liouville(1, 0, 1, eta=1.0)
    assert admissibility_margin(tilted.spec, ts, -1.0) == pytest.approx(np.cos(1.0), rel=1e-12)
    assert admissibility_margin(sl.spec, ts, -0.25j) == pytest.approx(-0.25)
    # Re[(lam - lam0) i] < 0 exactly when Im lam > Im lam0
    assert cone_contains(sl.spec, 1j, 0.0) and not cone_contains(sl.spec, -1j, 0.0)
    os_prob = build_orr_sommerfeld(1.0, 1.0, *couette(0, 1), eta=2.0)
    assert admissibility_margin(os_prob.spec, ts, 0.0) == -np.inf


def test_profiles():
    V, Vdd = poiseuille(0, 8)
    assert V(4.0) == 1.0 and V(0.0) == 0.0 and V(9.0) == 0.0
    assert Vdd(4.0) == pytest.approx(-2 / 16)
    V, Vdd = couette(0, 2)
    assert V(1.0) == 0.0 and V(5.0) == 1.0 and Vdd(1.0) == 0.0
