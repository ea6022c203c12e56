import numpy as np
import pytest
from hypothesis import given, strategies as st

from xvabsde.errors import InputError, OrderingError
from xvabsde.term_structures import (Curve, RateEnvironment, TimeGrid, discount_factor,
                                     effective_rate_tilde)


def test_flat_discount_factor():
    assert discount_factor(Curve.flat(0.01), 0.0, 1.0) == pytest.approx(0.990050, abs=5e-7)
    assert discount_factor(Curve.flat(0.01), 0.0, 1.0) == np.exp(-0.01)


def test_empty_interval_discount_is_one():
    c = Curve.from_pairs([[0, 0.01], [0.3, -0.02], [2, 0.05]])
    for t in (0.0, 0.3, 0.7, 5.0):
        assert discount_factor(c, t, t) == 1.0


def test_piecewise_integration():
    c = Curve.from_pairs([[0, 0.01], [0.5, 0.03]])
    assert discount_factor(c, 0, 1) == pytest.approx(np.exp(-0.02), rel=1e-15)


def test_ordering_error():
    with pytest.raises(OrderingError):
        discount_factor(Curve.flat(0.01), 1.0, 0.5)


def test_curve_validation():
    with pytest.raises(InputError):
        Curve.from_pairs([[0.1, 0.01]])
    with pytest.raises(InputError):
        Curve.from_pairs([[0, 0.01], [0, 0.02]])
    with pytest.raises(InputError):
        Curve.from_pairs([[0, np.nan]])


def test_left_continuous_levels_and_flat_extrapolation():
    c = Curve.from_pairs([[0, 0.01], [1, 0.02]])
    assert c(0.999) == 0.01
    assert c(1.0) == 0.02
    assert c(50.0) == 0.02


def test_tilde_rate_sec4():
    env = RateEnvironment.flat(0.01, lambdaC=0.04)
    tilde = effective_rate_tilde(env)
    assert tilde.is_flat()
    assert tilde(0.3) == pytest.approx(0.05, abs=1e-17)


def test_tilde_rate_zero():
    tilde = effective_rate_tilde(RateEnvironment.flat(0.0))
    assert np.all(tilde.levels == 0.0)


def test_tilde_rate_merged_pillars():
    env = RateEnvironment.flat(0.0, lambdaC=0.04, lambdaB=0.01).with_overrides(
        r=Curve.from_pairs([[0, 0.01], [1, 0.02]]))
    tilde = effective_rate_tilde(env)
    np.testing.assert_allclose(tilde.to_pairs(), [[0, 0.06], [1, 0.07]], rtol=1e-15)


def test_environment_invariants():
    with pytest.raises(InputError):
        RateEnvironment.flat(0.01, rfl=0.06, rfb=0.05)
    with pytest.raises(InputError):
        RateEnvironment.flat(0.01, lambdaC=-0.01)
    with pytest.raises(InputError):
        RateEnvironment.flat(0.01, RC=1.0)
    with pytest.raises(InputError):
        RateEnvironment.flat(0.01, RB=0.0)


def test_time_grid():
    g = TimeGrid.uniform(1.0, 4)
    assert g.n_steps == 4 and g.horizon == 1.0
    assert g.trapezoid_weights().sum() == pytest.approx(1.0)
    with pytest.raises(InputError):
        TimeGrid.uniform(0.0, 4)


levels = st.floats(-0.05, 0.2)
pillar_curves = st.lists(st.tuples(st.floats(0.01, 3.0), levels), min_size=0, max_size=5).map(
    lambda xs: Curve.from_pairs([[0.0, 0.02]] + [[t, v] for t, v in sorted(dict(xs).items())]))
times3 = st.lists(st.floats(0, 5), min_size=3, max_size=3).map(sorted)


@given(pillar_curves, times3)
def test_discount_multiplicative(curve, ts):
    t1, t2, t3 = ts
    lhs = discount_factor(curve, t1, t3)
    rhs = discount_factor(curve, t1, t2) * discount_factor(curve, t2, t3)
    assert lhs == pytest.approx(rhs, rel=1e-14, abs=0)


@given(pillar_curves, st.floats(0, 4), st.floats(0, 1), st.floats(0, 1))
def test_discount_monotone_for_nonnegative_rates(curve, t1, a, b):
    curve = Curve(curve.times, np.abs(curve.levels))
    lo, hi = sorted((a, b))
    assert discount_factor(curve, t1, t1 + hi) <= discount_factor(curve, t1, t1 + lo)


@given(pillar_curves, pillar_curves, st.floats(0, 6))
def test_tilde_pointwise_exact(r, lam, t):
    lam = Curve(lam.times, np.abs(lam.levels))
    env = RateEnvironment.flat(0.0).with_overrides(r=r, lambdaC=lam, lambdaB=lam)
    assert effective_rate_tilde(env)(t) == r(t) + lam(t) + lam(t)
