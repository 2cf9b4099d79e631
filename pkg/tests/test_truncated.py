import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from smugibbs.errors import DomainError, InfeasibleStateError
from smugibbs.truncated import (
    IntervalSet,
    UnderflowCounter,
    interval_from_affine,
    intersect,
    truncated_gamma,
    truncated_gamma_quantile,
    truncated_normal,
    truncated_normal_quantile,
    uniform_on_intervals,
)

INF = math.inf


def empirical_ks(draws, cdf):
    xs = np.sort(draws)
    n = len(xs)
    f = cdf(xs)
    grid = np.arange(1, n + 1) / n
    return max(np.max(np.abs(grid - f)), np.max(np.abs(grid - 1.0 / n - f)))


# ---------------------------------------------------------------------------
# interval plumbing


def test_interval_set_validation():
    with pytest.raises(DomainError):
        IntervalSet(((1.0, 1.0),))
    with pytest.raises(DomainError):
        IntervalSet(((0.0, 2.0), (1.0, 3.0)))
    with pytest.raises(DomainError):
        IntervalSet(())
    region = IntervalSet(((-2.0, -1.0), (1.0, 2.0)))
    assert region.contains(-1.5) and region.contains(1.0) and not region.contains(0.0)


def test_intersect():
    assert intersect(0.0, 2.0, 1.0, 3.0) == (1.0, 2.0)
    assert intersect(0.0, 1.0, 2.0, 3.0) is None
    assert intersect(-INF, INF, 0.0, 1.0) == (0.0, 1.0)


def test_interval_from_affine():
    assert interval_from_affine(2.0, 1.0, -1.0, 3.0) == (-1.0, 1.0)
    assert interval_from_affine(-1.0, 0.0, -2.0, 4.0) == (-4.0, 2.0)
    assert interval_from_affine(0.0, 0.5, 0.0, 1.0) == "all"
    assert interval_from_affine(0.0, 2.0, 0.0, 1.0) is None


# ---------------------------------------------------------------------------
# truncated normal


def test_truncated_normal_unconstrained_mean():
    rng = np.random.default_rng(1)
    region = IntervalSet.whole_line()
    draws = np.array([truncated_normal(0.0, 1.0, region, rng) for _ in range(10**5)])
    assert abs(draws.mean()) < 0.01


def test_truncated_normal_far_tail_mean():
    # oracle: E[Z | Z > 4] = phi(4) / Phibar(4) by quadrature
    num = integrate.quad(lambda z: z * norm.pdf(z), 4.0, 10.0)[0]
    den = integrate.quad(norm.pdf, 4.0, 10.0)[0]
    oracle = num / den
    assert oracle == pytest.approx(4.225607, abs=1e-5)
    assert oracle == pytest.approx(norm.pdf(4.0) / norm.sf(4.0), rel=1e-8)
    rng = np.random.default_rng(2)
    region = IntervalSet.of(4.0, INF)
    draws = np.array([truncated_normal(0.0, 1.0, region, rng) for _ in range(10**6)])
    assert draws.min() >= 4.0
    assert draws.mean() == pytest.approx(oracle, abs=0.005)


def test_truncated_normal_two_interval_split():
    rng = np.random.default_rng(3)
    region = IntervalSet(((-2.0, -1.0), (1.0, 2.0)))
    draws = np.array([truncated_normal(0.0, 1.0, region, rng) for _ in range(20000)])
    frac_left = np.mean(draws < 0.0)
    assert frac_left == pytest.approx(0.5, abs=0.02)
    assert all(region.contains(x) for x in draws)


def test_truncated_normal_ks_battery():
    cases = [
        (0.5, 2.0, (-1.0, 1.5)),
        (0.0, 1.0, (2.0, 4.0)),
        (-1.0, 0.25, (0.0, INF)),
        (0.0, 1.0, (3.5, INF)),  # Robert rejection branch
    ]
    for mean, var, (lo, hi) in cases:
        rng = np.random.default_rng(hash((mean, var, lo)) % 2**32)
        region = IntervalSet.of(lo, hi)
        draws = np.array([truncated_normal(mean, var, region, rng) for _ in range(10**5)])
        assert draws.min() >= lo and draws.max() <= hi
        sd = math.sqrt(var)
        mass = norm.cdf((hi - mean) / sd) - norm.cdf((lo - mean) / sd)

        def cdf(x):
            return (norm.cdf((x - mean) / sd) - norm.cdf((lo - mean) / sd)) / mass

        assert empirical_ks(draws, cdf) < 0.005


def test_truncated_normal_quantile_symmetry():
    # left-tail path mirrors the right-tail path
    q = truncated_normal_quantile(0.0, 1.0, -6.0, -5.0, 0.25)
    q2 = truncated_normal_quantile(0.0, 1.0, 5.0, 6.0, 0.75)
    assert q == pytest.approx(-q2, rel=1e-12)
    assert -6.0 <= q <= -5.0


def test_truncated_normal_underflow_fallback():
    rng = np.random.default_rng(4)
    counter = UnderflowCounter()
    region = IntervalSet.of(40.0, 41.0)  # mass underflows to 0
    x = truncated_normal(0.0, 1.0, region, rng, counter)
    assert region.contains(x)
    assert x == pytest.approx(40.0, abs=1e-9)  # nearest feasible to the mean
    assert counter.fallbacks == 1 and counter.attempts == 1
    assert counter.rate == 1.0


@settings(max_examples=60, deadline=None)
@given(
    mean=st.floats(-5, 5),
    var=st.floats(0.01, 25),
    lo=st.floats(-8, 7.5),
    width=st.floats(0.1, 10),
    seed=st.integers(0, 2**31),
)
def test_truncated_normal_always_inside(mean, var, lo, width, seed):
    rng = np.random.default_rng(seed)
    region = IntervalSet.of(lo, lo + width)
    x = truncated_normal(mean, var, region, rng)
    assert region.contains(x)


def test_uniform_on_intervals():
    rng = np.random.default_rng(5)
    region = IntervalSet(((0.0, 1.0), (3.0, 6.0)))
    draws = np.array([uniform_on_intervals(region, rng) for _ in range(20000)])
    assert all(region.contains(x) for x in draws)
    assert np.mean(draws < 2.0) == pytest.approx(0.25, abs=0.02)
    with pytest.raises(InfeasibleStateError):
        uniform_on_intervals(IntervalSet.of(0.0, INF), rng)


# ---------------------------------------------------------------------------
# truncated gamma


def test_truncated_gamma_exponential_mean():
    rng = np.random.default_rng(6)
    draws = np.array([truncated_gamma(1.0, 1.0, 0.0, INF, rng) for _ in range(10**6)])
    assert draws.mean() == pytest.approx(1.0, abs=0.01)


def test_truncated_gamma_quantile_closed_form():
    # Ga(1,1) on [1,2] at u=0.5: -ln(0.5 e^-1 + 0.5 e^-2)
    expected = -math.log(0.5 * math.exp(-1.0) + 0.5 * math.exp(-2.0))
    assert expected == pytest.approx(1.37989, abs=1e-5)
    got = truncated_gamma_quantile(1.0, 1.0, 1.0, 2.0, 0.5)
    assert got == pytest.approx(expected, rel=1e-10)


def test_truncated_gamma_ks_battery():
    from scipy.stats import gamma as gamma_dist

    cases = [
        (3.0, 2.0, 0.5, 1.5),
        (1.5, 0.5, 0.0, 2.0),
        (26.0, 10.0, 4.0, INF),  # right-tail survival branch
    ]
    for shape, rate, lo, hi in cases:
        rng = np.random.default_rng(hash((shape, rate, lo)) % 2**32)
        draws = np.array([truncated_gamma(shape, rate, lo, hi, rng) for _ in range(10**5)])
        assert draws.min() >= lo and draws.max() <= hi
        dist = gamma_dist(shape, scale=1.0 / rate)
        mass = dist.cdf(hi) - dist.cdf(lo)

        def cdf(x):
            return (dist.cdf(x) - dist.cdf(lo)) / mass

        assert empirical_ks(draws, cdf) < 0.005


def test_truncated_gamma_rate_zero_power_law():
    # prior-only limit: density x^(shape-1) on a bounded interval
    rng = np.random.default_rng(7)
    draws = np.array([truncated_gamma(2.0, 0.0, 0.0, 3.0, rng) for _ in range(10**5)])
    assert draws.min() >= 0.0 and draws.max() <= 3.0

    def cdf(x):
        return (x / 3.0) ** 2

    assert empirical_ks(draws, cdf) < 0.005
    with pytest.raises(InfeasibleStateError):
        truncated_gamma(2.0, 0.0, 0.0, INF, rng)


def test_truncated_gamma_underflow_fallback():
    rng = np.random.default_rng(8)
    counter = UnderflowCounter()
    x = truncated_gamma(2.0, 1.0, 800.0, 801.0, rng, counter)
    assert 800.0 <= x <= 801.0
    assert counter.fallbacks == 1


@settings(max_examples=60, deadline=None)
@given(
    shape=st.floats(0.5, 40),
    rate=st.floats(0.01, 20),
    lo=st.floats(0.0, 5),
    width=st.floats(0.05, 10),
    seed=st.integers(0, 2**31),
)
def test_truncated_gamma_always_inside(shape, rate, lo, width, seed):
    rng = np.random.default_rng(seed)
    x = truncated_gamma(shape, rate, lo, lo + width, rng)
    assert lo <= x <= lo + width
