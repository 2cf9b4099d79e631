"""Exact draws from truncated normal and truncated gamma distributions.

The normal sampler accepts a region made of one or two disjoint intervals
(the two-interval case arises from quadratic truncation constraints).  Far
one-sided tails use Robert's exponentially tilted rejection; everything
else goes through the inverse CDF evaluated on whichever of the lower/upper
probability scales is accurate.

When the probability mass of the region underflows to zero the samplers
fall back to the feasible point nearest the mean/mode.  Fallbacks are
deterministic and counted; callers decide how much of that they tolerate.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammaincinv, gammainccinv, ndtr, ndtri

from .errors import DomainError, InfeasibleStateError

_INF = math.inf
_ROBERT_CUTOFF = 3.0  # standardized one-sided bound beyond which rejection is used


@dataclass
class UnderflowCounter:
    """Tallies truncated-sampler calls and underflow fallbacks."""

    attempts: int = 0
    fallbacks: int = 0

    def note(self, fallback: bool) -> None:
        self.attempts += 1
        if fallback:
            self.fallbacks += 1

    @property
    def rate(self) -> float:
        return self.fallbacks / self.attempts if self.attempts else 0.0

    def merge(self, other: "UnderflowCounter") -> None:
        self.attempts += other.attempts
        self.fallbacks += other.fallbacks


@dataclass(frozen=True)
class IntervalSet:
    """One or two disjoint closed intervals, sorted ascending."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not 1 <= len(self.intervals) <= 2:
            raise DomainError(f"need 1 or 2 intervals, got {len(self.intervals)}")
        for lo, hi in self.intervals:
            if not lo < hi:
                raise DomainError(f"empty interval [{lo}, {hi}]")
        if len(self.intervals) == 2 and self.intervals[0][1] >= self.intervals[1][0]:
            raise DomainError(f"intervals overlap or unsorted: {self.intervals}")

    @classmethod
    def whole_line(cls) -> "IntervalSet":
        return cls(((-_INF, _INF),))

    @classmethod
    def of(cls, lo: float, hi: float) -> "IntervalSet":
        return cls(((lo, hi),))

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.intervals)


def intersect(lo1: float, hi1: float, lo2: float, hi2: float):
    """Intersection of two open intervals, or None when empty."""
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    return (lo, hi) if lo < hi else None


def interval_from_affine(c: float, d: float, lo: float, hi: float):
    """Solve lo < c*x + d < hi for x.  Returns (lo, hi), 'all', or None."""
    if c == 0.0:
        return "all" if lo < d < hi else None
    a, b = (lo - d) / c, (hi - d) / c
    if c < 0.0:
        a, b = b, a
    return (a, b) if a < b else None


# ---------------------------------------------------------------------------
# normal


def _norm_cdf(z: float) -> float:
    return float(ndtr(z))


def _norm_sf(z: float) -> float:
    return float(ndtr(-z))


def _interval_mass(a: float, b: float) -> float:
    """P(a < Z < b) for standard normal, stable in either tail."""
    if a >= 0.0:
        return _norm_sf(a) - _norm_sf(b)
    if b <= 0.0:
        return _norm_cdf(b) - _norm_cdf(a)
    return _norm_cdf(b) - _norm_cdf(a)


def _robert_tail(a: float, rng) -> float:
    # One-sided [a, inf) for a > 0: z = a + Exp(lam), accept w.p. exp(-(z-lam)^2/2).
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a - math.log1p(-rng.random()) / lam
        u = rng.random()
        if u <= math.exp(-0.5 * (z - lam) ** 2):
            return z


def _std_interval_quantile(a: float, b: float, u: float) -> float:
    """Quantile of the standard normal restricted to [a, b]."""
    if a >= 0.0:
        sa, sb = _norm_sf(a), _norm_sf(b)
        s = sa + u * (sb - sa)
        if s <= 0.0:
            return b if math.isfinite(b) else a
        z = -float(ndtri(s))
    elif b <= 0.0:
        return -_std_interval_quantile(-b, -a, 1.0 - u)
    else:
        fa, fb = _norm_cdf(a), _norm_cdf(b)
        z = float(ndtri(fa + u * (fb - fa)))
    return min(max(z, a), b)


def truncated_normal_quantile(mean: float, variance: float, lo: float, hi: float, u: float) -> float:
    """Deterministic inverse-CDF of N(mean, variance) on [lo, hi] at u."""
    sd = math.sqrt(variance)
    a, b = (lo - mean) / sd, (hi - mean) / sd
    return mean + sd * _std_interval_quantile(a, b, u)


def _nearest_inside(a: float, b: float, target: float) -> float:
    # Feasible point of [a, b] closest to target, nudged strictly inside.
    if a <= target <= b:
        return target
    if target < a:
        return np.nextafter(a, b)
    return np.nextafter(b, a)


def clamp_open(x: float, lo: float, hi: float) -> float:
    """Pull x one ulp inside (lo, hi) if rounding left it on a boundary."""
    if x <= lo:
        return float(np.nextafter(lo, hi))
    if x >= hi:
        return float(np.nextafter(hi, lo))
    return x


def truncated_normal(mean: float, variance: float, region: IntervalSet, rng,
                     counter: UnderflowCounter | None = None) -> float:
    """Exact draw from N(mean, variance) restricted to ``region``.

    For a two-interval region the interval is chosen with probability
    proportional to its normal mass.  Returns the feasible point nearest the
    mean when every interval mass underflows (counted as a fallback).
    """
    if variance <= 0.0 or not math.isfinite(variance):
        raise DomainError(f"variance must be positive finite, got {variance}")
    sd = math.sqrt(variance)
    std = [((lo - mean) / sd, (hi - mean) / sd) for lo, hi in region.intervals]

    masses = [_interval_mass(a, b) for a, b in std]
    total = sum(masses)
    if total <= 0.0:
        # all mass underflowed: deterministic fallback, nearest feasible to mean
        cands = [_nearest_inside(a, b, 0.0) for a, b in std]
        z = min(cands, key=abs)
        if counter is not None:
            counter.note(fallback=True)
        return mean + sd * z

    if len(std) == 2:
        k = 0 if rng.random() * total < masses[0] else 1
    else:
        k = 0
    a, b = std[k]

    if a == -_INF and b == _INF:
        z = rng.standard_normal()
    elif b == _INF and a > _ROBERT_CUTOFF:
        z = _robert_tail(a, rng)
    elif a == -_INF and b < -_ROBERT_CUTOFF:
        z = -_robert_tail(-b, rng)
    else:
        z = _std_interval_quantile(a, b, rng.random())
    if counter is not None:
        counter.note(fallback=False)
    return mean + sd * z


def uniform_on_intervals(region: IntervalSet, rng) -> float:
    """Uniform draw over a bounded interval set (flat-density limit)."""
    if not region.bounded:
        raise InfeasibleStateError("uniform draw on unbounded region is improper")
    lengths = [hi - lo for lo, hi in region.intervals]
    total = sum(lengths)
    x = rng.random() * total
    for (lo, hi), ln in zip(region.intervals, lengths):
        if x <= ln:
            return lo + x
        x -= ln
    return region.intervals[-1][1]


# ---------------------------------------------------------------------------
# gamma


def _power_law_quantile(shape: float, lo: float, hi: float, u: float) -> float:
    # rate == 0 limit: density x^(shape-1) on a bounded interval.  Log-space
    # arithmetic keeps hi**shape from overflowing for heavy-tailed bounds.
    if not math.isfinite(hi):
        raise InfeasibleStateError("rate-0 truncated gamma needs a bounded interval")
    if u <= 0.0:
        return lo
    llo = shape * math.log(lo) if lo > 0.0 else -_INF
    lhi = shape * math.log(hi)
    lq = lhi + math.log(u + (1.0 - u) * math.exp(min(llo - lhi, 0.0)))
    return min(max(math.exp(lq / shape), lo), hi)


def truncated_gamma_quantile(shape: float, rate: float, lo: float, hi: float, u: float) -> float:
    """Inverse CDF at u of Gamma(shape, rate) restricted to [lo, hi].

    ``rate == 0`` is the prior-only limit (pure power density); it requires a
    bounded interval.
    """
    if shape <= 0.0:
        raise DomainError(f"shape must be positive, got {shape}")
    if rate < 0.0:
        raise DomainError(f"rate must be nonnegative, got {rate}")
    if rate == 0.0:
        return _power_law_quantile(shape, lo, hi, u)
    tlo, thi = rate * lo, rate * hi
    flo = float(gammainc(shape, tlo))
    if flo < 0.95:
        fhi = float(gammainc(shape, thi)) if math.isfinite(thi) else 1.0
        mass = fhi - flo
        if mass <= 0.0:
            return math.nan
        t = float(gammaincinv(shape, flo + u * mass))
    else:
        # deep right tail: work on the survival scale
        qlo = float(gammaincc(shape, tlo))
        qhi = float(gammaincc(shape, thi)) if math.isfinite(thi) else 0.0
        if qlo - qhi <= 0.0:
            return math.nan
        t = float(gammainccinv(shape, qlo + u * (qhi - qlo)))
    return min(max(t / rate, lo), hi)


def truncated_gamma(shape: float, rate: float, lo: float, hi: float, rng,
                    counter: UnderflowCounter | None = None) -> float:
    """Exact draw from Gamma(shape, rate) restricted to [lo, hi] in (0, inf)."""
    if not 0.0 <= lo < hi:
        raise DomainError(f"need 0 <= lo < hi, got [{lo}, {hi}]")
    x = truncated_gamma_quantile(shape, rate, lo, hi, rng.random())
    if math.isnan(x):
        # interval mass underflowed: feasible point nearest the mode
        mode = (shape - 1.0) / rate if shape >= 1.0 and rate > 0.0 else lo
        x = _nearest_inside(lo, hi, mode)
        if counter is not None:
            counter.note(fallback=True)
        return x
    if counter is not None:
        counter.note(fallback=False)
    return x
