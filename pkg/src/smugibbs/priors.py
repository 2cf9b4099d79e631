"""Shrinkage-prior families built on the scale-mixture-of-uniforms device.

Any symmetric unimodal density pi can be written as
``pi(theta) = Int (1/2t) 1{|theta| < t} h(t) dt`` with mixing density
``h(t) prop -2t pi'(t)``.  Conditional on theta, the latent half-width t has
survival function ``pi(t) / pi(|theta|)`` on t > |theta|, so it can be drawn
by inverting the density itself.  Four families are supported:

========== =============================== ====================================
family      density for theta (unnorm.)    mixing density for t (unnorm.)
========== =============================== ====================================
ep          exp(-|theta|^q / tau^q)        t^q exp(-t^q / tau^q)
student_t   (1 + theta^2/tau^2)^-(nu+1)/2  t^2 (1 + t^2/tau^2)^-(nu+3)/2
gdp         (1 + |theta|/tau)^-(1+alpha)   t (1 + t/tau)^-(2+alpha)
log         log(1 + tau^2/theta^2)         (1 + t^2/tau^2)^-1  (half-Cauchy)
========== =============================== ====================================

theta and t live on the same raw scale as tau.  The samplers standardize by
tau (and any per-element multiplier) and work with the unit-scale family.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaincinv

from .errors import DomainError, InvalidSpecError

FAMILIES = ("ep", "student_t", "gdp", "log")


@dataclass(frozen=True)
class PriorSpec:
    """One shrinkage-prior family with its hyperparameters and global scale."""

    family: str
    tau: float = 1.0
    q: float | None = None
    nu: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpecError(
                f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if not self.tau > 0.0:
            raise InvalidSpecError(f"tau must be positive, got {self.tau}")
        needed = {"ep": "q", "student_t": "nu", "gdp": "alpha", "log": None}[self.family]
        if needed is not None:
            val = getattr(self, needed)
            if val is None or not val > 0.0:
                raise InvalidSpecError(f"family {self.family!r} needs {needed} > 0, got {val}")

    def with_tau(self, tau: float) -> "PriorSpec":
        return replace(self, tau=tau)


def exponential_power(q: float, tau: float = 1.0) -> PriorSpec:
    return PriorSpec("ep", tau=tau, q=q)


def student_t(nu: float, tau: float = 1.0) -> PriorSpec:
    return PriorSpec("student_t", tau=tau, nu=nu)


def double_pareto(alpha: float, tau: float = 1.0) -> PriorSpec:
    return PriorSpec("gdp", tau=tau, alpha=alpha)


def logarithmic(tau: float = 1.0) -> PriorSpec:
    return PriorSpec("log", tau=tau)


def _unit_log_density(spec: PriorSpec, y):
    """log of the unit-scale (tau=1) density kernel at y = theta / tau."""
    y = np.asarray(y, dtype=float)
    if spec.family == "ep":
        out = -np.abs(y) ** spec.q
    elif spec.family == "student_t":
        out = -0.5 * (spec.nu + 1.0) * np.log1p(y * y)
    elif spec.family == "gdp":
        out = -(1.0 + spec.alpha) * np.log1p(np.abs(y))
    else:  # log
        if np.any(y == 0.0):
            raise DomainError("logarithmic density has an infinite spike at 0")
        with np.errstate(over="ignore", divide="ignore"):
            r = 1.0 / (y * y)
        # 1/y^2 overflows for |y| < ~1e-154 and log1p underflows for
        # |y| > ~1e154; both ends use log(1 + 1/y^2) ~ -2 log |y| asymptotes
        inner = np.where(np.isfinite(r),
                         np.log1p(np.where(np.isfinite(r), r, 0.0)),
                         -2.0 * np.log(np.abs(y)))
        out = np.where(inner > 0.0, np.log(np.where(inner > 0.0, inner, 1.0)),
                       -2.0 * np.log(np.abs(y)))
    return out if out.ndim else float(out)


def log_density(spec: PriorSpec, theta):
    """Unnormalized log density of theta under the family (tau included)."""
    theta = np.asarray(theta, dtype=float)
    return _unit_log_density(spec, theta / spec.tau)


def mixing_log_density(spec: PriorSpec, t):
    """Unnormalized log of the mixing density h at t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("mixing density is supported on t > 0")
    if spec.family == "ep":
        out = spec.q * np.log(t) - (t / spec.tau) ** spec.q
    elif spec.family == "student_t":
        out = 2.0 * np.log(t) - 0.5 * (spec.nu + 3.0) * np.log1p((t / spec.tau) ** 2)
    elif spec.family == "gdp":
        out = np.log(t) - (2.0 + spec.alpha) * np.log1p(t / spec.tau)
    else:  # log
        out = -np.log1p((t / spec.tau) ** 2)
    return out if out.ndim else float(out)


def latent_scale_survival(spec: PriorSpec, theta, t):
    """P(T > t | theta) = pi(t) / pi(|theta|) for t >= |theta|.

    This is the quantity the Table-style closed forms invert: passing its
    value back through inverse_conditional_cdf recovers t.
    """
    return np.exp(log_density(spec, t) - log_density(spec, np.abs(theta)))


def inverse_conditional_cdf(spec: PriorSpec, theta, u):
    """The latent half-width t at upper-tail probability u, given theta.

    Solves pi(t) = u * pi(|theta|) for t >= |theta|; u = 1 returns |theta|
    and u -> 0 walks out the tail.  u must lie in (0, 1].
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u > 1.0)):
        raise DomainError("u must lie in (0, 1]")
    a = np.abs(np.asarray(theta, dtype=float))
    tau = spec.tau
    if spec.family == "ep":
        t = (a ** spec.q - tau ** spec.q * np.log(u)) ** (1.0 / spec.q)
    elif spec.family == "student_t":
        t = np.sqrt(u ** (-2.0 / (spec.nu + 1.0)) * (tau * tau + a * a) - tau * tau)
    elif spec.family == "gdp":
        t = u ** (-1.0 / (1.0 + spec.alpha)) * (a + tau) - tau
    else:  # log
        if np.any(a == 0.0):
            raise DomainError("logarithmic conditional is undefined at theta=0; "
                              "draw from the mixing density instead")
        with np.errstate(over="ignore", divide="ignore"):
            r = (tau / a) ** 2
        big = np.where(np.isfinite(r),
                       np.log1p(np.where(np.isfinite(r), r, 0.0)),
                       2.0 * (np.log(tau) - np.log(a)))
        x = u * big
        small = x <= 700.0
        safe = np.where(small, x, 1.0)
        t = np.where(small, tau / np.sqrt(np.expm1(safe)), tau * np.exp(-0.5 * x))
    t = np.maximum(t, a)
    return t if t.ndim else float(t)


def draw_standardized_scales(spec: PriorSpec, thetas, rng) -> np.ndarray:
    """Draw latent scales t_k > |theta_k| on the unit (standardized) scale.

    thetas are deviations already divided by their full scale, so the unit
    family applies.  theta == 0 falls back to the marginal mixing density,
    which for the logarithmic family is a draw from the half-Cauchy; the
    other families evaluate their closed form directly at 0.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    unit = spec.with_tau(1.0)
    u = 1.0 - rng.random(thetas.shape)  # (0, 1]
    if spec.family == "log":
        t = np.empty_like(thetas)
        zero = thetas == 0.0
        if np.any(zero):
            t[zero] = np.tan(0.5 * np.pi * (1.0 - u[zero]))
        if np.any(~zero):
            t[~zero] = inverse_conditional_cdf(unit, thetas[~zero], u[~zero])
    else:
        t = np.asarray(inverse_conditional_cdf(unit, thetas, u))
    return np.maximum(t, np.nextafter(np.abs(thetas), np.inf))


# ---------------------------------------------------------------------------
# global shrinkage parameter


@dataclass(frozen=True)
class TauHyperPrior:
    """Hyperprior for the global scale tau.

    kinds: ``fixed`` value; ``gamma_inv_q`` puts lambda = tau^-q ~ Ga(a, b)
    (conjugate for the ep family); ``uniform_transform`` puts
    1/(1+tau) ~ U(0, 1); ``half_cauchy`` puts tau ~ C+(0, scale).
    """

    kind: str
    value: float = math.nan
    a: float = math.nan
    b: float = math.nan
    scale: float = math.nan

    @classmethod
    def fixed(cls, value: float) -> "TauHyperPrior":
        if not value > 0.0:
            raise InvalidSpecError(f"fixed tau must be positive, got {value}")
        return cls("fixed", value=value)

    @classmethod
    def gamma_on_inverse_power(cls, a: float, b: float) -> "TauHyperPrior":
        if not (a > 0.0 and b > 0.0):
            raise InvalidSpecError("gamma hyperprior needs a > 0, b > 0")
        return cls("gamma_inv_q", a=a, b=b)

    @classmethod
    def uniform_on_transform(cls) -> "TauHyperPrior":
        return cls("uniform_transform")

    @classmethod
    def half_cauchy(cls, scale: float = 1.0) -> "TauHyperPrior":
        if not scale > 0.0:
            raise InvalidSpecError(f"half-Cauchy scale must be positive, got {scale}")
        return cls("half_cauchy", scale=scale)

    def initial_tau(self, spec: PriorSpec) -> float:
        """A feasible starting tau: fixed value or hyperprior median."""
        if self.kind == "fixed":
            return self.value
        if self.kind == "gamma_inv_q":
            if spec.q is None:
                raise InvalidSpecError("gamma_inv_q hyperprior requires the ep family")
            lam_median = float(gammaincinv(self.a, 0.5)) / self.b
            return lam_median ** (-1.0 / spec.q)
        if self.kind == "uniform_transform":
            return 1.0
        return self.scale  # half_cauchy median

    def log_prior(self, tau: float, spec: PriorSpec) -> float:
        if self.kind == "gamma_inv_q":
            if spec.q is None:
                raise InvalidSpecError("gamma_inv_q hyperprior requires the ep family")
            return (-spec.q * self.a - 1.0) * math.log(tau) - self.b * tau ** (-spec.q)
        if self.kind == "uniform_transform":
            return -2.0 * math.log1p(tau)
        if self.kind == "half_cauchy":
            return -math.log1p((tau / self.scale) ** 2)
        raise InvalidSpecError(f"no density for hyperprior kind {self.kind!r}")


def _slice_step(logf, x0: float, rng, width: float = 1.0, max_steps: int = 50) -> float:
    """One univariate slice-sampling update (stepping out, then shrinkage)."""
    y = logf(x0) + math.log(1.0 - rng.random())
    left = x0 - width * rng.random()
    right = left + width
    j = int(math.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and y < logf(left):
        left -= width
        j -= 1
    while k > 0 and y < logf(right):
        right += width
        k -= 1
    while True:
        x1 = left + rng.random() * (right - left)
        if y < logf(x1):
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def sample_tau(hyper: TauHyperPrior, spec: PriorSpec, deviations, n_elements: int, rng) -> float:
    """Draw tau from its conditional given the current matrix, T marginalized.

    The target is tau^-n_elements * prod_k g(dev_k / tau) * p(tau), where
    deviations are the centered (and multiplier-standardized) free elements.
    The ep family with the gamma_inv_q hyperprior is conjugate:
    lambda = tau^-q ~ Ga(a + n/q, b + sum |dev|^q).  Everything else is one
    slice-sampling update of log tau started from the current value.
    """
    if hyper.kind == "fixed":
        return hyper.value
    devs = np.asarray(deviations, dtype=float)
    if spec.family == "ep" and hyper.kind == "gamma_inv_q":
        shape = hyper.a + n_elements / spec.q
        rate = hyper.b + float(np.sum(np.abs(devs) ** spec.q))
        lam = rng.gamma(shape, 1.0 / rate)
        return lam ** (-1.0 / spec.q)
    if spec.family == "log":
        devs = devs[devs != 0.0]  # tau-free infinite spikes cancel

    def logf(x: float) -> float:
        tau = math.exp(x)
        lp = -n_elements * x + x  # exponent plus log-scale Jacobian
        lp += float(np.sum(_unit_log_density(spec, devs / tau)))
        lp += hyper.log_prior(tau, spec)
        return lp

    x_new = _slice_step(logf, math.log(spec.tau), rng)
    return math.exp(x_new)


# ---------------------------------------------------------------------------
# JSON wire format


def prior_from_json(obj: dict) -> tuple[PriorSpec, TauHyperPrior]:
    """Parse {"family": ..., "q"/"nu"/"alpha": ..., "tau": {...}}."""
    if not isinstance(obj, dict):
        raise InvalidSpecError(f"prior must be an object, got {type(obj).__name__}")
    family = obj.get("family")
    if family not in FAMILIES:
        raise InvalidSpecError(
            f"unknown prior family {family!r}; expected one of {', '.join(FAMILIES)}")
    tau_obj = obj.get("tau", {"fixed": 1.0})
    if isinstance(tau_obj, (int, float)):
        tau_obj = {"fixed": float(tau_obj)}
    if "fixed" in tau_obj:
        hyper = TauHyperPrior.fixed(float(tau_obj["fixed"]))
    elif "gamma_inv_q" in tau_obj:
        a, b = tau_obj["gamma_inv_q"]
        hyper = TauHyperPrior.gamma_on_inverse_power(float(a), float(b))
    elif "half_cauchy" in tau_obj:
        hyper = TauHyperPrior.half_cauchy(float(tau_obj["half_cauchy"]))
    elif "uniform_transform" in tau_obj:
        hyper = TauHyperPrior.uniform_on_transform()
    else:
        raise InvalidSpecError(f"unknown tau hyperprior {tau_obj!r}")
    spec = PriorSpec(family, tau=1.0,
                     q=obj.get("q"), nu=obj.get("nu"), alpha=obj.get("alpha"))
    spec = spec.with_tau(hyper.initial_tau(spec))
    return spec, hyper


def prior_to_json(spec: PriorSpec, hyper: TauHyperPrior) -> dict:
    out: dict = {"family": spec.family}
    for name in ("q", "nu", "alpha"):
        val = getattr(spec, name)
        if val is not None:
            out[name] = val
    if hyper.kind == "fixed":
        out["tau"] = {"fixed": hyper.value}
    elif hyper.kind == "gamma_inv_q":
        out["tau"] = {"gamma_inv_q": [hyper.a, hyper.b]}
    elif hyper.kind == "half_cauchy":
        out["tau"] = {"half_cauchy": hyper.scale}
    else:
        out["tau"] = {"uniform_transform": True}
    return out
