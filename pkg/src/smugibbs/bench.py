"""Simulation benchmark harness: four covariance models, losses, estimators.

Model 1 is an AR(1) covariance, model 2 a banded AR(4) precision, models 3
and 4 random sparse/dense precisions rescaled so their condition number
equals the dimension.  Losses are the entropy (Stein) loss and squared
Frobenius loss; the matching Bayes estimators are the inverse posterior-mean
precision and the posterior-mean covariance.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, NotPositiveDefiniteError
from .gibbs import ChainResult, run_chain
from .priors import PriorSpec, TauHyperPrior, double_pareto, exponential_power, logarithmic
from .spd import cholesky_lower, extremal_eigenvalues, log_det, mirror_lower, spd_inverse

_DEFAULT_ALPHA = {3: 0.1, 4: 0.5}


@dataclass(frozen=True)
class ModelSpec:
    model: int
    p: int
    alpha: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.model not in (1, 2, 3, 4):
            raise InvalidSpecError(f"model must be 1..4, got {self.model}")
        if self.p < 1:
            raise InvalidSpecError(f"p must be positive, got {self.p}")


def _condition_number(b: np.ndarray, delta: float) -> float:
    lo, hi = extremal_eigenvalues(b)
    return (hi + delta) / (lo + delta)


def _solve_delta(b: np.ndarray, target: float, tol: float = 1e-8) -> float:
    """Bisect for delta with cond(B + delta I) = target; cond is monotone
    decreasing in delta past the SPD onset."""
    lo_eig, _ = extremal_eigenvalues(b)
    left = max(0.0, -lo_eig) + 1e-12
    right = left + 1.0
    while _condition_number(b, right) > target:
        right *= 2.0
        if right > 1e12:
            raise InvalidSpecError("no delta reaches the target condition number")
    while right - left > tol:
        mid = 0.5 * (left + right)
        if _condition_number(b, mid) > target:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right)


def generate_truth(model: int, p: int, seed: int | None = None,
                   alpha: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (sigma, omega) for one of the four benchmark models."""
    spec = ModelSpec(model, p, alpha=alpha, seed=seed)
    if model == 1:
        idx = np.arange(p)
        sigma = 0.7 ** np.abs(idx[:, None] - idx[None, :])
        omega = spd_inverse(sigma)
        return sigma, omega
    if model == 2:
        omega = np.eye(p)
        bands = {1: 0.2, 2: 0.2, 3: 0.2, 4: 0.1}
        for lag, val in bands.items():
            for i in range(lag, p):
                omega[i, i - lag] = omega[i - lag, i] = val
        cholesky_lower(omega)  # banded values are SPD for the sizes used here
        return spd_inverse(omega), omega
    # models 3 and 4
    a = _DEFAULT_ALPHA[model] if alpha is None else float(alpha)
    rng = np.random.default_rng(seed)
    b = np.zeros((p, p))
    il, jl = np.tril_indices(p, -1)
    b[il, jl] = 0.5 * (rng.random(il.size) < a)
    b = mirror_lower(b)
    if p == 1:
        omega = np.array([[1.0]])
        return omega.copy(), omega
    delta = _solve_delta(b, target=float(p))
    omega = b + delta * np.eye(p)
    return spd_inverse(omega), omega


def sample_data(sigma: np.ndarray, n: int, seed: int | None = None, rng=None) -> np.ndarray:
    """n iid columns from N(0, sigma), as a p x n matrix."""
    if rng is None:
        rng = np.random.default_rng(seed)
    p = sigma.shape[0]
    if n == 0:
        return np.zeros((p, 0))
    return cholesky_lower(sigma) @ rng.standard_normal((p, n))


def stein_loss(sigma_hat: np.ndarray, sigma: np.ndarray) -> float:
    """tr(S^ S^-1) - log det(S^ S^-1) - p; zero iff the estimate is exact."""
    p = sigma.shape[0]
    tr = float(np.trace(np.linalg.solve(sigma, sigma_hat)))
    return tr - (log_det(sigma_hat) - log_det(sigma)) - p


def squared_loss(sigma_hat: np.ndarray, sigma: np.ndarray) -> float:
    d = sigma_hat - sigma
    return float(np.sum(d * d))


def bayes_estimators(draws) -> tuple[np.ndarray, np.ndarray]:
    """(inverse of the mean precision, mean covariance) from posterior draws.

    Accepts a ChainResult (uses its accumulated means) or an iterable of
    precision matrices.
    """
    if isinstance(draws, ChainResult):
        mean_omega, mean_sigma = draws.mean_omega, draws.mean_sigma
    else:
        mats = [np.asarray(m, dtype=float) for m in draws]
        if not mats:
            raise InvalidSpecError("empty draw store")
        mean_omega = np.mean(mats, axis=0)
        mean_sigma = np.mean([spd_inverse(m) for m in mats], axis=0)
    try:
        sigma_l1 = spd_inverse(mean_omega)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            "posterior-mean precision is numerically singular") from exc
    return sigma_l1, mean_sigma


# ---------------------------------------------------------------------------
# benchmark harness

PRIOR_PRESETS = {
    "ep_q1": lambda: (exponential_power(q=1.0), TauHyperPrior.gamma_on_inverse_power(1.0, 0.1)),
    "ep_q0.2": lambda: (exponential_power(q=0.2), TauHyperPrior.gamma_on_inverse_power(1.0, 0.1)),
    "gdp": lambda: (double_pareto(alpha=1.0), TauHyperPrior.uniform_on_transform()),
    "log": lambda: (logarithmic(), TauHyperPrior.half_cauchy(1.0)),
}


def prior_preset(name: str) -> tuple[PriorSpec, TauHyperPrior]:
    if name not in PRIOR_PRESETS:
        raise InvalidSpecError(
            f"unknown prior preset {name!r}; expected one of {', '.join(PRIOR_PRESETS)}")
    spec, hyper = PRIOR_PRESETS[name]()
    return spec.with_tau(hyper.initial_tau(spec)), hyper


@dataclass(frozen=True)
class BenchJob:
    model: int
    p: int
    n: int
    prior: str
    replicate: int
    iters: int
    burnin: int
    thin: int
    seed: int


def run_bench_job(job: BenchJob) -> dict:
    """One replicate: simulate, fit, score both losses."""
    sigma, omega = generate_truth(job.model, job.p, seed=1000 * job.model + job.replicate)
    y = sample_data(sigma, job.n, seed=job.seed)
    spec, hyper = prior_preset(job.prior)
    t0 = time.perf_counter()
    res = run_chain(y=y, prior=spec, tau_hyper=hyper, iters=job.iters,
                    burnin=job.burnin, thin=job.thin, seed=job.seed)
    sigma_l1, sigma_l2 = bayes_estimators(res)
    elapsed = time.perf_counter() - t0
    return {
        "model": job.model,
        "p": job.p,
        "n": job.n,
        "prior": job.prior,
        "replicate": job.replicate,
        "L1": stein_loss(sigma_l1, sigma),
        "L2": squared_loss(sigma_l2, sigma),
        "runtime_seconds": elapsed,
    }


def run_benchmark(models, n_values, priors, replicates: int, p: int = 30, *,
                  iters: int = 15000, burnin: int = 5000, thin: int = 1,
                  seed: int = 0, workers: int = 1) -> list[dict]:
    """Full grid of (model, n, prior, replicate) jobs; rows sorted by inputs."""
    jobs = []
    for model in models:
        for n in n_values:
            for prior in priors:
                for rep in range(replicates):
                    jobs.append(BenchJob(model=model, p=p, n=n, prior=prior,
                                         replicate=rep, iters=iters, burnin=burnin,
                                         thin=thin,
                                         seed=seed + 7919 * rep + 101 * model + n))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_bench_job, jobs))
    else:
        rows = [run_bench_job(j) for j in jobs]
    return rows


BENCH_COLUMNS = ("model", "p", "n", "prior", "replicate", "L1", "L2", "runtime_seconds")


def write_bench_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in BENCH_COLUMNS})
