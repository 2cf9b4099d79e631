"""Gaussian CAR layer: adjacency-built precisions and matrix-normal Gibbs.

The field is a p_r x p_c matrix X with vec(X) ~ N(0, (omega_c (x) omega_r)^-1).
The row precision either equals M(rho) = E_W - rho W built from the areal
adjacency W (variants "gv"/"wp1", rho on a discrete grid), or is sampled by
the block Gibbs engine shrunk towards M(rho_fixed) on the graph of W with
negative off-diagonals (variant "wp2").  The column precision is always
sampled by the block Gibbs engine under a shrinkage prior.

Only the Kronecker product omega_c (x) omega_r is likelihood-identified, so
stored draws are rescaled to omega_r[0,0] = 1 (the chain itself runs on the
unrescaled state; the product is untouched by the rescale).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError, RhoOutOfRangeError
from .gibbs import (
    ChainResult,
    ConstraintLedger,
    UnderflowCounter,
    gibbs_sweep,
    init_state,
    lag_autocorrelations,
    pack_lower,
    run_chain,
    unpack_lower,
)
from .priors import PriorSpec, TauHyperPrior, exponential_power, logarithmic
from .spd import cholesky_lower, extremal_eigenvalues, log_det, spd_inverse

_INF = math.inf


def rho_grid_31() -> tuple[float, ...]:
    """The default 31-point spatial-association grid, dense near 1."""
    coarse = [round(0.05 * k, 2) for k in range(17)]        # 0.00 .. 0.80
    mid = [round(0.82 + 0.02 * k, 2) for k in range(5)]     # 0.82 .. 0.90
    fine = [round(0.91 + 0.01 * k, 2) for k in range(9)]    # 0.91 .. 0.99
    return tuple(coarse + mid + fine)


RHO_GRID = rho_grid_31()


class AdjacencyModel:
    """Symmetric 0/1 proximity matrix with its derived quantities."""

    def __init__(self, w):
        w = np.asarray(w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidSpecError(f"adjacency must be square, got {w.shape}")
        if not np.array_equal(w, w.T):
            raise InvalidSpecError("adjacency must be symmetric")
        if not np.isin(w, (0, 1)).all():
            raise InvalidSpecError("adjacency entries must be 0 or 1")
        if np.any(np.diag(w) != 0):
            raise InvalidSpecError("adjacency diagonal must be 0")
        self.w = w.astype(float)
        self.p = w.shape[0]
        self.degrees = self.w.sum(axis=1)
        isolated = np.flatnonzero(self.degrees == 0)
        if isolated.size:
            raise InvalidSpecError(
                f"isolated regions {isolated.tolist()} make E_W - rho W singular")
        self.graph = self.w.astype(bool)
        lo, hi = extremal_eigenvalues(self.w)
        self.rho_interval = (1.0 / lo, 1.0 / hi)  # lo < 0 <= hi for any graph

    def admissible(self, rho: float) -> bool:
        lo, hi = self.rho_interval
        return lo < rho < hi

    def admissible_grid(self, grid=RHO_GRID) -> tuple[float, ...]:
        return tuple(r for r in grid if self.admissible(r))


def car_precision(adj: AdjacencyModel, rho: float) -> np.ndarray:
    """M(rho) = E_W - rho W; requires rho strictly inside the admissible
    interval given by the reciprocals of W's extremal eigenvalues."""
    if not adj.admissible(rho):
        raise RhoOutOfRangeError(
            f"rho={rho} outside admissible interval {adj.rho_interval}")
    m = np.diag(adj.degrees) - rho * adj.w
    cholesky_lower(m)  # the interval guarantees SPD; fail loudly if not
    return m


def matrix_normal_suffstats(x: np.ndarray, omega_other: np.ndarray,
                            side: str) -> tuple[np.ndarray, int]:
    """Sufficient statistics of one replicate for the named side.

    side "row":  (X omega_c X^T, p_c) for updating the row precision;
    side "col":  (X^T omega_r X, p_r) for updating the column precision.
    """
    x = np.asarray(x, dtype=float)
    if side == "row":
        return x @ omega_other @ x.T, x.shape[1]
    if side == "col":
        return x.T @ omega_other @ x, x.shape[0]
    raise InvalidSpecError(f"side must be 'row' or 'col', got {side!r}")


def _stacked_suffstats(xs, omega_other, side):
    s = None
    n_eff = 0
    for x in xs:
        si, ni = matrix_normal_suffstats(x, omega_other, side)
        s = si if s is None else s + si
        n_eff += ni
    return s, n_eff


def matrix_normal_loglik(x: np.ndarray, omega_r: np.ndarray,
                         omega_c: np.ndarray) -> float:
    """Exact log density of one replicate (up to the 2 pi constant)."""
    p_r, p_c = x.shape
    s_r, _ = matrix_normal_suffstats(x, omega_c, "row")
    return 0.5 * (p_c * log_det(omega_r) + p_r * log_det(omega_c)
                  - float(np.sum(omega_r * s_r)))


def sample_matrix_normal(omega_r: np.ndarray, omega_c: np.ndarray, rng) -> np.ndarray:
    """One draw of X with vec(X) ~ N(0, (omega_c (x) omega_r)^-1)."""
    l_r = cholesky_lower(spd_inverse(omega_r))
    l_c = cholesky_lower(spd_inverse(omega_c))
    z = rng.standard_normal((omega_r.shape[0], omega_c.shape[0]))
    return l_r @ z @ l_c.T


@dataclass(frozen=True)
class McarSpec:
    """Model variant plus the priors of both precision factors.

    "gv" and "wp1" share the same machinery here: deterministic row
    precision M(rho) with a discrete Gibbs update of rho, shrinkage prior on
    the column precision.  "wp2" samples the row precision too, shrunk
    towards M(rho_fixed) with negative off-diagonals and a fixed tau_r (its
    normalizing constant depends intractably on tau, so tau_r is not
    updated).
    """

    variant: str
    prior_c: PriorSpec = field(default_factory=logarithmic)
    tau_c_hyper: TauHyperPrior = field(default_factory=lambda: TauHyperPrior.half_cauchy(1.0))
    prior_r: PriorSpec = field(default_factory=lambda: exponential_power(q=1.0))
    tau_r: float = 1.0
    rho_fixed: float = 0.9
    rho_grid: tuple = RHO_GRID

    def __post_init__(self):
        if self.variant not in ("gv", "wp1", "wp2"):
            raise InvalidSpecError(f"variant must be gv, wp1 or wp2, got {self.variant!r}")
        if self.variant == "wp2":
            if not self.tau_r > 0.0:
                raise InvalidSpecError(f"wp2 needs tau_r > 0, got {self.tau_r}")
            if not self.rho_fixed > 0.0:
                raise InvalidSpecError(
                    "wp2 needs rho_fixed > 0 so the shrinkage center has "
                    "strictly negative off-diagonals")


def wp2_row_ledger(adj: AdjacencyModel, rho_fixed: float) -> ConstraintLedger:
    """Ledger for the row precision under wp2: centered at M(rho_fixed),
    graph-restricted, off-diagonals constrained negative."""
    m = car_precision(adj, rho_fixed)
    boxes = {(i, j): (-_INF, 0.0)
             for i in range(adj.p) for j in range(i + 1, adj.p) if adj.graph[i, j]}
    return ConstraintLedger.build(adj.p, center=m, boxes=boxes, adjacency=adj.graph)


@dataclass
class McarResult:
    p_r: int
    p_c: int
    omega_r_draws: np.ndarray  # rescaled so omega_r[0,0] = 1
    omega_c_draws: np.ndarray
    rho_draws: np.ndarray | None
    tau_c_draws: np.ndarray
    mean_omega_r: np.ndarray
    mean_omega_c: np.ndarray
    rho_posterior: dict | None
    diagnostics: dict = field(default_factory=dict)


def fit_mcar(xs, adj: AdjacencyModel, spec: McarSpec, *, iters: int,
             burnin: int = 0, thin: int = 1, seed: int = 0) -> McarResult:
    """Alternate column-precision sweeps with the row-side update.

    ``xs`` is a list of replicate p_r x p_c matrices (may be empty for a
    prior-only run, in which case p_c must be inferable from spec usage;
    pass at least one replicate for data fits).
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    if not xs:
        raise InvalidSpecError("fit_mcar needs at least one replicate matrix")
    p_r, p_c = xs[0].shape
    if p_r != adj.p:
        raise InvalidSpecError(f"replicates have {p_r} rows, adjacency has {adj.p}")
    if any(x.shape != (p_r, p_c) for x in xs):
        raise InvalidSpecError("all replicates must share one shape")
    if not iters > burnin >= 0 or thin < 1:
        raise InvalidSpecError(f"bad sampler sizes iters={iters} burnin={burnin} thin={thin}")

    rng = np.random.default_rng(seed)
    counter = UnderflowCounter()
    n_rep = len(xs)

    # column side: complete-graph shrinkage chain
    ledger_c = ConstraintLedger.unconstrained(p_c)
    prior_c = spec.prior_c.with_tau(spec.tau_c_hyper.initial_tau(spec.prior_c))

    # row side
    discrete_rho = spec.variant in ("gv", "wp1")
    if discrete_rho:
        grid = adj.admissible_grid(spec.rho_grid)
        if not grid:
            raise InvalidSpecError("no admissible rho values on the grid")
        m_grid = [car_precision(adj, r) for r in grid]
        logdet_grid = np.array([log_det(m) for m in m_grid])
        rho_idx = int(np.argmin(np.abs(np.array(grid) - 0.9)))  # start near the mass
        omega_r = m_grid[rho_idx]
        state_r = None
        ledger_r = None
        prior_r = None
        hyper_r = None
    else:
        ledger_r = wp2_row_ledger(adj, spec.rho_fixed)
        prior_r = spec.prior_r.with_tau(spec.tau_r)
        hyper_r = TauHyperPrior.fixed(spec.tau_r)
        s_r0, n_r0 = _stacked_suffstats(xs, np.eye(p_c), "row")
        state_r = init_state(ledger_r, prior_r, hyper_r, s=s_r0, n=n_r0, rng=rng,
                             omega0=ledger_r.center.copy())
        omega_r = state_r.omega

    s_c0, n_c0 = _stacked_suffstats(xs, omega_r, "col")
    state_c = init_state(ledger_c, prior_c, spec.tau_c_hyper, s=s_c0, n=n_c0, rng=rng)

    kept = len(range(burnin, iters, thin))
    nr = p_r * (p_r + 1) // 2
    nc = p_c * (p_c + 1) // 2
    omega_r_draws = np.empty((kept, nr))
    omega_c_draws = np.empty((kept, nc))
    rho_draws = np.empty(kept) if discrete_rho else None
    tau_c_draws = np.empty(kept)
    t0 = time.perf_counter()
    k = 0
    for it in range(iters):
        # column precision given the row side
        state_c.s, state_c.n = _stacked_suffstats(xs, omega_r, "col")
        gibbs_sweep(state_c, ledger_c, prior_c, spec.tau_c_hyper, rng, counter)
        omega_c = state_c.omega

        # row side given the column precision
        s_r, n_r = _stacked_suffstats(xs, omega_c, "row")
        if discrete_rho:
            t_diag = float(np.sum(adj.degrees * np.diag(s_r)))
            t_edge = float(np.sum(adj.w * s_r))
            loglik = 0.5 * n_r * logdet_grid - 0.5 * (t_diag - np.array(grid) * t_edge)
            probs = np.exp(loglik - loglik.max())
            probs /= probs.sum()
            rho_idx = int(np.searchsorted(np.cumsum(probs), rng.random()))
            rho_idx = min(rho_idx, len(grid) - 1)
            omega_r = m_grid[rho_idx]
        else:
            state_r.s, state_r.n = s_r, n_r
            gibbs_sweep(state_r, ledger_r, prior_r, hyper_r, rng, counter)
            omega_r = state_r.omega

        if it >= burnin and (it - burnin) % thin == 0:
            c = float(omega_r[0, 0])
            omega_r_draws[k] = pack_lower(omega_r) / c
            omega_c_draws[k] = pack_lower(omega_c) * c
            if discrete_rho:
                rho_draws[k] = grid[rho_idx]
            tau_c_draws[k] = state_c.tau
            k += 1
    elapsed = time.perf_counter() - t0

    rho_posterior = None
    if discrete_rho:
        vals, counts = np.unique(rho_draws, return_counts=True)
        freq = dict(zip(vals.tolist(), (counts / kept).tolist()))
        rho_posterior = {float(r): freq.get(float(r), 0.0) for r in grid}
    diagnostics = {
        "sweeps": iters,
        "kept": kept,
        "underflow_attempts": counter.attempts,
        "underflow_fallbacks": counter.fallbacks,
        "underflow_rate": counter.rate,
        "acf_lag10_omega_c": lag_autocorrelations(omega_c_draws, 10).tolist(),
        "acf_lag10_omega_r": lag_autocorrelations(omega_r_draws, 10).tolist(),
        "runtime_seconds": elapsed,
    }
    return McarResult(
        p_r=p_r, p_c=p_c,
        omega_r_draws=omega_r_draws, omega_c_draws=omega_c_draws,
        rho_draws=rho_draws, tau_c_draws=tau_c_draws,
        mean_omega_r=unpack_lower(omega_r_draws.mean(axis=0), p_r),
        mean_omega_c=unpack_lower(omega_c_draws.mean(axis=0), p_c),
        rho_posterior=rho_posterior, diagnostics=diagnostics)


def prior_elicitation_sim(adj: AdjacencyModel, spec: McarSpec, n_draws: int,
                          seed: int = 0, burnin: int = 200) -> tuple[dict, ChainResult]:
    """Draws from the wp2 prior of the row precision (no data), summarized
    per free element so different tau_r choices can be compared."""
    if spec.variant != "wp2":
        raise InvalidSpecError("prior elicitation applies to the wp2 variant")
    ledger = wp2_row_ledger(adj, spec.rho_fixed)
    prior = spec.prior_r.with_tau(spec.tau_r)
    res = run_chain(s=np.zeros((adj.p, adj.p)), n=0, ledger=ledger, prior=prior,
                    iters=burnin + n_draws, burnin=burnin, thin=1, seed=seed,
                    omega0=ledger.center.copy())
    qs = (0.025, 0.25, 0.5, 0.75, 0.975)
    il, jl = np.tril_indices(adj.p)
    summaries = {}
    for col, (i, j) in enumerate(zip(il, jl)):
        if i != j and not adj.graph[i, j]:
            continue
        draws = res.omega_draws[:, col]
        quant = np.quantile(draws, qs)
        summaries[(int(i), int(j))] = {
            "center": float(ledger.center[i, j]),
            "quantiles": dict(zip((str(q) for q in qs), quant.tolist())),
            "iqr": float(quant[3] - quant[1]),
            "abs_dev_median": float(np.median(np.abs(draws - ledger.center[i, j]))),
        }
    return summaries, res
