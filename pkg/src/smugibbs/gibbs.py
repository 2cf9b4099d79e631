"""Block Gibbs sampler for precision matrices under uniform-mixture priors.

One sweep scans every free 2x2 submatrix (pairs (i, j) that are graph
edges), updates isolated diagonal entries, redraws the global scale tau
from its T-marginalized conditional, and then redraws the latent scales T.
That last ordering is load-bearing: tau comes from p(tau | omega) with T
integrated out, so T must be refreshed from p(T | omega, tau) immediately
afterwards, never before.

Within a block the Schur complement A = omega[e,e] - B is reparametrized as
A = L diag(d1, d2) L^T; the three coordinates have truncated gamma / gamma /
normal conditionals whose truncation regions come from the latent scales,
optional per-element boxes (sign constraints), and positivity.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStateError, InvalidSpecError, NotPositiveDefiniteError, UnderflowRateError
from .priors import PriorSpec, TauHyperPrior, draw_standardized_scales, sample_tau
from .spd import cholesky_lower, mirror_lower, spd_inverse
from .truncated import (
    IntervalSet,
    UnderflowCounter,
    clamp_open,
    interval_from_affine,
    intersect,
    truncated_gamma,
    truncated_normal,
    uniform_on_intervals,
)

_INF = math.inf


def pack_lower(m: np.ndarray) -> np.ndarray:
    """Flatten the lower triangle (diagonal included) row-major."""
    p = m.shape[0]
    il, jl = np.tril_indices(p)
    return np.asarray(m)[il, jl].copy()


def unpack_lower(vec: np.ndarray, p: int) -> np.ndarray:
    m = np.zeros((p, p))
    il, jl = np.tril_indices(p)
    m[il, jl] = vec
    m[jl, il] = vec
    return m


class ConstraintLedger:
    """Per-element centers, box truncations, optional graph, and multipliers.

    The effective constraint on omega_ij is
    ``max(m_ij - w, box_lo) < omega_ij < min(m_ij + w, box_hi)`` with
    ``w = tau * v_ij * t_ij``.  Pairs outside the graph are pinned to zero
    and carry no latent scale.
    """

    def __init__(self, p, center=None, box_lo=None, box_hi=None,
                 adjacency=None, multiplier=None):
        self.p = int(p)
        self.center = np.zeros((p, p)) if center is None else np.array(center, dtype=float)
        self.box_lo = np.full((p, p), -_INF) if box_lo is None else np.array(box_lo, dtype=float)
        self.box_hi = np.full((p, p), _INF) if box_hi is None else np.array(box_hi, dtype=float)
        self.adjacency = None if adjacency is None else np.array(adjacency, dtype=bool)
        self.multiplier = None if multiplier is None else np.array(multiplier, dtype=float)
        self._validate()
        self._build_cache()

    @classmethod
    def unconstrained(cls, p: int) -> "ConstraintLedger":
        return cls(p)

    @classmethod
    def build(cls, p, center=None, boxes=None, adjacency=None, multiplier=None):
        """boxes: {(i, j): (lo, hi)} applied symmetrically."""
        lo = np.full((p, p), -_INF)
        hi = np.full((p, p), _INF)
        for (i, j), (blo, bhi) in (boxes or {}).items():
            lo[i, j] = lo[j, i] = blo
            hi[i, j] = hi[j, i] = bhi
        return cls(p, center=center, box_lo=lo, box_hi=hi,
                   adjacency=adjacency, multiplier=multiplier)

    def _validate(self):
        p = self.p
        for name in ("center", "box_lo", "box_hi"):
            arr = getattr(self, name)
            if arr.shape != (p, p):
                raise InvalidSpecError(f"{name} must be {p}x{p}, got {arr.shape}")
            if not np.array_equal(arr, arr.T):
                raise InvalidSpecError(f"{name} must be symmetric")
        if np.any(self.box_lo >= self.box_hi):
            raise InvalidSpecError("every box needs lo < hi")
        diag_lo = np.diag(self.box_lo)
        if np.any(np.isfinite(diag_lo) & (diag_lo < 0.0)) or np.any(np.diag(self.box_hi) <= 0.0):
            raise InvalidSpecError("diagonal boxes must lie within (0, inf)")
        if self.adjacency is not None:
            if self.adjacency.shape != (p, p):
                raise InvalidSpecError(f"adjacency must be {p}x{p}")
            if not np.array_equal(self.adjacency, self.adjacency.T):
                raise InvalidSpecError("adjacency must be symmetric")
        if self.multiplier is not None:
            if self.multiplier.shape != (p, p) or np.any(self.multiplier <= 0.0):
                raise InvalidSpecError("multipliers must be positive and p x p")
            if not np.array_equal(self.multiplier, self.multiplier.T):
                raise InvalidSpecError("multiplier must be symmetric")

    def _build_cache(self):
        p = self.p
        if self.adjacency is None:
            edges = [(i, j) for i in range(p) for j in range(i + 1, p)]
        else:
            edges = [(i, j) for i in range(p) for j in range(i + 1, p)
                     if self.adjacency[i, j]]
        self.edges = edges
        degree = np.zeros(p, dtype=int)
        for i, j in edges:
            degree[i] += 1
            degree[j] += 1
        self.isolated = [v for v in range(p) if degree[v] == 0]
        self._rest = {}
        self._eidx = {}
        self._rr_grid = {}
        self._re_grid = {}
        allv = np.arange(p, dtype=np.intp)
        for e in edges:
            i, j = e
            rest = allv[(allv != i) & (allv != j)]
            eidx = np.array(e, dtype=np.intp)
            self._rest[e] = rest
            self._eidx[e] = eidx
            if rest.size:
                self._rr_grid[e] = np.ix_(rest, rest)
                self._re_grid[e] = np.ix_(rest, eidx)
        self._rest_v = {v: allv[allv != v] for v in self.isolated}
        rows = [i for i in range(p)] + [i for i, j in edges]
        cols = [i for i in range(p)] + [j for i, j in edges]
        self.free_rows = np.array(rows, dtype=np.intp)
        self.free_cols = np.array(cols, dtype=np.intp)
        self.n_free = len(rows)

    def mult(self, i: int, j: int) -> float:
        return 1.0 if self.multiplier is None else float(self.multiplier[i, j])

    def is_free(self, i: int, j: int) -> bool:
        if i == j:
            return True
        return self.adjacency is None or bool(self.adjacency[i, j])

    def scale_invariant(self) -> bool:
        """True when the tau update's scale-family argument applies:
        zero centers and every box a cone (endpoints in {0, +-inf})."""
        if np.any(self.center != 0.0):
            return False
        ok_lo = np.isin(self.box_lo, (-_INF, 0.0)) | np.isinf(self.box_lo)
        ok_hi = np.isin(self.box_hi, (_INF, 0.0)) | np.isinf(self.box_hi)
        return bool(np.all(ok_lo) and np.all(ok_hi))

    def deviations(self, omega: np.ndarray) -> np.ndarray:
        """Centered, multiplier-standardized free elements (for tau)."""
        r, c = self.free_rows, self.free_cols
        dev = omega[r, c] - self.center[r, c]
        if self.multiplier is not None:
            dev = dev / self.multiplier[r, c]
        return dev


@dataclass
class GibbsState:
    """Chain state: matrix, standardized latent scales, tau, suff stats."""

    omega: np.ndarray
    scales: np.ndarray
    tau: float
    s: np.ndarray
    n: float


def _value_bounds(state: GibbsState, ledger: ConstraintLedger, i: int, j: int):
    """Open interval currently allowed for omega_ij."""
    w = state.tau * ledger.mult(i, j) * state.scales[i, j]
    m = ledger.center[i, j]
    return max(m - w, ledger.box_lo[i, j]), min(m + w, ledger.box_hi[i, j])


def _shrink(cur, piece, what):
    if piece is None:
        raise InfeasibleStateError(f"empty truncation region for {what}")
    if piece == "all":
        return cur
    got = intersect(cur[0], cur[1], piece[0], piece[1])
    if got is None:
        raise InfeasibleStateError(f"empty truncation region for {what}")
    return got


def _d1_interval(state, ledger, i, j, b11, b21, b22, l21, d2):
    cur = (0.0, _INF)
    cur = _shrink(cur, interval_from_affine(1.0, b11, *_value_bounds(state, ledger, i, i)), "d1")
    cur = _shrink(cur, interval_from_affine(l21, b21, *_value_bounds(state, ledger, i, j)), "d1")
    cur = _shrink(cur, interval_from_affine(l21 * l21, d2 + b22,
                                            *_value_bounds(state, ledger, j, j)), "d1")
    return cur


def _d2_interval(state, ledger, i, j, b22, d1, l21):
    cur = (0.0, _INF)
    cur = _shrink(cur, interval_from_affine(1.0, d1 * l21 * l21 + b22,
                                            *_value_bounds(state, ledger, j, j)), "d2")
    return cur


def _l21_intervals(state, ledger, i, j, b21, b22, d1, d2):
    lin = interval_from_affine(d1, b21, *_value_bounds(state, ledger, i, j))
    if lin is None:
        raise InfeasibleStateError("empty truncation region for l21")
    if lin == "all":
        lin = (-_INF, _INF)
    vlo, vhi = _value_bounds(state, ledger, j, j)
    k = d2 + b22
    qlo, qhi = (vlo - k) / d1, (vhi - k) / d1  # bounds for l21^2
    if qhi <= 0.0:
        raise InfeasibleStateError("empty truncation region for l21 (quadratic)")
    hi = math.sqrt(qhi)
    pieces = []
    if qlo <= 0.0:
        got = intersect(lin[0], lin[1], -hi, hi)
        if got is not None:
            pieces.append(got)
    else:
        lo = math.sqrt(qlo)
        for a, b in ((-hi, -lo), (lo, hi)):
            got = intersect(lin[0], lin[1], a, b)
            if got is not None:
                pieces.append(got)
    if not pieces:
        raise InfeasibleStateError("empty truncation region for l21")
    return IntervalSet(tuple(pieces))


def _block_terms(state: GibbsState, ledger: ConstraintLedger, e):
    """B entries and current (d1, d2, l21) of the block at edge e."""
    i, j = e
    omega = state.omega
    rest = ledger._rest[e]
    if rest.size:
        m_re = omega[ledger._re_grid[e]]
        try:
            sol = np.linalg.solve(omega[ledger._rr_grid[e]], m_re)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from exc
        b = m_re.T @ sol
        b11, b21, b22 = float(b[0, 0]), float(b[1, 0]), float(b[1, 1])
    else:
        b11 = b21 = b22 = 0.0
    a11 = float(omega[i, i]) - b11
    a21 = float(omega[i, j]) - b21
    a22 = float(omega[j, j]) - b22
    if a11 <= 0.0:
        raise NotPositiveDefiniteError(f"block {e}: leading Schur entry {a11} <= 0")
    l21 = a21 / a11
    d2 = a22 - a11 * l21 * l21
    if d2 <= 0.0:
        raise NotPositiveDefiniteError(f"block {e}: trailing Schur entry {d2} <= 0")
    return b11, b21, b22, a11, d2, l21


def block_conditional_regions(state: GibbsState, ledger: ConstraintLedger, e):
    """Truncation regions of (d1, d2, l21) at the current block state."""
    i, j = e
    b11, b21, b22, d1, d2, l21 = _block_terms(state, ledger, e)
    return {
        "d1": IntervalSet.of(*_d1_interval(state, ledger, i, j, b11, b21, b22, l21, d2)),
        "d2": IntervalSet.of(*_d2_interval(state, ledger, i, j, b22, d1, l21)),
        "l21": _l21_intervals(state, ledger, i, j, b21, b22, d1, d2),
    }


def sample_block(state: GibbsState, ledger: ConstraintLedger, e, rng,
                 counter: UnderflowCounter | None = None) -> None:
    """One Gibbs pass over (d1, d2, l21) of the block at edge e, in place."""
    i, j = e
    s = state.s
    n = state.n
    s11, s21, s22 = float(s[i, i]), float(s[i, j]), float(s[j, j])
    b11, b21, b22, d1, d2, l21 = _block_terms(state, ledger, e)

    lo, hi = _d1_interval(state, ledger, i, j, b11, b21, b22, l21, d2)
    lo = max(lo, 0.0)
    rate1 = max(0.5 * (s11 + s22 * l21 * l21 + 2.0 * s21 * l21), 0.0)
    d1 = truncated_gamma(0.5 * n + 2.0, rate1, lo, hi, rng, counter)
    d1 = clamp_open(d1, lo, hi)

    lo, hi = _d2_interval(state, ledger, i, j, b22, d1, l21)
    lo = max(lo, 0.0)
    d2 = truncated_gamma(0.5 * n + 1.0, 0.5 * s22, lo, hi, rng, counter)
    d2 = clamp_open(d2, lo, hi)

    region = _l21_intervals(state, ledger, i, j, b21, b22, d1, d2)
    if s22 > 0.0:
        l21 = truncated_normal(-s21 / s22, 1.0 / (s22 * d1), region, rng, counter)
    else:
        l21 = uniform_on_intervals(region, rng)
    for a, b in region.intervals:
        if a <= l21 <= b:
            l21 = clamp_open(l21, a, b)
            break

    omega = state.omega
    omega[i, i] = clamp_open(d1 + b11, *_value_bounds(state, ledger, i, i))
    wij = clamp_open(d1 * l21 + b21, *_value_bounds(state, ledger, i, j))
    omega[i, j] = omega[j, i] = wij
    omega[j, j] = clamp_open(d1 * l21 * l21 + d2 + b22,
                              *_value_bounds(state, ledger, j, j))


def sample_isolated_diag(state: GibbsState, ledger: ConstraintLedger, v: int, rng,
                         counter: UnderflowCounter | None = None) -> None:
    """Update omega_vv for an isolated vertex v (no incident edges)."""
    omega = state.omega
    rest = ledger._rest_v.get(v)
    if rest is None:
        rest = np.array([k for k in range(ledger.p) if k != v], dtype=np.intp)
    if rest.size and np.any(omega[v, rest] != 0.0):
        row = omega[v, rest]
        b = float(row @ np.linalg.solve(omega[np.ix_(rest, rest)], row))
    else:
        b = 0.0
    vlo, vhi = _value_bounds(state, ledger, v, v)
    glo, ghi = max(vlo - b, 0.0), vhi - b
    if not glo < ghi:
        raise InfeasibleStateError(f"empty truncation region for omega[{v},{v}]")
    gamma = truncated_gamma(0.5 * state.n + 1.0, 0.5 * float(state.s[v, v]),
                            glo, ghi, rng, counter)
    omega[v, v] = clamp_open(b + gamma, vlo, vhi)


def sample_latent_scales(state: GibbsState, ledger: ConstraintLedger,
                         spec: PriorSpec, rng) -> None:
    """Redraw all latent scales given omega and tau (block update)."""
    r, c = ledger.free_rows, ledger.free_cols
    thetas = ledger.deviations(state.omega) / state.tau
    t = draw_standardized_scales(spec, thetas, rng)
    state.scales[r, c] = t
    state.scales[c, r] = t


def gibbs_sweep(state: GibbsState, ledger: ConstraintLedger, spec: PriorSpec,
                hyper: TauHyperPrior, rng, counter: UnderflowCounter | None = None,
                scan: str = "fixed") -> GibbsState:
    """One full sweep: blocks, isolated diagonals, tau (collapsed), scales."""
    edges = ledger.edges
    if scan == "random":
        edges = [edges[k] for k in rng.permutation(len(edges))]
    for e in edges:
        sample_block(state, ledger, e, rng, counter)
    for v in ledger.isolated:
        sample_isolated_diag(state, ledger, v, rng, counter)
    state.tau = sample_tau(hyper, spec.with_tau(state.tau),
                           ledger.deviations(state.omega), ledger.n_free, rng)
    sample_latent_scales(state, ledger, spec, rng)
    return state


def _project_into_box(val, lo, hi, step):
    if lo < val < hi:
        return val
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + step
    return hi - step


def initial_omega(ledger: ConstraintLedger) -> np.ndarray:
    """Identity projected into the ledger: graph zeros, boxes respected."""
    p = ledger.p
    omega = np.eye(p)
    off_step = min(0.01, 0.5 / max(p - 1, 1))
    for v in range(p):
        omega[v, v] = _project_into_box(1.0, ledger.box_lo[v, v], ledger.box_hi[v, v], 1.0)
    for i, j in ledger.edges:
        val = _project_into_box(0.0, ledger.box_lo[i, j], ledger.box_hi[i, j], off_step)
        omega[i, j] = omega[j, i] = val
    try:
        cholesky_lower(omega)
    except NotPositiveDefiniteError as exc:
        raise InfeasibleStateError(
            "projected identity start is not SPD under these boxes; "
            "pass an explicit omega0") from exc
    return omega


def init_state(ledger: ConstraintLedger, spec: PriorSpec, hyper: TauHyperPrior,
               s: np.ndarray, n: float, rng, omega0: np.ndarray | None = None) -> GibbsState:
    p = ledger.p
    if omega0 is None:
        omega0 = initial_omega(ledger)
    else:
        omega0 = mirror_lower(omega0)
        validate_matrix(omega0, ledger)
    scales = np.full((p, p), np.nan)
    state = GibbsState(omega=omega0.copy(), scales=scales,
                       tau=hyper.initial_tau(spec), s=np.asarray(s, dtype=float), n=float(n))
    sample_latent_scales(state, ledger, spec, rng)
    return state


def validate_matrix(omega: np.ndarray, ledger: ConstraintLedger) -> None:
    """Graph zeros exact, boxes strict, SPD; raises on violation."""
    p = ledger.p
    if ledger.adjacency is not None:
        for i in range(p):
            for j in range(i + 1, p):
                if not ledger.adjacency[i, j] and omega[i, j] != 0.0:
                    raise InfeasibleStateError(f"omega[{i},{j}] must be exactly 0")
    r, c = ledger.free_rows, ledger.free_cols
    vals = omega[r, c]
    if np.any(vals <= ledger.box_lo[r, c]) or np.any(vals >= ledger.box_hi[r, c]):
        raise InfeasibleStateError("box constraint violated")
    cholesky_lower(omega)


def validate_state(state: GibbsState, ledger: ConstraintLedger) -> None:
    validate_matrix(state.omega, ledger)
    r, c = ledger.free_rows, ledger.free_cols
    thetas = np.abs(ledger.deviations(state.omega)) / state.tau
    if np.any(state.scales[r, c] <= thetas):
        raise InfeasibleStateError("latent scale not strictly feasible")


def lag_autocorrelations(draws: np.ndarray, lag: int = 10) -> np.ndarray:
    """Per-column autocorrelation at the given lag; 0 for constant columns."""
    m = draws.shape[0]
    if m <= lag + 1:
        return np.zeros(draws.shape[1])
    a = draws[:-lag] - draws[:-lag].mean(axis=0)
    b = draws[lag:] - draws[lag:].mean(axis=0)
    num = (a * b).sum(axis=0)
    den = np.sqrt((a * a).sum(axis=0) * (b * b).sum(axis=0))
    out = np.zeros(draws.shape[1])
    good = den > 0.0
    out[good] = num[good] / den[good]
    return out


@dataclass
class ChainResult:
    """Stored draws plus posterior summaries and diagnostics."""

    p: int
    omega_draws: np.ndarray  # (kept, p(p+1)/2), lower triangle row-major
    tau_draws: np.ndarray
    mean_omega: np.ndarray
    mean_sigma: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def sigma_draws(self) -> np.ndarray:
        """Inverses of the stored draws, computed on demand."""
        out = np.empty_like(self.omega_draws)
        for k, row in enumerate(self.omega_draws):
            out[k] = pack_lower(spd_inverse(unpack_lower(row, self.p)))
        return out


def run_chain(*, y=None, s=None, n=None, ledger: ConstraintLedger | None = None,
              prior: PriorSpec, tau_hyper: TauHyperPrior | None = None,
              iters: int, burnin: int = 0, thin: int = 1, seed: int = 0,
              omega0=None, scan: str = "fixed",
              max_underflow_rate: float = 1e-3) -> ChainResult:
    """Run one chain and return thinned draws of (omega, tau) plus summaries.

    Data enter as samples ``y`` (p rows, n columns) or as precomputed
    ``s = y y^T`` with the effective sample size ``n`` (n = 0 samples the
    prior).  A fallback rate above ``max_underflow_rate`` fails the run.
    """
    if y is not None:
        y = np.asarray(y, dtype=float)
        s = y @ y.T
        n = y.shape[1]
    if s is None or n is None:
        raise InvalidSpecError("provide either y or both s and n")
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    if ledger is None:
        ledger = ConstraintLedger.unconstrained(p)
    if ledger.p != p:
        raise InvalidSpecError(f"ledger is for p={ledger.p}, data give p={p}")
    if tau_hyper is None:
        tau_hyper = TauHyperPrior.fixed(prior.tau)
    if not iters > burnin >= 0:
        raise InvalidSpecError(f"need iters > burnin >= 0, got {iters}, {burnin}")
    if thin < 1:
        raise InvalidSpecError(f"thin must be >= 1, got {thin}")
    if tau_hyper.kind != "fixed" and not ledger.scale_invariant():
        raise InvalidSpecError(
            "random tau requires zero centers and cone boxes; fix tau instead")

    rng = np.random.default_rng(seed)
    counter = UnderflowCounter()
    state = init_state(ledger, spec=prior, hyper=tau_hyper, s=s, n=n, rng=rng,
                       omega0=omega0)

    kept = len(range(burnin, iters, thin))
    omega_draws = np.empty((kept, p * (p + 1) // 2))
    tau_draws = np.empty(kept)
    sigma_sum = np.zeros((p, p))
    t0 = time.perf_counter()
    k = 0
    for it in range(iters):
        gibbs_sweep(state, ledger, prior, tau_hyper, rng, counter, scan=scan)
        if it >= burnin and (it - burnin) % thin == 0:
            omega_draws[k] = pack_lower(state.omega)
            tau_draws[k] = state.tau
            sigma_sum += spd_inverse(state.omega)
            k += 1
    elapsed = time.perf_counter() - t0

    mean_omega = unpack_lower(omega_draws.mean(axis=0), p)
    diagnostics = {
        "sweeps": iters,
        "kept": kept,
        "underflow_attempts": counter.attempts,
        "underflow_fallbacks": counter.fallbacks,
        "underflow_rate": counter.rate,
        "acf_lag10": lag_autocorrelations(omega_draws, 10).tolist(),
        "runtime_seconds": elapsed,
        "final_tau": state.tau,
    }
    result = ChainResult(p=p, omega_draws=omega_draws, tau_draws=tau_draws,
                         mean_omega=mean_omega, mean_sigma=sigma_sum / kept,
                         diagnostics=diagnostics)
    if counter.rate > max_underflow_rate:
        raise UnderflowRateError(
            f"underflow fallback rate {counter.rate:.2e} above {max_underflow_rate:.2e} "
            f"({counter.fallbacks}/{counter.attempts})")
    return result
