"""Two-pattern piecewise-linear process with a double jump component.

The process alternates between two parameter patterns.  Inside an epoch
in pattern i the trajectory drifts at trend[i](n) after n shocks; each
shock (arriving at rate shock_rates[i](n)) adds an independent jump drawn
from shock_jumps[i](n) and bumps the trend index; the epoch ends at rate
switch_rates[i](n), adding a jump from switch_jumps[i](count at switch),
flipping the pattern and resetting the count.  Epoch lengths therefore
follow the count-modulated law of the distribution module, realised here
by the same competing-clocks draws.

The conditional means M_i(t) solve a pair of renewal-type integral
equations driven by a per-pattern source term built from the martingale
defect Delta(n) = trend(n) + shock_rate(n)*mean_shock(n)
+ switch_rate(n)*mean_switch(n); the process is a martingale exactly when
every Delta vanishes in both patterns.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .distribution import PoExpParams, density
from .errors import ExplosionCapError, SeriesDivergedError
from .kernel import DEFAULT_TRUNCATION, N_MAX, KernelTable, Truncation
from .rng import path_stream
from .sequences import IntensitySequence, RealSequence

__all__ = [
    "JumpLaw",
    "JumpSequence",
    "PatternParams",
    "PathEvent",
    "Segment",
    "ProcessPath",
    "MeanGrid",
    "MartingaleCheck",
    "simulate_path",
    "rho",
    "delta",
    "is_martingale",
    "mean_source",
    "solve_mean_equations",
    "empirical_mean",
]

DEFAULT_EVENT_CAP = 10**6


@dataclass(frozen=True)
class JumpLaw:
    """A finite-support jump amplitude law with exactly computable mean."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be nonempty and matched")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @classmethod
    def deterministic(cls, value: float) -> "JumpLaw":
        return cls((float(value),), (1.0,))

    @classmethod
    def discrete(cls, values, probs) -> "JumpLaw":
        return cls(tuple(values), tuple(probs))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def support_min(self) -> float:
        return min(self.values)

    @property
    def support_max(self) -> float:
        return max(self.values)

    def negate(self) -> "JumpLaw":
        return JumpLaw(tuple(-v for v in self.values), self.probs)

    def sample(self, rng: np.random.Generator) -> float:
        # a deterministic law consumes no randomness
        if len(self.values) == 1:
            return self.values[0]
        u = rng.random()
        acc = 0.0
        for v, p in zip(self.values, self.probs):
            acc += p
            if u < acc:
                return v
        return self.values[-1]


@dataclass(frozen=True)
class JumpSequence:
    """Per-count jump laws: explicit prefix, one law for the tail."""

    tail: JumpLaw
    prefix: tuple[JumpLaw, ...] = ()

    @classmethod
    def constant(cls, law: JumpLaw) -> "JumpSequence":
        return cls(tail=law)

    @classmethod
    def zero(cls) -> "JumpSequence":
        return cls(tail=JumpLaw.deterministic(0.0))

    def law(self, n: int) -> JumpLaw:
        if n < 0:
            raise ValueError("index must be >= 0")
        return self.prefix[n] if n < len(self.prefix) else self.tail

    def means(self) -> RealSequence:
        return RealSequence.constant(self.tail.mean, prefix=tuple(l.mean for l in self.prefix))

    def support_bounds(self) -> tuple[float, float]:
        lows = [l.support_min for l in self.prefix] + [self.tail.support_min]
        highs = [l.support_max for l in self.prefix] + [self.tail.support_max]
        return min(lows), max(highs)


@dataclass(frozen=True)
class PatternParams:
    """One state's full parameter set: trend, jump laws, and rates."""

    trend: RealSequence
    shock_jumps: JumpSequence
    switch_jumps: JumpSequence
    switch_rates: IntensitySequence
    shock_rates: IntensitySequence

    def poexp(self) -> PoExpParams:
        """Law of this pattern's holding time."""
        return PoExpParams(self.shock_rates, self.switch_rates)

    def delta_sequence(self) -> RealSequence:
        """Martingale defect trend + rate-weighted mean jumps, per count."""
        return (
            self.trend
            + self.shock_rates * self.shock_jumps.means()
            + self.switch_rates * self.switch_jumps.means()
        )


def rho(sigma: PatternParams, n: int) -> float:
    """Sum of the first n mean shock jumps (0 for n = 0)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return math.fsum(sigma.shock_jumps.law(k).mean for k in range(n))


def delta(sigma: PatternParams, n: int) -> float:
    """Martingale defect at count n."""
    return sigma.delta_sequence().term(n)


@dataclass(frozen=True)
class MartingaleCheck:
    is_martingale: bool
    violation: tuple[int, int] | None  # (state, count) of the first failure


def is_martingale(
    sigma0: PatternParams, sigma1: PatternParams, n_check: int = 50, tol: float = 1e-10
) -> MartingaleCheck:
    """True iff the defect vanishes at every count in both patterns.

    Counts up to n_check are tested pointwise; beyond them the tail rules
    must cancel structurally (zero numerator coefficients), because the
    condition quantifies over all counts.
    """
    for state, sigma in ((0, sigma0), (1, sigma1)):
        d = sigma.delta_sequence()
        scan = max(n_check, d.tail_start() + 3)
        for n in range(scan + 1):
            if abs(d.term(n)) > tol:
                return MartingaleCheck(False, (state, n))
        if not d.tail_is_zero(tol):
            return MartingaleCheck(False, (state, scan + 1))
    return MartingaleCheck(True, None)


# ---------------------------------------------------------------------------
# path simulation


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    slope: float
    state: int
    count: int


@dataclass(frozen=True)
class PathEvent:
    time: float
    size: float
    kind: str  # "shock" or "switch"
    state: int
    count: int  # shock count just before the event


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """A realised trajectory: drift segments plus jump events.

    The trajectory value is the integrated segment drift plus the sum of
    jump sizes up to t (right-continuous at event times).
    """

    initial_state: int
    horizon: float
    segments: tuple[Segment, ...]
    events: tuple[PathEvent, ...]

    @cached_property
    def _seg_arrays(self):
        starts = np.array([s.t_start for s in self.segments])
        slopes = np.array([s.slope for s in self.segments])
        lengths = np.array([s.t_end - s.t_start for s in self.segments])
        drift_at_start = np.concatenate(([0.0], np.cumsum(slopes * lengths)[:-1]))
        return starts, slopes, drift_at_start

    @cached_property
    def _event_arrays(self):
        times = np.array([e.time for e in self.events])
        sizes = np.array([e.size for e in self.events])
        cum = np.cumsum(sizes) if sizes.size else np.zeros(0)
        cum_log = np.cumsum(np.log1p(sizes)) if sizes.size else np.zeros(0)
        return times, cum, cum_log

    def _locate(self, ts: np.ndarray) -> np.ndarray:
        starts, _, _ = self._seg_arrays
        return np.maximum(np.searchsorted(starts, ts, side="right") - 1, 0)

    def drift_at(self, ts) -> np.ndarray:
        """Integrated segment drift (trajectory without jumps)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if ts.size and (ts.min() < 0 or ts.max() > self.horizon):
            raise ValueError("evaluation outside [0, horizon]")
        starts, slopes, drift0 = self._seg_arrays
        i = self._locate(ts)
        return drift0[i] + slopes[i] * (ts - starts[i])

    def jump_sum_at(self, ts, log1p: bool = False) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        times, cum, cum_log = self._event_arrays
        j = np.searchsorted(times, ts, side="right")
        src = cum_log if log1p else cum
        out = np.zeros(ts.size)
        nz = j > 0
        out[nz] = src[j[nz] - 1]
        return out

    def values_at(self, ts) -> np.ndarray:
        return self.drift_at(ts) + self.jump_sum_at(ts)

    def value_at(self, t: float) -> float:
        return float(self.values_at([t])[0])

    def state_at(self, t: float) -> int:
        return self.segments[int(self._locate(np.array([float(t)]))[0])].state


def simulate_path(
    sigma0: PatternParams,
    sigma1: PatternParams,
    initial_state: int,
    horizon: float,
    rng: np.random.Generator,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> ProcessPath:
    """Draw one trajectory on [0, horizon].

    Per event two inverse-transform uniforms are consumed (holding time,
    branch); jump sizes draw a third only for non-degenerate laws.
    """
    if initial_state not in (0, 1):
        raise ValueError("initial_state must be 0 or 1")
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    sigmas = (sigma0, sigma1)
    t = 0.0
    state = initial_state
    count = 0
    segments: list[Segment] = []
    events: list[PathEvent] = []
    while True:
        sigma = sigmas[state]
        lam = sigma.shock_rates.term(count)
        mu = sigma.switch_rates.term(count)
        total_rate = lam + mu
        wait = -math.log1p(-rng.random()) / total_rate
        slope = sigma.trend.term(count)
        t_next = t + wait
        if t_next >= horizon:
            segments.append(Segment(t, horizon, slope, state, count))
            break
        segments.append(Segment(t, t_next, slope, state, count))
        if rng.random() < mu / total_rate:
            size = sigma.switch_jumps.law(count).sample(rng)
            events.append(PathEvent(t_next, size, "switch", state, count))
            state = 1 - state
            count = 0
        else:
            size = sigma.shock_jumps.law(count).sample(rng)
            events.append(PathEvent(t_next, size, "shock", state, count))
            count += 1
        t = t_next
        if len(events) >= event_cap:
            raise ExplosionCapError(event_cap, t)
    return ProcessPath(initial_state, horizon, tuple(segments), tuple(events))


# ---------------------------------------------------------------------------
# mean source term and coupled renewal equations


class _SigmaEvaluator:
    def __init__(self, sigma: PatternParams, depth: int = 200):
        self.sigma = sigma
        g = sigma.shock_rates + sigma.switch_rates
        self.g_values = g.terms(depth)
        self.table = KernelTable(self.g_values, context="combined rates")
        lam = sigma.shock_rates.terms(depth - 1)
        self.log_lambda = np.concatenate(([0.0], np.cumsum(np.log(lam))))
        deltas = sigma.delta_sequence().terms(depth)
        with np.errstate(divide="ignore"):
            self.log_delta = np.where(deltas != 0.0, np.log(np.abs(deltas)), -np.inf)
        self.delta_signs = np.sign(deltas).astype(int)
        self._columns: dict[int, float] = {}

    def defect_column(self, k: int, trunc: Truncation) -> float:
        if k not in self._columns:
            res = self.table.column_series(
                k, self.log_lambda + self.log_delta, trunc, weight_signs=self.delta_signs
            )
            if not res.converged:
                raise SeriesDivergedError(f"defect column {k} failed its decay test")
            self._columns[k] = res.value
        return self._columns[k]


@lru_cache(maxsize=32)
def _sigma_evaluator(sigma: PatternParams) -> _SigmaEvaluator:
    return _SigmaEvaluator(sigma)


def mean_source(
    sigma: PatternParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION
) -> float:
    """Source term of the mean equations for one pattern.

    Primary form: sum over k of (1 - e^(-g_k t))/g_k times the defect
    column series.  When a column fails its decay test the pre-simplified
    form (mean-jump weighted mixtures plus integrated mixtures) is used;
    it needs only finitely many count terms under truncation.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    ev = _sigma_evaluator(sigma)
    if sigma.delta_sequence().is_zero(1e-14):
        return 0.0
    try:
        total = 0.0
        quiet = 0
        for k in range(min(N_MAX, ev.table.size)):
            dk = ev.defect_column(k, trunc)
            g_k = ev.g_values[k]
            term_val = (1.0 - math.exp(-g_k * t)) / g_k * dk
            total += term_val
            if abs(term_val) < trunc.tol * max(1.0, abs(total)):
                quiet += 1
                if quiet >= trunc.quiet_terms:
                    return total
            else:
                quiet = 0
        return total
    except SeriesDivergedError:
        return _mean_source_presimplified(sigma, t, trunc)


def _mean_source_presimplified(sigma: PatternParams, t: float, trunc: Truncation) -> float:
    ev = _sigma_evaluator(sigma)
    n = min(N_MAX, ev.table.size)
    rows_a, noise_a = ev.table.all_row_mixtures(t, ev.log_lambda[:n], return_noise=True)
    rows_a = np.maximum(rows_a, 0.0)
    # integrated mixtures: column factor (1 - e^(-g_k t))/g_k
    with np.errstate(divide="ignore"):
        log_col = np.log1p(-np.exp(-ev.g_values[:n] * t)) - np.log(ev.g_values[:n])
    rows_int, noise_int = ev.table.rows_weighted(
        log_col, ev.log_lambda[:n], zero_boundary=False, return_noise=True
    )
    rows_int = np.maximum(rows_int, 0.0)

    means_r = sigma.shock_jumps.means()
    means_big = sigma.switch_jumps.means()
    rho_vals = np.concatenate(([0.0], np.cumsum(means_r.terms(n - 1))))
    w_int = (means_big.terms(n) + rho_vals) * sigma.switch_rates.terms(n) + sigma.trend.terms(n)

    total = 0.0
    quiet = 0
    for i in range(n):
        t1 = rho_vals[i] * rows_a[i] if rows_a[i] > 4.0 * noise_a[i] else 0.0
        t2 = w_int[i] * rows_int[i] if rows_int[i] > 4.0 * noise_int[i] else 0.0
        term_val = t1 + t2
        total += term_val
        if abs(term_val) < trunc.tol * max(1.0, abs(total)):
            quiet += 1
            if quiet >= trunc.quiet_terms:
                return total
        else:
            quiet = 0
    return total


@dataclass(frozen=True)
class MeanGrid:
    """Conditional means of the trajectory on a uniform grid."""

    step: float
    times: np.ndarray
    m0: np.ndarray
    m1: np.ndarray

    def interp(self, state: int, ts) -> np.ndarray:
        vals = self.m0 if state == 0 else self.m1
        return np.interp(np.asarray(ts, dtype=float), self.times, vals)


def solve_mean_equations(
    sigma0: PatternParams,
    sigma1: PatternParams,
    horizon: float,
    step: float | None = None,
    trunc: Truncation = DEFAULT_TRUNCATION,
) -> MeanGrid:
    """Trapezoidal time-stepping of the coupled renewal equations.

    Each step solves the 2x2 implicit system produced by the trapezoidal
    weight at the current time; the convolution kernels are the holding
    time densities of the two patterns.  Second-order accurate in step.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    h = step if step is not None else 0.01 * horizon
    n_steps = int(round(horizon / h))
    times = np.arange(n_steps + 1) * h
    sigmas = (sigma0, sigma1)
    laws = tuple(s.poexp() for s in sigmas)
    f = [np.array([density(laws[i], float(u), trunc) for u in times]) for i in (0, 1)]
    g = [np.array([mean_source(sigmas[i], float(u), trunc) for u in times]) for i in (0, 1)]
    m0 = np.zeros(n_steps + 1)
    m1 = np.zeros(n_steps + 1)
    beta0 = 0.5 * h * f[0][0]
    beta1 = 0.5 * h * f[1][0]
    denom = 1.0 - beta0 * beta1
    for j in range(1, n_steps + 1):
        # trapezoid over (0, j): endpoints carry weight h/2; M(0) = 0 kills
        # the far end, the near end couples the two unknowns
        conv0 = h * float(np.dot(f[0][1:j], m1[j - 1 : 0 : -1])) if j > 1 else 0.0
        conv1 = h * float(np.dot(f[1][1:j], m0[j - 1 : 0 : -1])) if j > 1 else 0.0
        a0 = g[0][j] + conv0
        a1 = g[1][j] + conv1
        m0[j] = (a0 + beta0 * a1) / denom
        m1[j] = (a1 + beta1 * a0) / denom
    return MeanGrid(h, times, m0, m1)


# ---------------------------------------------------------------------------
# Monte Carlo mean with reproducible per-path substreams


def _simulate_values_block(args) -> tuple[int, np.ndarray]:
    sigma0, sigma1, initial_state, t_grid, seed, lo, hi = args
    horizon = float(max(t_grid))
    out = np.empty((hi - lo, len(t_grid)))
    for i in range(lo, hi):
        path = simulate_path(sigma0, sigma1, initial_state, horizon, path_stream(seed, i))
        out[i - lo] = path.values_at(t_grid)
    return lo, out


def empirical_mean(
    sigma0: PatternParams,
    sigma1: PatternParams,
    initial_state: int,
    t_grid,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-time sample mean and standard error of the trajectory value.

    Path i always uses the substream keyed by (seed, i) and results are
    reduced from a path-indexed array, so the output is identical for any
    worker count.
    """
    if n_paths < 2:
        raise ValueError("need at least 2 paths")
    t_grid = tuple(float(t) for t in t_grid)
    values = np.empty((n_paths, len(t_grid)))
    if workers <= 1:
        _, values[:] = _simulate_values_block(
            (sigma0, sigma1, initial_state, t_grid, seed, 0, n_paths)
        )
    else:
        bounds = np.linspace(0, n_paths, workers + 1, dtype=int)
        jobs = [
            (sigma0, sigma1, initial_state, t_grid, seed, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for lo, block in pool.map(_simulate_values_block, jobs):
                values[lo : lo + block.shape[0]] = block
    means = values.mean(axis=0)
    ses = values.std(axis=0, ddof=1) / math.sqrt(n_paths)
    return means, ses
