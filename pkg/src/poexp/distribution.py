"""The law of a positive time T killed at a count-modulated hazard.

While the counting process driven by ``lambda_seq`` sits at count n, T is
killed at hazard ``mu_seq[n]``.  Joint laws over (T, count) come from the
kernel mixtures of the combined rates g_n = lambda_n + mu_n:

    P{T > t, count = n}  = L_n * a_n(t; g)
    P{T in dt, count = n} = mu_n * L_n * a_n(t; g) dt

Marginal survivor/density/moments have two evaluation routes: a column
series over the b_k coefficients (fast, can diverge even when the law is
proper) and the always-available sum over counts.  Public entry points
try the series first and fall back, because the series' divergence is a
property of the parameters, not an error of the law.

Sampling runs the competing clocks directly - at count n wait
Exp(lambda_n + mu_n), then kill with probability mu_n/(lambda_n + mu_n) -
which is exact, independent of any truncation, and therefore doubles as
the validation oracle for every closed form here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateSpacingError, ExplosionCapError, SeriesDivergedError
from .kernel import (
    DEFAULT_TRUNCATION,
    N_MAX,
    KernelTable,
    SeriesSum,
    Truncation,
    _check_spacing,
    _geometric_tail,
)
from .sequences import IntensitySequence

__all__ = [
    "PoExpParams",
    "PoExpSample",
    "LinearCaseParams",
    "FirstEpochBatch",
    "joint_survivor",
    "joint_density",
    "survivor",
    "survivor_series",
    "survivor_by_count",
    "density",
    "density_series",
    "density_by_count",
    "moment",
    "mgf_xi",
    "sample",
    "sample_first_epochs",
    "empirical_joint_survivor",
    "survivor_linear",
    "density_linear",
    "mgf_linear",
    "moment_linear",
    "density_mode",
    "lower_incomplete_gamma",
]

DEFAULT_SHOCK_CAP = 10**6


@dataclass(frozen=True)
class PoExpParams:
    """Rate pair (shock intensities, kill intensities) defining one law.

    The combined rates lambda_n + mu_n must be pairwise distinct; the
    first rows are checked eagerly, deeper rows lazily where used.
    """

    lambda_seq: IntensitySequence
    mu_seq: IntensitySequence

    def __post_init__(self):
        _check_spacing(self.combined().terms(N_MAX), "combined rates")

    def combined(self) -> IntensitySequence:
        return self.lambda_seq + self.mu_seq


@dataclass(frozen=True)
class PoExpSample:
    """One draw of (T, shocks strictly before T)."""

    T: float
    shocks_before: int
    shock_times: tuple[float, ...]

    def __post_init__(self):
        if any(s >= self.T for s in self.shock_times):
            raise ValueError("shock times must precede T")
        if len(self.shock_times) != self.shocks_before:
            raise ValueError("shock count inconsistent with times")


# ---------------------------------------------------------------------------
# cached per-parameter evaluation state


class _Evaluator:
    def __init__(self, params: PoExpParams, depth: int = 200):
        self.params = params
        self.depth = depth
        g = params.combined()
        self.g_values = g.terms(depth)
        self.table = KernelTable(self.g_values, context="combined rates")
        lam = params.lambda_seq.terms(depth - 1)
        self.log_lambda = np.concatenate(([0.0], np.cumsum(np.log(lam))))
        self.mu_values = params.mu_seq.terms(depth)
        self._bk: dict[int, SeriesSum] = {}

    def bk(self, k: int, trunc: Truncation) -> SeriesSum:
        if k not in self._bk:
            self._bk[k] = self.table.column_series(k, self.log_lambda, trunc)
        return self._bk[k]

    def count_terms(self, t: float, weights: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(L_n * a_n(t; g), noise floor) for n < N_MAX, optionally weighted.

        Only the first N_MAX rows are meaningful for count sums (past
        n ~ 40 cancellation erodes them and the noise floor says by how
        much); deeper table rows exist solely for the b_k columns.
        """
        vals, noise = self.table.all_row_mixtures(t, self.log_lambda[:N_MAX], return_noise=True)
        vals = np.maximum(vals, 0.0)
        if weights is not None:
            vals = vals * weights[:N_MAX]
            noise = noise * weights[:N_MAX]
        return vals, noise


@lru_cache(maxsize=32)
def _evaluator(params: PoExpParams) -> _Evaluator:
    return _Evaluator(params)


def _sum_counts(terms: np.ndarray, noise: np.ndarray, trunc: Truncation) -> float:
    """Adaptive stop over nonnegative count terms with geometric tail rescue.

    Terms below their cancellation noise floor carry no information and
    are treated as exhausted rather than summed.  On every exit a
    geometric fit to the last resolved terms estimates the remaining
    tail (slowly decaying counts leave a tail far larger than the last
    term); an unresolvable tail only raises when the row cap was hit
    with the terms still live.
    """
    total = 0.0
    quiet = 0
    kept: list[float] = []
    last_noise = 0.0
    settled = False
    for n, term_val in enumerate(terms):
        if term_val < 4.0 * noise[n]:
            quiet += 1
            if quiet >= trunc.quiet_terms:
                settled = True
                break
            continue
        total += term_val
        kept.append(float(term_val))
        last_noise = float(noise[n])
        if term_val < trunc.tol * max(1.0, total):
            quiet += 1
            if quiet >= trunc.quiet_terms:
                settled = True
                break
        else:
            quiet = 0
    tail = _geometric_tail(kept[-4:])
    if math.isfinite(tail):
        return total + tail
    if settled:
        return total
    if kept and kept[-1] <= 32.0 * last_noise:
        # the remaining terms crossed into their noise floor; whatever tail
        # is left cannot be resolved and is bounded by the floor itself
        return total
    raise SeriesDivergedError("count series did not settle within the row cap")


# ---------------------------------------------------------------------------
# joint laws (always-available route)


def joint_survivor(params: PoExpParams, t: float, n: int) -> float:
    """P{T > t, count at t = n}."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if n < 0:
        raise ValueError("n must be >= 0")
    if t == 0.0:
        return 1.0 if n == 0 else 0.0
    ev = _evaluator(params)
    if n >= ev.depth:
        raise ValueError(f"count {n} beyond supported depth {ev.depth}")
    val = ev.table.row_mixture(n, t, float(ev.log_lambda[n]))
    return min(1.0, max(0.0, val))


def joint_density(params: PoExpParams, t: float, n: int) -> float:
    """Density of {T in dt, count at t = n}: mu_n * L_n * a_n(t)."""
    ev = _evaluator(params)
    if t == 0.0:
        return ev.mu_values[0] if n == 0 else 0.0
    return ev.mu_values[n] * joint_survivor(params, t, n)


# ---------------------------------------------------------------------------
# marginal survivor / density: series route, count route, auto


def survivor_series(
    params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION
) -> float:
    """Survivor from the b_k column series; raises when a column diverges."""
    if t < 0:
        raise ValueError("t must be >= 0")
    ev = _evaluator(params)
    if t == 0.0:
        # total mass: the column sums telescope to one exactly
        for k in range(3):
            if not ev.bk(k, trunc).converged:
                raise SeriesDivergedError(f"b_{k} column failed its decay test")
        return 1.0
    total = 0.0
    quiet = 0
    for k in range(min(N_MAX, ev.depth)):
        bk = ev.bk(k, trunc)
        if not bk.converged:
            raise SeriesDivergedError(f"b_{k} column failed its decay test")
        term_val = bk.value * math.exp(-ev.g_values[k] * t)
        total += term_val
        if abs(term_val) < trunc.tol * max(1.0, abs(total)):
            quiet += 1
            if quiet >= trunc.quiet_terms:
                break
        else:
            quiet = 0
    return min(1.0, max(0.0, total))


def survivor_by_count(
    params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION
) -> float:
    """Survivor as the sum of joint survivors over counts."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 1.0
    ev = _evaluator(params)
    terms, noise = ev.count_terms(t)
    return min(1.0, _sum_counts(terms, noise, trunc))


def survivor(params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION) -> float:
    """P{T > t}; series route with automatic fall back to the count sum."""
    try:
        return survivor_series(params, t, trunc)
    except SeriesDivergedError:
        return survivor_by_count(params, t, trunc)


def density_series(params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION) -> float:
    """Density from the b_k series; at t=0 it telescopes to mu_0 exactly."""
    if t < 0:
        raise ValueError("t must be >= 0")
    ev = _evaluator(params)
    if t == 0.0:
        # the weighted column sums collapse to the first kill rate
        for k in range(3):
            if not ev.bk(k, trunc).converged:
                raise SeriesDivergedError(f"b_{k} column failed its decay test")
        return float(ev.mu_values[0])
    total = 0.0
    quiet = 0
    for k in range(min(N_MAX, ev.depth)):
        bk = ev.bk(k, trunc)
        if not bk.converged:
            raise SeriesDivergedError(f"b_{k} column failed its decay test")
        term_val = ev.g_values[k] * bk.value * math.exp(-ev.g_values[k] * t)
        total += term_val
        if abs(term_val) < trunc.tol * max(1.0, abs(total)):
            quiet += 1
            if quiet >= trunc.quiet_terms:
                break
        else:
            quiet = 0
    return max(0.0, total)


def density_by_count(
    params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION
) -> float:
    """Density as the kill-rate-weighted sum of joint survivors."""
    if t < 0:
        raise ValueError("t must be >= 0")
    ev = _evaluator(params)
    if t == 0.0:
        return float(ev.mu_values[0])
    terms, noise = ev.count_terms(t, ev.mu_values)
    return _sum_counts(terms, noise, trunc)


def density(params: PoExpParams, t: float, trunc: Truncation = DEFAULT_TRUNCATION) -> float:
    """Density of T; series route with automatic fall back."""
    try:
        return density_series(params, t, trunc)
    except SeriesDivergedError:
        return density_by_count(params, t, trunc)


# ---------------------------------------------------------------------------
# accumulated-intensity transform


def mgf_xi(params: PoExpParams, z: float, t: float, trunc: Truncation = DEFAULT_TRUNCATION) -> float:
    """E[exp(-z * integral of the kill rate along the count path)].

    Both boundary identities (z=0 or t=0 give 1) hold exactly by
    construction.  Tilted rates must stay pairwise distinct at this z.
    """
    if z < 0:
        raise ValueError("z must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if z == 0.0 or t == 0.0:
        return 1.0
    count = N_MAX
    tilted = params.lambda_seq.terms(count) + z * params.mu_seq.terms(count)
    try:
        table = KernelTable(tilted, context=f"tilted rates at z={z!r}")
    except DegenerateSpacingError as err:
        raise DegenerateSpacingError(err.index_a, err.index_b, err.value, f"z={z!r}") from err
    lam = params.lambda_seq.terms(count - 1)
    log_lam = np.concatenate(([0.0], np.cumsum(np.log(lam))))
    terms, noise = table.all_row_mixtures(t, log_lam, return_noise=True)
    return min(1.0, _sum_counts(np.maximum(terms, 0.0), noise, trunc))


# ---------------------------------------------------------------------------
# moments


def _mean_series(params: PoExpParams, trunc: Truncation) -> float:
    """Mean as the sum of products L_n / Pi_n, with analytic tail handling.

    The term ratio lambda_n / g_{n+1} is a rational function of n, so the
    convergence class (geometric, power-law with index s, divergent) is
    decided from its large-n limit before summing.
    """
    lam = params.lambda_seq
    g = params.combined()

    def ratio(n: int) -> float:
        return lam.term(n) / g.term(n + 1)

    # classification of the tail: r(n) -> L; near L = 1 the decay is a
    # power law with index s = lim n*(1 - r(n)) (Richardson-extrapolated)
    big = 10**7
    L = ratio(big)
    if L > 1.0 + 1e-12:
        return math.inf
    s_index = None
    if L > 0.999:
        s1 = big * (1.0 - ratio(big))
        s2 = 2 * big * (1.0 - ratio(2 * big))
        s_index = 2 * s2 - s1
        if s_index <= 1.0 + 1e-9:
            return math.inf

    chunk = 100_000
    hard_cap = 4_000_000
    total = 0.0
    start = 0
    log_u = math.log(1.0 / g.term(0))
    last_ratio = 0.0
    u = math.exp(log_u)
    while start < hard_cap:
        lam_vals = lam.terms_range(start, start + chunk)
        g_next = g.terms_range(start + 1, start + chunk + 1)
        log_ratios = np.log(lam_vals) - np.log(g_next)
        log_us = log_u + np.concatenate(([0.0], np.cumsum(log_ratios[:-1])))
        us = np.exp(log_us)
        total += float(np.sum(us))
        u = float(us[-1])
        last_ratio = math.exp(float(log_ratios[-1]))
        log_u = float(log_us[-1] + log_ratios[-1])
        start += chunk
        if u < trunc.tol * 1e-3 * max(1.0, total):
            return total
    if s_index is not None:
        if s_index <= 1.0:
            return math.inf
        return total + u * (float(start - 1) / (s_index - 1.0) + 0.5)
    if last_ratio < 1.0:
        return total + u * last_ratio / (1.0 - last_ratio)
    return math.inf


def _tail_condition_holds(params: PoExpParams, m: int, trunc: Truncation) -> bool:
    """Numeric check that t^m * survivor(t) dies out on a geometric grid.

    A vanishing tail keeps shrinking fast between grid doublings; an
    algebraic tail (the divergent-moment case) flattens out instead.
    """
    g0 = params.combined().term(0)
    t = 1.0 / g0
    t_max = 50.0 / g0
    vals = []
    while t <= t_max:
        vals.append(t**m * survivor_by_count(params, t, trunc))
        t *= 2.0
    peak = max(vals)
    if peak == 0.0:
        return True
    ratio = vals[-1] / max(vals[-2], 1e-300)
    return vals[-1] < 1e-2 * peak and ratio <= 0.75


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 24) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, fm, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, fa, m, fm, flm, left, tol / 2.0, depth - 1) + recurse(
            m, fm, b, fb, frm, right, tol / 2.0, depth - 1
        )

    return recurse(a, fa, b, fb, fm, whole, tol, depth)


def moment(params: PoExpParams, m: int, trunc: Truncation = DEFAULT_TRUNCATION) -> float:
    """E[T^m]; +inf is a value, not an error.

    m = 1 uses the always-available product-ratio series.  Higher moments
    use the b_k series when it converges and otherwise integrate
    m * t^(m-1) * survivor(t) after checking the tail actually vanishes.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return _mean_series(params, trunc)
    ev = _evaluator(params)
    try:
        total = 0.0
        quiet = 0
        for k in range(min(N_MAX, ev.depth)):
            bk = ev.bk(k, trunc)
            if not bk.converged:
                raise SeriesDivergedError(f"b_{k} column failed its decay test")
            term_val = bk.value / ev.g_values[k] ** m
            total += term_val
            if abs(term_val) < trunc.tol * max(1.0, abs(total)):
                quiet += 1
                if quiet >= trunc.quiet_terms:
                    break
            else:
                quiet = 0
        if not _tail_condition_holds(params, m, trunc):
            return math.inf
        return math.factorial(m) * total
    except SeriesDivergedError:
        if not _tail_condition_holds(params, m, trunc):
            return math.inf
        g0 = params.combined().term(0)
        t_max = (50.0 + 10.0 * m) / g0
        return m * _adaptive_simpson(
            lambda t: t ** (m - 1) * survivor_by_count(params, t, trunc), 0.0, t_max, 1e-10
        )


# ---------------------------------------------------------------------------
# exact sampling (competing clocks) and batch estimators


def sample(
    params: PoExpParams, rng: np.random.Generator, shock_cap: int = DEFAULT_SHOCK_CAP
) -> PoExpSample:
    """Draw (T, shock history) by inverse-transform competing clocks."""
    lam = params.lambda_seq
    mu = params.mu_seq
    t = 0.0
    times: list[float] = []
    n = 0
    while True:
        l_n = lam.term(n)
        m_n = mu.term(n)
        g_n = l_n + m_n
        t += -math.log1p(-rng.random()) / g_n
        if rng.random() < m_n / g_n:
            return PoExpSample(t, n, tuple(times))
        times.append(t)
        n += 1
        if n >= shock_cap:
            raise ExplosionCapError(shock_cap, t)


@dataclass(frozen=True)
class FirstEpochBatch:
    """Vectorised competing-clock draws for many independent epochs.

    ``entry[:, j]`` is the time the path entered count j (0 for j=0),
    ``waits[:, j]`` the holding time at count j, ``kill_col`` the count at
    which the kill fired.  Paths whose kill lies beyond the column budget
    are flagged capped and excluded by the estimators.
    """

    entry: np.ndarray
    waits: np.ndarray
    kill_col: np.ndarray
    capped: np.ndarray

    @property
    def max_shocks(self) -> int:
        return self.entry.shape[1] - 1

    @property
    def kill_times(self) -> np.ndarray:
        """Kill time per path; for capped paths this is only a lower bound."""
        rows = np.arange(self.entry.shape[0])
        return self.entry[rows, self.kill_col] + self.waits[rows, self.kill_col]

    def joint_survivor_mask(self, t: float, n: int) -> np.ndarray:
        """Indicator of {T > t, count at t = n} per path.

        Valid for any n below the column budget: a capped path's kill
        necessarily falls beyond every simulated column, so the event is
        decided by the entry/holding columns alone.
        """
        if n >= self.max_shocks:
            raise ValueError(f"n={n} not decidable with {self.max_shocks} shock columns")
        return (
            (self.kill_col >= n)
            & (self.entry[:, n] <= t)
            & (self.entry[:, n] + self.waits[:, n] > t)
        )

    def alive_mask(self, t: float) -> np.ndarray:
        """Indicator of {T > t} per path.

        The count at t is the last entry column not exceeding t; the path
        is alive iff the kill column is at or past it.  Paths whose count
        at t overflows the column budget (probability decays geometrically
        in the budget) are counted alive.
        """
        count_at_t = np.sum(self.entry <= t, axis=1) - 1
        return self.kill_col >= count_at_t


def sample_first_epochs(
    params: PoExpParams,
    n_paths: int,
    rng: np.random.Generator,
    max_shocks: int = N_MAX,
) -> FirstEpochBatch:
    """Draw n_paths epochs at once (two uniform blocks: waits, then branches)."""
    lam = params.lambda_seq.terms(max_shocks + 1)
    mu = params.mu_seq.terms(max_shocks + 1)
    g = lam + mu
    u_wait = rng.random((n_paths, max_shocks + 1))
    u_branch = rng.random((n_paths, max_shocks + 1))
    waits = -np.log1p(-u_wait) / g[None, :]
    kill = u_branch < (mu / g)[None, :]
    any_kill = kill.any(axis=1)
    kill_col = np.where(any_kill, np.argmax(kill, axis=1), max_shocks)
    entry = np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(waits[:, :-1], axis=1)], axis=1
    )
    return FirstEpochBatch(entry, waits, kill_col, ~any_kill)


def empirical_joint_survivor(
    params: PoExpParams,
    ts: np.ndarray,
    ns: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    max_shocks: int = N_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo joint survivor estimates and standard errors."""
    batch = sample_first_epochs(params, n_paths, rng, max_shocks)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    ns = np.atleast_1d(np.asarray(ns, dtype=int))
    est = np.empty((ts.size, ns.size))
    se = np.empty_like(est)
    for i, t in enumerate(ts):
        for j, n in enumerate(ns):
            p = float(np.mean(batch.joint_survivor_mask(t, int(n))))
            est[i, j] = p
            se[i, j] = math.sqrt(max(p * (1 - p), 1e-300) / n_paths)
    return est, se


def empirical_survivor(
    params: PoExpParams,
    ts: np.ndarray,
    n_paths: int,
    rng: np.random.Generator,
    max_shocks: int = 127,
    chunk: int = 20_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo marginal survivor estimates and standard errors."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    alive = np.zeros(ts.size)
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        batch = sample_first_epochs(params, m, rng, max_shocks)
        for i, t in enumerate(ts):
            alive[i] += float(np.sum(batch.alive_mask(float(t))))
        done += m
    est = alive / n_paths
    se = np.sqrt(np.maximum(est * (1 - est), 1e-300) / n_paths)
    return est, se


# ---------------------------------------------------------------------------
# closed forms for constant shock rate with affine kill rates


@dataclass(frozen=True)
class LinearCaseParams:
    """Constant shock rate lam, kill rates mu + n*nu."""

    lam: float
    mu: float
    nu: float

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0 or self.nu <= 0:
            raise ValueError("lam, mu, nu must all be > 0")

    def as_poexp(self) -> PoExpParams:
        return PoExpParams(
            IntensitySequence.constant(self.lam),
            IntensitySequence.affine(self.mu, self.nu),
        )


def survivor_linear(p: LinearCaseParams, t: float) -> float:
    """exp(lam*(1 - e^(-nu t))/nu - (lam + mu) t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return math.exp(p.lam * -math.expm1(-p.nu * t) / p.nu - (p.lam + p.mu) * t)


def density_linear(p: LinearCaseParams, t: float) -> float:
    """(mu + lam*(1 - e^(-nu t))) * survivor."""
    if t < 0:
        raise ValueError("t must be >= 0")
    alpha = -math.expm1(-p.nu * t)
    return (p.mu + p.lam * alpha) * math.exp(p.lam * alpha / p.nu - (p.lam + p.mu) * t)


def mgf_linear(p: LinearCaseParams, z: float, method: str = "series") -> float:
    """E[e^(-zT)] via the alternating series or the incomplete-gamma form."""
    if z < 0:
        raise ValueError("z must be >= 0")
    if z == 0.0:
        return 1.0
    beta = p.lam / p.nu
    if method == "series":
        A = p.lam + p.mu + z
        total = 0.0
        term_val = 1.0 / A  # n = 0
        n = 0
        while True:
            total += term_val
            n += 1
            term_val *= -beta / n
            term_val = term_val / (A + n * p.nu) * (A + (n - 1) * p.nu)
            # maintain term = (-beta)^n / (n! (A + n nu)) by ratio updates
            if abs(term_val) < 1e-18 * max(1.0, abs(total)) and n > 4:
                break
            if n > 10_000:
                raise SeriesDivergedError("transform series failed to settle")
        return 1.0 - z * math.exp(beta) * total
    if method == "gamma":
        b = (p.mu + z + p.lam) / p.nu
        g = lower_incomplete_gamma(b, beta)
        return 1.0 - z * math.exp(beta - b * math.log(beta)) * g / p.nu
    raise ValueError(f"unknown method {method!r}")


def moment_linear(p: LinearCaseParams, m: int) -> float:
    """m! e^beta sum_n (-beta)^n / (n! (lam + mu + n nu)^m)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    beta = p.lam / p.nu
    A = p.lam + p.mu
    total = 0.0
    log_fact = 0.0
    n = 0
    while True:
        log_mag = n * math.log(beta) - log_fact - m * math.log(A + n * p.nu) if n else -m * math.log(A)
        term_val = (-1.0) ** n * math.exp(log_mag)
        total += term_val
        n += 1
        log_fact += math.log(n)
        if n > 4 and math.exp(n * math.log(beta) - log_fact) < 1e-18 * max(abs(total), 1e-30):
            break
        if n > 10_000:
            raise SeriesDivergedError("moment series failed to settle")
    return math.factorial(m) * math.exp(beta) * total


def density_mode(p: LinearCaseParams) -> float:
    """Argmax of the density: 0 on the flat side, else the log expression."""
    A = p.lam + p.mu
    if p.lam * p.nu <= p.mu**2:
        return 0.0
    inner = p.lam / A * (1.0 + p.nu / (2.0 * A) + math.sqrt(p.nu / A * (1.0 + p.nu / (4.0 * A))))
    return math.log(inner) / p.nu


# ---------------------------------------------------------------------------
# lower incomplete gamma (series / continued-fraction split at x = s + 1)


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Lower incomplete gamma integral from 0 to x of u^(s-1) e^-u du."""
    if s <= 0:
        raise ValueError("s must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 0.0
    if x < s + 1.0:
        # series: x^s e^-x sum x^n / (s (s+1) ... (s+n))
        term_val = 1.0 / s
        total = term_val
        n = 0
        while abs(term_val) > 1e-18 * abs(total):
            n += 1
            term_val *= x / (s + n)
            total += term_val
            if n > 10_000:
                break
        return math.exp(s * math.log(x) - x) * total
    # continued fraction for the upper integral (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    upper = math.exp(s * math.log(x) - x) * h
    return math.gamma(s) - upper
