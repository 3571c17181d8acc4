"""Pure-birth renewal counting: state-dependent exponential gaps.

The process sits at count n for an Exp(rate_n) holding time, then steps to
n+1.  Sampling uses the inverse transform -ln(1-U)/rate_n so that paths
are bit-reproducible from a seeded stream on any platform.  The pmf at
time t has three evaluation branches:

    all rates equal            Poisson weights
    rates affine in n          pure-birth (negative-binomial) weights,
                               stable at large n where the alternating
                               mixture loses all precision
    otherwise                  L_n * a_n(t) from the kernel mixtures

Coincident but not identical rates are rejected (no confluent forms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExplosionCapError
from .kernel import KernelTable, capital_lambda
from .sequences import IntensitySequence

__all__ = ["CountingPath", "pmf_pi", "sample_counting_path", "count_batch"]

DEFAULT_EVENT_CAP = 10**6


@dataclass(frozen=True)
class CountingPath:
    """Arrival times of one sampled path up to a horizon."""

    event_times: tuple[float, ...]
    horizon: float
    truncated: bool

    def __post_init__(self):
        times = self.event_times
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        if times and (times[0] <= 0.0 or times[-1] > self.horizon):
            raise ValueError("event times must lie in (0, horizon]")

    def count_at(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, horizon]")
        return int(np.searchsorted(self.event_times, t, side="right"))


def pmf_pi(lambda_seq: IntensitySequence, n: int, t: float) -> float:
    """P{count at t equals n}."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 1.0 if n == 0 else 0.0
    affine = lambda_seq.as_affine()
    if affine is not None:
        a, b = affine
        if b == 0.0:
            # homogeneous: Poisson weights
            log_p = -a * t + n * math.log(a * t) - math.lgamma(n + 1) if n else -a * t
            return _clamp01(math.exp(log_p))
        # pure-birth closed form for rate a + b*n: stable for any n
        alpha = a / b
        log_p = (
            math.lgamma(alpha + n)
            - math.lgamma(alpha)
            - math.lgamma(n + 1)
            - a * t
            + n * math.log1p(-math.exp(-b * t))
        )
        return _clamp01(math.exp(log_p))
    table = KernelTable(lambda_seq.terms(n + 1), context="counting rates")
    log_w = capital_lambda(lambda_seq, n).log_magnitude
    return _clamp01(table.row_mixture(n, t, log_w))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def sample_counting_path(
    lambda_seq: IntensitySequence,
    horizon: float,
    rng: np.random.Generator,
    event_cap: int = DEFAULT_EVENT_CAP,
    raise_on_cap: bool = False,
) -> CountingPath:
    """Draw one path by sequential inverse-transform exponential gaps.

    Hitting the event cap marks the path truncated (or raises when asked);
    expected only for explosive rate sequences.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    times: list[float] = []
    t = 0.0
    n = 0
    while True:
        rate = lambda_seq.term(n)
        t += -math.log1p(-rng.random()) / rate
        if t > horizon:
            return CountingPath(tuple(times), horizon, False)
        times.append(t)
        n += 1
        if n >= event_cap:
            if raise_on_cap:
                raise ExplosionCapError(event_cap, t)
            return CountingPath(tuple(times), horizon, True)


def count_batch(
    lambda_seq: IntensitySequence,
    t: float,
    n_paths: int,
    rng: np.random.Generator,
    max_events: int = 2000,
    chunk: int = 10_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Counts at time t for many paths at once.

    Returns (counts, capped); a capped path saw max_events arrivals before
    t and its count is reported as max_events.  Gap draws use the same
    inverse transform as the scalar sampler, consumed row-wise per chunk,
    so results are deterministic for a given stream and chunk size.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    rates = lambda_seq.terms(max_events)
    counts = np.empty(n_paths, dtype=np.int64)
    capped = np.empty(n_paths, dtype=bool)
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        u = rng.random((m, max_events))
        gaps = -np.log1p(-u) / rates[None, :]
        arrivals = np.cumsum(gaps, axis=1)
        c = np.sum(arrivals <= t, axis=1)
        counts[done : done + m] = c
        capped[done : done + m] = c >= max_events
        done += m
    return counts, capped
