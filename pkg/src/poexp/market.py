"""Bond/stock market on the two-pattern process and its measure changes.

The bond compounds a state-dependent rate; the stock is the positive
multiplicative counterpart of the trajectory: drift enters through an
exponential and every jump multiplies the price by (1 + jump), so jump
supports must stay above -1.

A measure change is parameterised by per-count multipliers r*(n), R*(n)
> -1 on the two jump channels.  It rescales only the unobservable
intensities,

    shock rate  -> shock rate  * (1 + r*)
    switch rate -> switch rate * (1 + R*)

with the compensating trend c*(n) = -shock_rate*r* - switch_rate*R*
making the density process a positive mean-one martingale.  Choosing R*
to zero the martingale defect under the new rates yields an equivalent
martingale measure whenever trend and mean switch jump have opposite
signs; one-sided configurations admit none and are flagged as arbitrage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .distribution import (
    PoExpParams,
    joint_survivor,
    sample_first_epochs,
)
from .errors import InvalidGirsanovError, NoValidMeasureError
from .rng import path_stream
from .sequences import IntensitySequence, RealSequence
from .telegraph import PatternParams, ProcessPath, simulate_path

__all__ = [
    "MarketScenario",
    "MarketPath",
    "EsscherParams",
    "ArbitrageReport",
    "MeasureChangeReport",
    "simulate_market_path",
    "discounted_price",
    "esscher_derive",
    "radon_nikodym",
    "detect_arbitrage",
    "construct_martingale_measure",
    "measure_scenario",
    "verify_measure_change",
    "mean_z",
]


@dataclass(frozen=True)
class MarketScenario:
    """Two alternating patterns plus rates and the initial price."""

    sigma0: PatternParams
    sigma1: PatternParams
    y0: float = 0.0
    y1: float = 0.0
    s0: float = 1.0

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("initial price must be > 0")
        if self.y0 < 0 or self.y1 < 0:
            raise ValueError("interest rates must be >= 0")
        for label, sigma in (("pattern0", self.sigma0), ("pattern1", self.sigma1)):
            for channel, seq in (("shock", sigma.shock_jumps), ("switch", sigma.switch_jumps)):
                low, _ = seq.support_bounds()
                if low <= -1.0:
                    raise ValueError(f"{label} {channel} jump support reaches {low} <= -1")

    @property
    def rates(self) -> tuple[float, float]:
        return (self.y0, self.y1)

    def pattern(self, state: int) -> PatternParams:
        return self.sigma0 if state == 0 else self.sigma1


@dataclass(frozen=True, eq=False)
class MarketPath:
    """One realised trajectory with its bond and stock curves."""

    path: ProcessPath
    scenario: MarketScenario

    @cached_property
    def _bond_arrays(self):
        segs = self.path.segments
        starts = np.array([s.t_start for s in segs])
        rates = np.array([self.scenario.rates[s.state] for s in segs])
        lengths = np.array([s.t_end - s.t_start for s in segs])
        cum = np.concatenate(([0.0], np.cumsum(rates * lengths)[:-1]))
        return starts, rates, cum

    def bond_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        starts, rates, cum = self._bond_arrays
        i = np.maximum(np.searchsorted(starts, ts, side="right") - 1, 0)
        return np.exp(cum[i] + rates[i] * (ts - starts[i]))

    def stock_at(self, ts) -> np.ndarray:
        log_price = self.path.drift_at(ts) + self.path.jump_sum_at(ts, log1p=True)
        return self.scenario.s0 * np.exp(log_price)

    def discounted_at(self, ts) -> np.ndarray:
        return self.stock_at(ts) / self.bond_at(ts)


def simulate_market_path(
    scenario: MarketScenario,
    initial_state: int,
    horizon: float,
    rng: np.random.Generator,
) -> MarketPath:
    path = simulate_path(scenario.sigma0, scenario.sigma1, initial_state, horizon, rng)
    return MarketPath(path, scenario)


def discounted_price(market_path: MarketPath, ts) -> np.ndarray:
    """Stock divided by bond; equals the stock recomputed with shifted trends."""
    return market_path.discounted_at(ts)


def discounted_scenario(scenario: MarketScenario) -> MarketScenario:
    """The zero-rate model of the discounted price: trends shifted by -y.

    Martingale-measure construction targets this model; under the
    resulting measure the discounted price of the original scenario is a
    martingale.
    """
    patterns = []
    for state in (0, 1):
        sigma = scenario.pattern(state)
        patterns.append(
            PatternParams(
                trend=sigma.trend.shift(-scenario.rates[state]),
                shock_jumps=sigma.shock_jumps,
                switch_jumps=sigma.switch_jumps,
                switch_rates=sigma.switch_rates,
                shock_rates=sigma.shock_rates,
            )
        )
    return MarketScenario(patterns[0], patterns[1], 0.0, 0.0, scenario.s0)


# ---------------------------------------------------------------------------
# measure changes


@dataclass(frozen=True)
class EsscherParams:
    """A measure change stored through its transformed intensities.

    The starred rates are full sequences (kept valid by construction);
    the jump multipliers and compensating trend are recovered pointwise:

        r*(n) = lam*(n)/lam(n) - 1       R*(n) = mu*(n)/mu(n) - 1
        c*(n) = lam(n) + mu(n) - lam*(n) - mu*(n)
    """

    lam: tuple[IntensitySequence, IntensitySequence]
    mu: tuple[IntensitySequence, IntensitySequence]
    lam_star: tuple[IntensitySequence, IntensitySequence]
    mu_star: tuple[IntensitySequence, IntensitySequence]

    def r_star(self, state: int, n: int) -> float:
        return self.lam_star[state].term(n) / self.lam[state].term(n) - 1.0

    def R_star(self, state: int, n: int) -> float:
        return self.mu_star[state].term(n) / self.mu[state].term(n) - 1.0

    def c_star(self, state: int, n: int) -> float:
        return (
            self.lam[state].term(n)
            + self.mu[state].term(n)
            - self.lam_star[state].term(n)
            - self.mu_star[state].term(n)
        )

    def c_star_sequence(self, state: int) -> RealSequence:
        base = self.lam[state].as_real() + self.mu[state].as_real()
        starred = self.lam_star[state].as_real() + self.mu_star[state].as_real()
        return base - starred

    def starred_poexp(self, state: int) -> PoExpParams:
        return PoExpParams(self.lam_star[state], self.mu_star[state])

    def is_identity(self) -> bool:
        return all(
            self.c_star_sequence(i).is_zero(1e-14) for i in (0, 1)
        )


def _star_rate(base: IntensitySequence, multiplier: RealSequence, what: str) -> IntensitySequence:
    scaled = RealSequence.__mul__(base, multiplier.shift(1.0))
    try:
        return IntensitySequence(
            prefix=scaled.prefix, tail_num=scaled.tail_num, tail_den=scaled.tail_den
        )
    except ValueError as err:
        raise InvalidGirsanovError(f"{what} multiplier reaches -1 or below: {err}") from err


def esscher_derive(
    scenario: MarketScenario,
    r_star: tuple[RealSequence, RealSequence],
    R_star: tuple[RealSequence, RealSequence],
) -> EsscherParams:
    """Transformed intensities for given jump multipliers (> -1 termwise)."""
    lam = (scenario.sigma0.shock_rates, scenario.sigma1.shock_rates)
    mu = (scenario.sigma0.switch_rates, scenario.sigma1.switch_rates)
    lam_star = tuple(
        _star_rate(lam[i], r_star[i], f"pattern{i} shock") for i in (0, 1)
    )
    mu_star = tuple(
        _star_rate(mu[i], R_star[i], f"pattern{i} switch") for i in (0, 1)
    )
    return EsscherParams(lam, mu, lam_star, mu_star)


def radon_nikodym(path: ProcessPath, esscher: EsscherParams, ts) -> np.ndarray:
    """Density process along one path, accumulated in log space.

    Z(t) compounds the compensating trend over the path's segments and a
    (1 + multiplier) factor per event, shocks using r* at the pre-event
    count and switches R* at the count where the pattern flipped.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    seg_starts = np.array([s.t_start for s in path.segments])
    seg_rate = np.array([esscher.c_star(s.state, s.count) for s in path.segments])
    seg_len = np.array([s.t_end - s.t_start for s in path.segments])
    cum_drift = np.concatenate(([0.0], np.cumsum(seg_rate * seg_len)[:-1]))
    ev_times = np.array([e.time for e in path.events])
    ev_logs = np.array(
        [
            math.log1p(
                esscher.r_star(e.state, e.count)
                if e.kind == "shock"
                else esscher.R_star(e.state, e.count)
            )
            for e in path.events
        ]
    )
    cum_logs = np.cumsum(ev_logs) if ev_logs.size else np.zeros(0)
    i = np.maximum(np.searchsorted(seg_starts, ts, side="right") - 1, 0)
    log_z = cum_drift[i] + seg_rate[i] * (ts - seg_starts[i])
    j = np.searchsorted(ev_times, ts, side="right")
    nz = j > 0
    log_z[nz] += cum_logs[j[nz] - 1]
    return np.exp(log_z)


# ---------------------------------------------------------------------------
# arbitrage detection and martingale-measure construction


@dataclass(frozen=True)
class ArbitrageReport:
    arbitrage_free: bool
    violations: tuple[tuple[int, int, str], ...]  # (state, count, case)


def detect_arbitrage(scenario: MarketScenario, n_check: int = 50) -> ArbitrageReport:
    """Flag counts whose trend and both jump supports share one sign.

    Counts up to n_check are tested pointwise; past them the tail rules
    decide (eventual trend sign against the tail laws' support sides).
    """
    violations: list[tuple[int, int, str]] = []
    for state in (0, 1):
        sigma = scenario.pattern(state)
        for n in range(n_check + 1):
            case = _one_sided_case(sigma, n)
            if case is not None:
                violations.append((state, n, case))
        tail_case = _tail_one_sided_case(sigma, n_check)
        if tail_case is not None:
            violations.append((state, tail_case[0], tail_case[1]))
    return ArbitrageReport(not violations, tuple(violations))


def _one_sided_case(sigma: PatternParams, n: int) -> str | None:
    c = sigma.trend.term(n)
    r = sigma.shock_jumps.law(n)
    R = sigma.switch_jumps.law(n)
    if c < 0 and r.support_max < 0 and R.support_max < 0:
        return "negative"
    if c > 0 and r.support_min > 0 and R.support_min > 0:
        return "positive"
    return None


def _tail_one_sided_case(sigma: PatternParams, n_check: int) -> tuple[int, str] | None:
    r_tail = sigma.shock_jumps.tail
    R_tail = sigma.switch_jumps.tail
    candidates = []
    if sigma.trend.eventually_positive() and r_tail.support_min > 0 and R_tail.support_min > 0:
        candidates.append("positive")
    if sigma.trend.eventually_negative() and r_tail.support_max < 0 and R_tail.support_max < 0:
        candidates.append("negative")
    if not candidates:
        return None
    start = max(n_check + 1, sigma.trend.tail_start(), len(sigma.shock_jumps.prefix),
                len(sigma.switch_jumps.prefix))
    n = start
    while True:  # eventual sign guarantees termination
        case = _one_sided_case(sigma, n)
        if case in candidates:
            return n, case
        n += 1


def construct_martingale_measure(
    scenario: MarketScenario,
    r_star_choice: tuple[RealSequence, RealSequence] | None = None,
) -> EsscherParams:
    """Measure change zeroing the defect under the transformed rates.

    For each count the switch-rate multiplier is forced by
    trend + lam*(n) * mean_shock(n) + mu*(n) * mean_switch(n) = 0 given
    the free shock-side choice (identity by default); a forced multiplier
    at or below -1 means no equivalent martingale measure exists there.
    """
    if r_star_choice is None:
        zero = RealSequence.constant(0.0)
        r_star_choice = (zero, zero)
    lam = (scenario.sigma0.shock_rates, scenario.sigma1.shock_rates)
    mu = (scenario.sigma0.switch_rates, scenario.sigma1.switch_rates)
    lam_star = tuple(
        _star_rate(lam[i], r_star_choice[i], f"pattern{i} shock") for i in (0, 1)
    )
    mu_star_list = []
    for state in (0, 1):
        sigma = scenario.pattern(state)
        numer = sigma.trend + RealSequence.__mul__(lam_star[state], sigma.shock_jumps.means())
        mean_switch = sigma.switch_jumps.means()
        k = max(numer.tail_start(), mean_switch.tail_start(), mu[state].tail_start())
        prefix = []
        for n in range(k):
            rb = mean_switch.term(n)
            cn = numer.term(n)
            if rb == 0.0:
                if abs(cn) > 1e-12 * (1.0 + abs(sigma.trend.term(n))):
                    raise ZeroDivisionError(
                        f"pattern{state} count {n}: zero mean switch jump with "
                        f"unbalanced defect {cn:.6g}"
                    )
                prefix.append(mu[state].term(n))
            else:
                prefix.append(-cn / rb)
        tail_mean = sigma.switch_jumps.tail.mean
        if tail_mean == 0.0:
            if not numer.tail_is_zero(1e-12):
                raise ZeroDivisionError(
                    f"pattern{state} tail: zero mean switch jump with unbalanced defect"
                )
            tail_num, tail_den = mu[state].tail_num, mu[state].tail_den
        else:
            scaled = numer.scale(-1.0 / tail_mean)
            tail_num, tail_den = scaled.tail_num, scaled.tail_den
        candidate = RealSequence(prefix=tuple(prefix), tail_num=tail_num, tail_den=tail_den)
        bad = next((n for n in range(k + 5) if candidate.term(n) <= 0.0), None)
        if bad is None and not candidate.tail_positive():
            bad = k + 5
            while candidate.term(bad) > 0.0:
                bad += 1
        if bad is not None:
            r_val = candidate.term(bad) / mu[state].term(bad) - 1.0
            raise NoValidMeasureError(state, bad, r_val)
        mu_star_list.append(
            IntensitySequence(
                prefix=candidate.prefix,
                tail_num=candidate.tail_num,
                tail_den=candidate.tail_den,
            )
        )
    return EsscherParams(lam, mu, lam_star, tuple(mu_star_list))


def measure_scenario(scenario: MarketScenario, esscher: EsscherParams) -> MarketScenario:
    """The same observables driven by the transformed intensities."""
    patterns = []
    for state in (0, 1):
        sigma = scenario.pattern(state)
        patterns.append(
            PatternParams(
                trend=sigma.trend,
                shock_jumps=sigma.shock_jumps,
                switch_jumps=sigma.switch_jumps,
                switch_rates=esscher.mu_star[state],
                shock_rates=esscher.lam_star[state],
            )
        )
    return MarketScenario(patterns[0], patterns[1], scenario.y0, scenario.y1, scenario.s0)


# ---------------------------------------------------------------------------
# measure-change verification


@dataclass(frozen=True)
class MeasureChangeRow:
    t: float
    n: int
    reweighted: float
    reweighted_se: float
    analytic: float
    direct: float
    direct_se: float

    @property
    def z_reweighted(self) -> float:
        return abs(self.reweighted - self.analytic) / max(self.reweighted_se, 1e-300)

    @property
    def z_direct(self) -> float:
        return abs(self.direct - self.analytic) / max(self.direct_se, 1e-300)


@dataclass(frozen=True)
class MeasureChangeReport:
    rows: tuple[MeasureChangeRow, ...]

    @property
    def max_se_discrepancy(self) -> float:
        return max(max(r.z_reweighted, r.z_direct) for r in self.rows)


def verify_measure_change(
    scenario: MarketScenario,
    esscher: EsscherParams,
    t_grid,
    n_paths: int,
    seed: int,
    initial_state: int = 0,
    n_values=(0, 1, 2, 3),
) -> MeasureChangeReport:
    """Three-way check of the first-epoch joint survivor.

    (A) reweighted simulation under the base measure, (B) the analytic
    law under the transformed rates, (C) direct simulation under the
    transformed rates; the report carries each Monte Carlo side's
    distance from (B) in standard-error units.
    """
    sigma = scenario.pattern(initial_state)
    base = PoExpParams(sigma.shock_rates, sigma.switch_rates)
    starred = esscher.starred_poexp(initial_state)
    batch = sample_first_epochs(base, n_paths, path_stream(seed, 0))
    batch_star = sample_first_epochs(starred, n_paths, path_stream(seed, 1))
    max_n = max(n_values)
    c_star = np.array([esscher.c_star(initial_state, n) for n in range(max_n + 1)])
    log1p_r = np.array(
        [math.log1p(esscher.r_star(initial_state, n)) for n in range(max_n + 1)]
    )
    rows = []
    for t in t_grid:
        t = float(t)
        for n in n_values:
            n = int(n)
            mask = batch.joint_survivor_mask(t, n)
            # density-process weight on the event: occupation-weighted trend
            # compensation plus one shock multiplier per completed shock
            occ = batch.waits[:, : n + 1].copy()
            occ[:, n] = t - batch.entry[:, n]
            log_w = occ @ c_star[: n + 1] + float(np.sum(log1p_r[:n]))
            w = np.where(mask, np.exp(log_w), 0.0)
            a_est = float(np.mean(w))
            a_se = float(np.std(w, ddof=1) / math.sqrt(n_paths))
            b_val = joint_survivor(starred, t, n)
            mask_star = batch_star.joint_survivor_mask(t, n)
            c_est = float(np.mean(mask_star))
            c_se = math.sqrt(max(c_est * (1 - c_est), 1e-300) / n_paths)
            rows.append(MeasureChangeRow(t, n, a_est, a_se, b_val, c_est, c_se))
    return MeasureChangeReport(tuple(rows))


def mean_z(
    scenario: MarketScenario,
    esscher: EsscherParams,
    t_grid,
    n_paths: int,
    seed: int,
    initial_state: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean of the density process (must sit at 1)."""
    t_grid = np.asarray(tuple(float(t) for t in t_grid))
    horizon = float(t_grid.max())
    vals = np.empty((n_paths, t_grid.size))
    for i in range(n_paths):
        path = simulate_path(
            scenario.sigma0, scenario.sigma1, initial_state, horizon, path_stream(seed, i)
        )
        vals[i] = radon_nikodym(path, esscher, t_grid)
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
