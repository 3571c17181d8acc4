"""Stable evaluation of the combinatorial kernel behind every closed form.

For a rate sequence v_0, v_1, ... the library repeatedly needs

    cumulative products      L_n = v_0 * ... * v_{n-1},   L_0 = 1
    reciprocal differences   kappa[n,k] = prod_{j<=n, j!=k} 1/(v_j - v_k)
    exponential mixtures     a_n(t) = sum_{k<=n} kappa[n,k] * exp(-v_k t)
    column series            b_k = sum_{n>=k} L_n * kappa[n,k]

The kappa products overflow/underflow quickly and the a_n mixtures
cancel violently, so products are carried as (sign, log magnitude) pairs
and the alternating sums are accumulated with Kahan compensation after
factoring out the largest term.  Rates must be pairwise distinct beyond
a relative tolerance; coincident rates raise instead of silently losing
the formula's meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpacingError
from .sequences import IntensitySequence, RealSequence

__all__ = [
    "SignedLogValue",
    "SeriesSum",
    "Truncation",
    "KernelTable",
    "term",
    "capital_lambda",
    "capital_pi",
    "kappa",
    "a_n",
    "b_k",
    "check_vandermonde",
    "is_non_explosive",
]

#: relative spacing below which two rates are treated as coincident
EPS_DIST = 1e-9

#: hard cap on the row index of the alternating mixtures; cancellation
#: erodes accuracy past n ~ 40 and makes larger rows meaningless
N_MAX = 60

#: magnitude (in natural log) beyond which a series term cannot be
#: represented in a double; reaching it is reported as divergence
LOG_OVERFLOW = 700.0


@dataclass(frozen=True)
class SignedLogValue:
    """A real number stored as sign and natural-log magnitude.

    sign == 0 encodes exactly zero.  Multiplication composes signs and
    adds log magnitudes, which keeps long products of tiny/huge factors
    exact to rounding.
    """

    sign: int
    log_magnitude: float

    @classmethod
    def from_value(cls, x: float) -> "SignedLogValue":
        if x == 0.0:
            return cls(0, float("-inf"))
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def one(cls) -> "SignedLogValue":
        return cls(1, 0.0)

    def __mul__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0 or other.sign == 0:
            return SignedLogValue(0, float("-inf"))
        return SignedLogValue(self.sign * other.sign, self.log_magnitude + other.log_magnitude)

    def reciprocal(self) -> "SignedLogValue":
        if self.sign == 0:
            raise ZeroDivisionError("reciprocal of exact zero")
        return SignedLogValue(self.sign, -self.log_magnitude)

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)


@dataclass(frozen=True)
class SeriesSum:
    """Partial sum of a series with its convergence verdict."""

    value: float
    converged: bool
    n_terms: int


@dataclass(frozen=True)
class Truncation:
    """Stopping policy for the infinite series.

    A series is accepted once ``quiet_terms`` consecutive terms are below
    ``tol`` relative to the running sum and a geometric fit to the last
    terms bounds the tail below ``tol``; it is declared divergent when
    term magnitudes fail to decrease over ``diverge_window`` consecutive
    indices past ``diverge_after`` (or a term leaves double range).
    """

    tol: float = 1e-12
    quiet_terms: int = 5
    max_terms: int = 200
    diverge_window: int = 20
    diverge_after: int = 50


DEFAULT_TRUNCATION = Truncation()


def _kahan(values) -> float:
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _check_spacing(values: np.ndarray, context: str = "") -> None:
    """Reject any coincident pair among the given rate values."""
    order = np.argsort(values)
    sv = values[order]
    gaps = np.diff(sv)
    scale = np.maximum(np.abs(sv[:-1]), np.abs(sv[1:]))
    scale = np.maximum(scale, 1e-300)
    bad = np.nonzero(gaps < EPS_DIST * scale)[0]
    if bad.size:
        i = int(order[bad[0]])
        j = int(order[bad[0] + 1])
        raise DegenerateSpacingError(min(i, j), max(i, j), float(values[order[bad[0]]]), context)


class KernelTable:
    """Reciprocal-difference triangle for one rate sequence.

    Holds sign/log arrays of kappa[n,k] for n <= size-1 together with the
    rate values, and evaluates the exponential mixtures for all rows at
    once.  Rows are built incrementally:

        kappa[n,k] = kappa[n-1,k] / (v_n - v_k)          (k < n)
        kappa[n,n] = prod_{j<n} 1/(v_j - v_n)
    """

    def __init__(self, values: np.ndarray, context: str = ""):
        values = np.asarray(values, dtype=float)
        n = values.size
        _check_spacing(values, context)
        self.values = values
        self.size = n
        sign = np.zeros((n, n), dtype=np.int8)
        logm = np.full((n, n), -np.inf)
        sign[0, 0] = 1
        logm[0, 0] = 0.0
        for row in range(1, n):
            diff = values[row] - values[:row]
            sign[row, :row] = sign[row - 1, :row] * np.sign(diff).astype(np.int8)
            logm[row, :row] = logm[row - 1, :row] - np.log(np.abs(diff))
            neg = int(np.sum(diff > 0))  # factors (v_j - v_row) with j < row
            sign[row, row] = -1 if neg % 2 else 1
            logm[row, row] = -float(np.sum(np.log(np.abs(diff))))
        self.kappa_sign = sign
        self.kappa_log = logm

    def row_mixture(self, n: int, t: float, log_weight: float = 0.0) -> float:
        """weight * sum_k kappa[n,k] exp(-v_k t), Kahan-compensated."""
        if t == 0.0 and n >= 1:
            return 0.0
        logs = self.kappa_log[n, : n + 1] + log_weight - self.values[: n + 1] * t
        signs = self.kappa_sign[n, : n + 1]
        m = float(np.max(logs))
        if m == -np.inf:
            return 0.0
        if m > LOG_OVERFLOW:
            raise OverflowError("mixture term exceeds double range")
        return math.exp(m) * _kahan(signs * np.exp(logs - m))

    def all_row_mixtures(
        self, t: float, log_weights: np.ndarray, return_noise: bool = False
    ) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
        """Row mixtures for every n < len(log_weights) (vectorised Kahan over k).

        With ``return_noise`` also returns each row's cancellation noise
        floor (row size * eps * largest summand); a row value below its
        floor carries no information.
        """
        return self.rows_weighted(-self.values[: log_weights.size] * t, log_weights, t == 0.0, return_noise)

    def rows_weighted(
        self,
        log_col: np.ndarray,
        log_weights: np.ndarray,
        zero_boundary: bool = False,
        return_noise: bool = False,
    ):
        """Mixtures sum_k kappa[n,k] * exp(log_col[k]) * exp(log_weights[n])."""
        n = log_weights.size
        if n > self.size:
            raise ValueError("more weights than table rows")
        logs = self.kappa_log[:n, :n] + log_weights[:, None] + log_col[None, :n]
        m = np.max(logs, axis=1)
        m = np.where(np.isfinite(m), m, 0.0)
        scaled = np.where(
            self.kappa_sign[:n, :n] != 0, self.kappa_sign[:n, :n] * np.exp(logs - m[:, None]), 0.0
        )
        total = np.zeros(n)
        comp = np.zeros(n)
        for k in range(n):
            y = scaled[:, k] - comp
            s = total + y
            comp = (s - total) - y
            total = s
        out = np.exp(m) * total
        if zero_boundary:
            out[1:] = 0.0  # exact boundary: rows n >= 1 vanish at t = 0
        if not return_noise:
            return out
        noise = np.exp(m) * np.arange(1, n + 1) * 2.3e-16
        if zero_boundary:
            noise[:] = 0.0
        return out, noise

    def column_series(
        self,
        k: int,
        log_weights: np.ndarray,
        trunc: Truncation,
        weight_signs: np.ndarray | None = None,
    ) -> SeriesSum:
        """sum_{n>=k} weight_n * kappa[n,k] under the truncation policy."""
        total = 0.0
        comp = 0.0
        quiet = 0
        nondecreasing = 0
        prev_mag = None
        mags: list[float] = []
        n_used = 0
        limit = min(self.size, trunc.max_terms)
        for n in range(k, limit):
            lg = self.kappa_log[n, k] + log_weights[n]
            sign = int(self.kappa_sign[n, k])
            if weight_signs is not None:
                sign *= int(weight_signs[n])
            if lg > LOG_OVERFLOW and sign != 0:
                return SeriesSum(total, False, n_used)
            term_val = sign * math.exp(lg) if sign else 0.0
            y = term_val - comp
            s = total + y
            comp = (s - total) - y
            total = s
            n_used += 1
            mag = abs(term_val)
            mags.append(mag)
            if prev_mag is not None:
                nondecreasing = nondecreasing + 1 if mag >= prev_mag else 0
                if n > trunc.diverge_after and nondecreasing >= trunc.diverge_window:
                    return SeriesSum(total, False, n_used)
            prev_mag = mag
            if mag < trunc.tol * max(1.0, abs(total)):
                quiet += 1
                if quiet >= trunc.quiet_terms and _geometric_tail(mags) < trunc.tol * max(
                    1.0, abs(total)
                ):
                    return SeriesSum(total, True, n_used)
            else:
                quiet = 0
        return SeriesSum(total, False, n_used)


def _two_prod(a: float, b: float) -> tuple[float, float]:
    """Exact product a*b = x + err (Dekker splitting, no fma needed)."""
    x = a * b
    c = 134217729.0  # 2**27 + 1
    t = c * a
    ah = t - (t - a)
    al = a - ah
    t = c * b
    bh = t - (t - b)
    bl = b - bh
    err = ((ah * bh - x) + ah * bl + al * bh) + al * bl
    return x, err


def _dd_div_float(hi: float, lo: float, d: float) -> tuple[float, float]:
    """Double-double (hi+lo) divided by a double."""
    q1 = hi / d
    p, e = _two_prod(q1, d)
    r = ((hi - p) - e) + lo
    q2 = r / d
    s = q1 + q2
    return s, q2 - (s - q1)


def kappa_row_precise(values: np.ndarray, n: int) -> np.ndarray:
    """Row kappa[n, 0..n] by compensated products, rounded to double.

    Used by the identity check; magnitudes must stay inside double range
    (true for the moderate n and unit-scale rates the check runs at).
    """
    values = np.asarray(values, dtype=float)
    out = np.empty(n + 1)
    for k in range(n + 1):
        hi, lo = 1.0, 0.0
        for j in range(n + 1):
            if j == k:
                continue
            hi, lo = _dd_div_float(hi, lo, values[j] - values[k])
            if not math.isfinite(hi):
                raise OverflowError("kappa magnitude outside double range")
        out[k] = hi + lo
    return out


def _geometric_tail(mags: list[float]) -> float:
    """Tail bound from a geometric fit to the last few term magnitudes."""
    recent = [m for m in mags[-4:] if m > 0.0]
    if len(recent) < 2:
        return 0.0
    ratios = [b / a for a, b in zip(recent, recent[1:]) if a > 0.0]
    if not ratios:
        return 0.0
    r = max(ratios)
    if r >= 1.0:
        return math.inf
    return recent[-1] * r / (1.0 - r)


# ---------------------------------------------------------------------------
# module-level operations on sequences


def term(seq: RealSequence, n: int) -> float:
    return seq.term(n)


def capital_lambda(seq: IntensitySequence, n: int) -> SignedLogValue:
    """Product of the first n rates (empty product = 1)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return SignedLogValue.one()
    vals = seq.terms(n)
    return SignedLogValue(1, float(np.sum(np.log(vals))))


def capital_pi(lambda_seq: IntensitySequence, mu_seq: IntensitySequence, n: int) -> SignedLogValue:
    """Product of the rate sums (lambda_k + mu_k) for k = 0..n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    vals = lambda_seq.terms(n + 1) + mu_seq.terms(n + 1)
    return SignedLogValue(1, float(np.sum(np.log(vals))))


def kappa(seq: RealSequence, n: int, k: int) -> SignedLogValue:
    """Reciprocal-difference coefficient kappa[n,k] of the sequence."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    table = KernelTable(seq.terms(n + 1))
    s = int(table.kappa_sign[n, k])
    return SignedLogValue(s, float(table.kappa_log[n, k]) if s else float("-inf"))


def a_n(seq: RealSequence, n: int, t: float) -> float:
    """Exponential mixture sum_k kappa[n,k] exp(-v_k t); 0 at t=0 for n>=1.

    Cancellation can leave a tiny negative residue; it is clamped since
    the mixture is a scaled probability.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if n == 0:
        return math.exp(-seq.term(0) * t)
    table = KernelTable(seq.terms(n + 1))
    return max(0.0, table.row_mixture(n, t))


def b_k(
    lambda_seq: IntensitySequence,
    mu_seq: IntensitySequence,
    z: float,
    k: int,
    trunc: Truncation = DEFAULT_TRUNCATION,
) -> SeriesSum:
    """Column series sum_{n>=k} L_n * kappa[n,k] of the tilted rates
    lambda_n + z*mu_n.  Divergence is a reported outcome, not an error.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if z < 0:
        raise ValueError("z must be >= 0")
    count = trunc.max_terms
    tilted = lambda_seq.terms(count) + z * mu_seq.terms(count)
    table = KernelTable(tilted, context=f"tilted rates at z={z!r}")
    log_lam = np.concatenate(([0.0], np.cumsum(np.log(lambda_seq.terms(count - 1)))))
    return table.column_series(k, log_lam, trunc)


def check_vandermonde(seq: RealSequence, n: int) -> float:
    """Max residual of the power identities satisfied by kappa[n, .].

    sum_k kappa[n,k] v_k^m must vanish for m < n and equal (-1)^n at
    m = n; the worst deviation over m = 0..n is returned.  The kappa row
    is recomputed with compensated products and the sums taken exactly,
    so the residual reflects the conditioning of the identity itself
    rather than log-space representation noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    vals = seq.terms(n + 1)
    _check_spacing(vals)
    kap = kappa_row_precise(vals, n)
    worst = 0.0
    for m in range(n + 1):
        total = math.fsum(kap * vals**m)
        target = (-1.0) ** n if m == n else 0.0
        worst = max(worst, abs(total - target))
    return worst


def is_non_explosive(seq: IntensitySequence) -> bool:
    """True iff the reciprocal rates sum to infinity (decided from the tail)."""
    return seq.non_explosive
