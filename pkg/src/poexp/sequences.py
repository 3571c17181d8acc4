"""Deterministic parameter sequences: explicit prefix plus an analytic tail.

Every per-shock-count parameter in the library (rates, trends, jump means)
is a total sequence over n >= 0, stored as a finite prefix of explicit
values plus a rational tail p(n)/q(n) evaluated at the global index n for
all n past the prefix.  The user-facing tail rules are

    constant          v
    affine            a + b*n
    quadratic         a*(n+1)^2
    reciprocal_affine 1/(a + b*n)

all special cases of the rational form, which is closed under the sums,
scalar multiples, products and quotients that the distribution formulas
and measure changes need (combined rates, tilted rates, trend corrections).
Keeping the tail analytic makes non-explosion and series-tail behaviour
decidable instead of being a sampling guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RealSequence", "IntensitySequence", "term"]


def _trim(coeffs) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


def _poly_eval(coeffs: tuple[float, ...], n: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * n + c
    return acc


def _poly_eval_vec(coeffs: tuple[float, ...], n: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(n)
    for c in reversed(coeffs):
        acc = acc * n + c
    return acc


def _poly_add(a: tuple[float, ...], b: tuple[float, ...]) -> tuple[float, ...]:
    out = [0.0] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return _trim(out)


def _poly_mul(a: tuple[float, ...], b: tuple[float, ...]) -> tuple[float, ...]:
    return _trim(np.convolve(np.asarray(a), np.asarray(b)))


def _last_sign_change_bound(coeffs: tuple[float, ...]) -> int:
    """Integer beyond every real root of the polynomial."""
    if len(coeffs) == 1:
        return 0
    roots = np.roots(list(reversed(coeffs)))
    real = [r.real for r in roots if abs(r.imag) < 1e-9 * (1 + abs(r.real))]
    if not real:
        return 0
    return int(math.ceil(max(real))) + 1


@dataclass(frozen=True)
class RealSequence:
    """A total real sequence: prefix values, then p(n)/q(n).

    ``tail_num`` and ``tail_den`` hold polynomial coefficients (low order
    first) in the global index n, applied for every n >= len(prefix).
    """

    prefix: tuple[float, ...] = ()
    tail_num: tuple[float, ...] = (0.0,)
    tail_den: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(v) for v in self.prefix))
        num, den = _trim(self.tail_num), _trim(self.tail_den)
        if all(c == 0.0 for c in den):
            raise ValueError("tail denominator is identically zero")
        if len(den) == 1 and den[0] != 1.0:
            num = tuple(c / den[0] for c in num)
            den = (1.0,)
        object.__setattr__(self, "tail_num", num)
        object.__setattr__(self, "tail_den", den)

    # -- constructors ------------------------------------------------

    @classmethod
    def constant(cls, value: float, prefix=()) -> "RealSequence":
        return cls(prefix=tuple(prefix), tail_num=(float(value),))

    @classmethod
    def affine(cls, intercept: float, slope: float, prefix=()) -> "RealSequence":
        """Tail rule intercept + slope*n at the global index n."""
        return cls(prefix=tuple(prefix), tail_num=(float(intercept), float(slope)))

    @classmethod
    def quadratic(cls, coeff: float, prefix=()) -> "RealSequence":
        """Tail rule coeff*(n+1)^2 at the global index n."""
        a = float(coeff)
        return cls(prefix=tuple(prefix), tail_num=(a, 2.0 * a, a))

    @classmethod
    def reciprocal_affine(cls, intercept: float, slope: float, prefix=()) -> "RealSequence":
        """Tail rule 1/(intercept + slope*n) at the global index n."""
        return cls(prefix=tuple(prefix), tail_num=(1.0,), tail_den=(float(intercept), float(slope)))

    # -- evaluation --------------------------------------------------

    def term(self, n: int) -> float:
        if n < 0:
            raise ValueError(f"sequence index must be >= 0, got {n}")
        if n < len(self.prefix):
            return self.prefix[n]
        x = float(n)
        return _poly_eval(self.tail_num, x) / _poly_eval(self.tail_den, x)

    def terms(self, count: int) -> np.ndarray:
        """First ``count`` terms as an array."""
        return self.terms_range(0, count)

    def terms_range(self, start: int, stop: int) -> np.ndarray:
        """Terms for indices start..stop-1 as an array."""
        if start < 0 or stop < start:
            raise ValueError("need 0 <= start <= stop")
        count = stop - start
        vals = np.empty(count)
        k = min(max(len(self.prefix) - start, 0), count)
        for i in range(k):
            vals[i] = self.prefix[start + i]
        if count > k:
            n = np.arange(start + k, stop, dtype=float)
            vals[k:] = _poly_eval_vec(self.tail_num, n) / _poly_eval_vec(self.tail_den, n)
        return vals

    @property
    def tail_degree(self) -> int:
        """Growth order of the tail: deg(numerator) - deg(denominator)."""
        return (len(self.tail_num) - 1) - (len(self.tail_den) - 1)

    def tail_start(self) -> int:
        return len(self.prefix)

    # -- algebra (closed in this representation) ----------------------

    def _aligned_prefix(self, other: "RealSequence") -> tuple[tuple, tuple]:
        k = max(len(self.prefix), len(other.prefix))
        return (
            tuple(self.term(i) for i in range(k)),
            tuple(other.term(i) for i in range(k)),
        )

    def __add__(self, other: "RealSequence") -> "RealSequence":
        pa, pb = self._aligned_prefix(other)
        num = _poly_add(
            _poly_mul(self.tail_num, other.tail_den), _poly_mul(other.tail_num, self.tail_den)
        )
        return RealSequence(
            prefix=tuple(a + b for a, b in zip(pa, pb)),
            tail_num=num,
            tail_den=_poly_mul(self.tail_den, other.tail_den),
        )

    def __sub__(self, other: "RealSequence") -> "RealSequence":
        return self + other.scale(-1.0)

    def __mul__(self, other: "RealSequence") -> "RealSequence":
        pa, pb = self._aligned_prefix(other)
        return RealSequence(
            prefix=tuple(a * b for a, b in zip(pa, pb)),
            tail_num=_poly_mul(self.tail_num, other.tail_num),
            tail_den=_poly_mul(self.tail_den, other.tail_den),
        )

    def divide(self, other: "RealSequence") -> "RealSequence":
        """Pointwise quotient; caller is responsible for nonzero divisors."""
        pa, pb = self._aligned_prefix(other)
        return RealSequence(
            prefix=tuple(a / b for a, b in zip(pa, pb)),
            tail_num=_poly_mul(self.tail_num, other.tail_den),
            tail_den=_poly_mul(self.tail_den, other.tail_num),
        )

    def scale(self, factor: float) -> "RealSequence":
        return RealSequence(
            prefix=tuple(factor * v for v in self.prefix),
            tail_num=tuple(factor * c for c in self.tail_num),
            tail_den=self.tail_den,
        )

    def as_real(self) -> "RealSequence":
        """Drop any subclass constraints (for sign-changing arithmetic)."""
        return RealSequence(prefix=self.prefix, tail_num=self.tail_num, tail_den=self.tail_den)

    def shift(self, offset: float) -> "RealSequence":
        num = _poly_add(self.tail_num, tuple(offset * c for c in self.tail_den))
        return RealSequence(
            prefix=tuple(v + offset for v in self.prefix), tail_num=num, tail_den=self.tail_den
        )

    # -- structural predicates ----------------------------------------

    def tail_is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.tail_num)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self.prefix) and self.tail_is_zero(tol)

    def tail_positive(self) -> bool:
        """True iff the tail is > 0 at every integer n >= the tail start."""
        prod = _poly_mul(self.tail_num, self.tail_den)
        if all(c == 0.0 for c in prod):
            return False
        if prod[-1] < 0.0:
            return False  # eventually negative (or num identically zero)
        n0 = len(self.prefix)
        hi = max(_last_sign_change_bound(self.tail_num), _last_sign_change_bound(self.tail_den))
        for n in range(n0, max(hi, n0) + 1):
            den = _poly_eval(self.tail_den, float(n))
            if den == 0.0 or _poly_eval(self.tail_num, float(n)) / den <= 0.0:
                return False
        return True

    def eventually_positive(self) -> bool:
        return self.tail_num[-1] * self.tail_den[-1] > 0.0

    def eventually_negative(self) -> bool:
        return self.tail_num[-1] * self.tail_den[-1] < 0.0


@dataclass(frozen=True)
class IntensitySequence(RealSequence):
    """A strictly positive sequence of rates (units 1/time).

    Non-explosion of the pure-birth process driven by these rates (the
    reciprocal rates summing to infinity) is decided from the tail rule:
    growth order <= 1 diverges, anything faster converges.
    """

    def __post_init__(self):
        super().__post_init__()
        bad = next((i for i, v in enumerate(self.prefix) if v <= 0.0), None)
        if bad is not None:
            raise ValueError(f"intensity prefix term {bad} is {self.prefix[bad]!r}, must be > 0")
        if not self.tail_positive():
            raise ValueError(
                f"intensity tail rule {self.tail_num}/{self.tail_den} is not strictly positive"
            )

    @property
    def non_explosive(self) -> bool:
        return self.tail_degree <= 1

    def __add__(self, other: RealSequence) -> "IntensitySequence":
        s = RealSequence.__add__(self, other)
        return IntensitySequence(prefix=s.prefix, tail_num=s.tail_num, tail_den=s.tail_den)

    def scale(self, factor: float) -> "IntensitySequence":
        s = RealSequence.scale(self, factor)
        return IntensitySequence(prefix=s.prefix, tail_num=s.tail_num, tail_den=s.tail_den)

    def as_affine(self) -> tuple[float, float] | None:
        """(intercept, slope) when the whole sequence is a + b*n, else None."""
        if len(self.tail_den) > 1 or self.tail_degree > 1:
            return None
        a = self.tail_num[0]
        b = self.tail_num[1] if len(self.tail_num) > 1 else 0.0
        for i, v in enumerate(self.prefix):
            if v != a + b * i:
                return None
        return a, b


def term(seq: RealSequence, n: int) -> float:
    """Value of the sequence at index n (prefix value or tail rule)."""
    return seq.term(n)
