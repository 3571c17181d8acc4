"""Exception hierarchy shared by all modules."""


class PoexpError(Exception):
    """Base class for all library errors."""


class DegenerateSpacingError(PoexpError):
    """Two rate terms coincide within the distinctness tolerance.

    The reciprocal-difference coefficients are only defined for pairwise
    distinct rates; coincident rates are rejected instead of being handled
    by a confluent variant.
    """

    def __init__(self, index_a: int, index_b: int, value: float, context: str = ""):
        self.index_a = index_a
        self.index_b = index_b
        self.value = value
        msg = f"rate terms {index_a} and {index_b} coincide near {value!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class SeriesDivergedError(PoexpError):
    """A series evaluation failed its decay test (or overflowed)."""


class ExplosionCapError(PoexpError):
    """A sampled path hit the per-path event cap."""

    def __init__(self, cap: int, time: float):
        self.cap = cap
        self.time = time
        super().__init__(f"event cap {cap} reached at t={time:.6g}")


class InvalidGirsanovError(PoexpError):
    """A proposed measure change uses a jump multiplier <= -1."""


class NoValidMeasureError(PoexpError):
    """No equivalent martingale measure exists for the requested free parameters."""

    def __init__(self, state: int, n: int, value: float):
        self.state = state
        self.n = n
        self.value = value
        super().__init__(
            f"required switch multiplier at state {state}, n={n} is {value:.6g} <= -1"
        )


class ConfigError(PoexpError):
    """A scenario configuration file failed validation."""
