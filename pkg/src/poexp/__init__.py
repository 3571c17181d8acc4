"""Count-modulated exponential laws, two-pattern jump processes, markets."""

from .distribution import LinearCaseParams, PoExpParams, PoExpSample
from .errors import (
    ConfigError,
    DegenerateSpacingError,
    ExplosionCapError,
    InvalidGirsanovError,
    NoValidMeasureError,
    PoexpError,
    SeriesDivergedError,
)
from .market import EsscherParams, MarketScenario
from .sequences import IntensitySequence, RealSequence
from .telegraph import JumpLaw, JumpSequence, PatternParams, ProcessPath

__all__ = [
    "ConfigError",
    "DegenerateSpacingError",
    "EsscherParams",
    "ExplosionCapError",
    "IntensitySequence",
    "InvalidGirsanovError",
    "JumpLaw",
    "JumpSequence",
    "LinearCaseParams",
    "MarketScenario",
    "NoValidMeasureError",
    "PatternParams",
    "PoExpParams",
    "PoExpSample",
    "PoexpError",
    "ProcessPath",
    "RealSequence",
    "SeriesDivergedError",
]

__version__ = "0.1.0"
