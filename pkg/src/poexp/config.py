"""Scenario configuration: TOML sections mapped onto the domain types.

Sections ``pattern0`` and ``pattern1`` each define the five per-count
entries (c, r, R, mu, lambda); ``market`` the rates and initial price;
``simulation`` run controls; optional ``esscher`` the jump multipliers;
optional ``dist`` the distribution-grid controls.  Every parse failure
carries the dotted path of the offending field.

Sequence spec:   { prefix = [..], tail = { kind = "...", ... } }
    kinds: constant(value), affine(intercept, slope),
           quadratic(coeff), reciprocal_affine(intercept, slope)
Jump-law spec:   { kind = "deterministic", value = v }
                 { kind = "discrete", values = [..], probs = [..] }
Jump sequence:   { prefix = [law, ...], tail = law }
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .market import MarketScenario
from .sequences import IntensitySequence, RealSequence
from .telegraph import JumpLaw, JumpSequence, PatternParams

__all__ = ["ScenarioConfig", "SimulationSettings", "DistSettings", "load_config"]


@dataclass(frozen=True)
class SimulationSettings:
    horizon: float = 2.0
    n_paths: int = 10_000
    seed: int = 0
    step: float | None = None
    initial_state: int = 0
    t_grid: tuple[float, ...] = (0.5, 1.0, 2.0)
    workers: int = 1


@dataclass(frozen=True)
class DistSettings:
    t_max: float = 5.0
    t_step: float = 0.01
    n_joint: int = 4
    moments: tuple[int, ...] = (1, 2)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: MarketScenario
    simulation: SimulationSettings
    dist: DistSettings
    esscher_r_star: tuple[RealSequence, RealSequence] | None = None
    esscher_R_star: tuple[RealSequence, RealSequence] | None = None


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _get(table: dict, path: str, key: str, kind, default=None, required=False):
    if key not in table:
        if required:
            _fail(f"{path}.{key}", "missing required field")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        _fail(f"{path}.{key}", f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_tail(spec, path: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if not isinstance(spec, dict):
        _fail(path, "tail must be a table")
    kind = _get(spec, path, "kind", str, required=True)
    if kind == "constant":
        v = _get(spec, path, "value", float, required=True)
        return (v,), (1.0,)
    if kind == "affine":
        a = _get(spec, path, "intercept", float, required=True)
        b = _get(spec, path, "slope", float, required=True)
        return (a, b), (1.0,)
    if kind == "quadratic":
        c = _get(spec, path, "coeff", float, required=True)
        return (c, 2.0 * c, c), (1.0,)
    if kind == "reciprocal_affine":
        a = _get(spec, path, "intercept", float, required=True)
        b = _get(spec, path, "slope", float, required=True)
        return (1.0,), (a, b)
    _fail(f"{path}.kind", f"unknown tail kind {kind!r}")


def _parse_prefix(spec, path: str) -> tuple[float, ...]:
    prefix = spec.get("prefix", [])
    if not isinstance(prefix, list) or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in prefix
    ):
        _fail(f"{path}.prefix", "expected a list of numbers")
    return tuple(float(v) for v in prefix)


def _parse_sequence(spec, path: str) -> RealSequence:
    if not isinstance(spec, dict):
        _fail(path, "expected a sequence table {prefix=[..], tail={..}}")
    if "tail" not in spec:
        _fail(f"{path}.tail", "missing required field")
    num, den = _parse_tail(spec["tail"], f"{path}.tail")
    return RealSequence(prefix=_parse_prefix(spec, path), tail_num=num, tail_den=den)


def _parse_intensity(spec, path: str) -> IntensitySequence:
    seq = _parse_sequence(spec, path)
    try:
        return IntensitySequence(prefix=seq.prefix, tail_num=seq.tail_num, tail_den=seq.tail_den)
    except ValueError as err:
        _fail(path, str(err))


def _parse_law(spec, path: str) -> JumpLaw:
    if not isinstance(spec, dict):
        _fail(path, "expected a jump-law table")
    kind = _get(spec, path, "kind", str, required=True)
    if kind == "deterministic":
        return JumpLaw.deterministic(_get(spec, path, "value", float, required=True))
    if kind == "discrete":
        values = spec.get("values")
        probs = spec.get("probs")
        if not isinstance(values, list) or not isinstance(probs, list):
            _fail(path, "discrete law needs values=[..] and probs=[..]")
        try:
            return JumpLaw.discrete(
                tuple(float(v) for v in values), tuple(float(p) for p in probs)
            )
        except (TypeError, ValueError) as err:
            _fail(path, str(err))
    _fail(f"{path}.kind", f"unknown jump-law kind {kind!r}")


def _parse_jump_sequence(spec, path: str) -> JumpSequence:
    if not isinstance(spec, dict):
        _fail(path, "expected a jump-sequence table {prefix=[law..], tail=law}")
    if "tail" not in spec:
        _fail(f"{path}.tail", "missing required field")
    tail = _parse_law(spec["tail"], f"{path}.tail")
    prefix_spec = spec.get("prefix", [])
    if not isinstance(prefix_spec, list):
        _fail(f"{path}.prefix", "expected a list of jump laws")
    prefix = tuple(
        _parse_law(law, f"{path}.prefix[{i}]") for i, law in enumerate(prefix_spec)
    )
    return JumpSequence(tail=tail, prefix=prefix)


def _parse_pattern(table, path: str) -> PatternParams:
    if not isinstance(table, dict):
        _fail(path, "missing pattern table")
    for key in ("c", "mu", "lambda"):
        if key not in table:
            _fail(f"{path}.{key}", "missing required field")
    zero = JumpSequence.zero()
    return PatternParams(
        trend=_parse_sequence(table["c"], f"{path}.c"),
        shock_jumps=_parse_jump_sequence(table["r"], f"{path}.r") if "r" in table else zero,
        switch_jumps=_parse_jump_sequence(table["R"], f"{path}.R") if "R" in table else zero,
        switch_rates=_parse_intensity(table["mu"], f"{path}.mu"),
        shock_rates=_parse_intensity(table["lambda"], f"{path}.lambda"),
    )


def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"TOML parse error: {err}") from err

    for section in ("pattern0", "pattern1"):
        if section not in raw:
            _fail(section, "missing required section")
    sigma0 = _parse_pattern(raw["pattern0"], "pattern0")
    sigma1 = _parse_pattern(raw["pattern1"], "pattern1")

    market = raw.get("market", {})
    if not isinstance(market, dict):
        _fail("market", "expected a table")
    try:
        scenario = MarketScenario(
            sigma0,
            sigma1,
            y0=_get(market, "market", "y0", float, 0.0),
            y1=_get(market, "market", "y1", float, 0.0),
            s0=_get(market, "market", "s0", float, 1.0),
        )
    except ValueError as err:
        _fail("market", str(err))

    sim_raw = raw.get("simulation", {})
    if not isinstance(sim_raw, dict):
        _fail("simulation", "expected a table")
    t_grid = sim_raw.get("t_grid", [0.5, 1.0, 2.0])
    if not isinstance(t_grid, list) or not t_grid:
        _fail("simulation.t_grid", "expected a nonempty list of times")
    simulation = SimulationSettings(
        horizon=_get(sim_raw, "simulation", "horizon", float, 2.0),
        n_paths=_get(sim_raw, "simulation", "n_paths", int, 10_000),
        seed=_get(sim_raw, "simulation", "seed", int, 0),
        step=_get(sim_raw, "simulation", "step", float, None),
        initial_state=_get(sim_raw, "simulation", "initial_state", int, 0),
        t_grid=tuple(float(t) for t in t_grid),
        workers=_get(sim_raw, "simulation", "workers", int, 1),
    )
    if simulation.initial_state not in (0, 1):
        _fail("simulation.initial_state", "must be 0 or 1")
    if simulation.n_paths < 2:
        _fail("simulation.n_paths", "must be >= 2")
    if simulation.horizon <= 0:
        _fail("simulation.horizon", "must be > 0")

    dist_raw = raw.get("dist", {})
    if not isinstance(dist_raw, dict):
        _fail("dist", "expected a table")
    moments = dist_raw.get("moments", [1, 2])
    if not isinstance(moments, list) or any(
        isinstance(m, bool) or not isinstance(m, int) or m < 1 for m in moments
    ):
        _fail("dist.moments", "expected a list of integers >= 1")
    dist = DistSettings(
        t_max=_get(dist_raw, "dist", "t_max", float, 5.0),
        t_step=_get(dist_raw, "dist", "t_step", float, 0.01),
        n_joint=_get(dist_raw, "dist", "n_joint", int, 4),
        moments=tuple(moments),
    )

    r_star = R_star = None
    if "esscher" in raw:
        ess = raw["esscher"]
        if not isinstance(ess, dict):
            _fail("esscher", "expected a table")
        for key in ("r_star0", "r_star1", "R_star0", "R_star1"):
            if key not in ess:
                _fail(f"esscher.{key}", "missing required field")
        r_star = (
            _parse_sequence(ess["r_star0"], "esscher.r_star0"),
            _parse_sequence(ess["r_star1"], "esscher.r_star1"),
        )
        R_star = (
            _parse_sequence(ess["R_star0"], "esscher.R_star0"),
            _parse_sequence(ess["R_star1"], "esscher.R_star1"),
        )

    return ScenarioConfig(scenario, simulation, dist, r_star, R_star)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    return parse_config(text)
