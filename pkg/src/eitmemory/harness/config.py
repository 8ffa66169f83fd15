"""Scenario configuration files.

A scenario file is INI text::

    [scenario]
    kind = sbr-sweep
    output = runs/sbr
    jobs = 4

    [grid]
    min = -2e9
    max = 2e9
    step = 25e6

    [overrides]
    atom.omega_c = 12e6

Calibration values may also be overridden by repeating a calibration section
(``[atom]``, ``[medium]`` ...) directly in the scenario file.  Parsing is
strict: unknown sections or keys are fatal.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, RangeError, UnknownKeyError
from . import params as schema
from .parsing import error_line, locate, nearest

logger = logging.getLogger(__name__)

KINDS = ("efficiency-sweep", "background-sweep", "sbr-sweep", "etalon-scan", "qubit-fidelity", "lifetime-fit")
FORMATS = ("csv", "json")
GRID_KINDS = ("efficiency-sweep", "background-sweep", "sbr-sweep", "etalon-scan")

SCENARIO_DEFAULTS = {
    "output": "out",
    "jobs": 1,
    "seed": 0,
    "format": "csv",
    "calibration": "",
}

# default detuning grid per scenario kind (Hz): min, max, step
GRID_DEFAULTS = {
    "efficiency-sweep": (-2e9, 2e9, 25e6),
    "background-sweep": (-2e9, 2e9, 25e6),
    "sbr-sweep": (-2e9, 2e9, 25e6),
    "etalon-scan": (-200e6, 200e6, 1e6),
}

# guards against accidental multi-million point sweeps
MAX_GRID_POINTS = 100_000


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    step: float

    def __post_init__(self):
        for name in ("min", "max", "step"):
            if not math.isfinite(getattr(self, name)):
                raise RangeError(f"grid.{name} must be finite")
        if not self.step > 0:
            raise RangeError(f"grid.step must be > 0, got {self.step!r}")
        if not self.min < self.max:
            raise RangeError(f"grid.min ({self.min!r}) must be < grid.max ({self.max!r})")
        if self.count > MAX_GRID_POINTS:
            raise RangeError(f"grid has {self.count} points; the limit is {MAX_GRID_POINTS}")

    @property
    def count(self) -> int:
        return int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1

    def points(self) -> np.ndarray:
        """Grid points from ``min`` up to and including ``max`` when it lies on the grid."""
        return self.min + self.step * np.arange(self.count)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    grid: GridSpec | None = None
    overrides: tuple = ()
    output: str = "out"
    jobs: int = 1
    seed: int = 0
    format: str = "csv"
    calibration: str = ""
    # not part of equality: where the file came from
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            hint = nearest(self.kind, KINDS)
            raise RangeError(f"unknown scenario kind {self.kind!r}" + (f"; did you mean {hint!r}?" if hint else ""))
        if self.format not in FORMATS:
            raise RangeError(f"format must be one of {', '.join(FORMATS)}, got {self.format!r}")
        if int(self.jobs) != self.jobs or self.jobs < 1:
            raise RangeError(f"jobs must be an integer >= 1, got {self.jobs!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise RangeError(f"seed must be an integer >= 0, got {self.seed!r}")
        object.__setattr__(self, "overrides", tuple(sorted(dict(self.overrides).items())))

    def with_options(self, *, output=None, jobs=None, format=None, overrides=()) -> "ScenarioConfig":
        """Copy with command-line options applied; overrides are ``(dotted, value)`` pairs."""
        merged = dict(self.overrides)
        merged.update(overrides)
        return ScenarioConfig(
            kind=self.kind, grid=self.grid, overrides=tuple(merged.items()),
            output=self.output if output is None else str(output),
            jobs=self.jobs if jobs is None else jobs,
            seed=self.seed, format=self.format if format is None else format,
            calibration=self.calibration, source=self.source,
        )

    def snapshot(self) -> dict:
        """Plain-data view for manifests."""
        return {
            "kind": self.kind,
            "grid": None if self.grid is None else {"min": self.grid.min, "max": self.grid.max, "step": self.grid.step},
            "overrides": {k: v for k, v in self.overrides},
            "output": self.output,
            "jobs": self.jobs,
            "seed": self.seed,
            "format": self.format,
            "calibration": self.calibration,
        }


def parse_override(text: str, line=None) -> tuple:
    """``section.key=value`` to a validated ``(dotted, value)`` pair."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value", line)
    dotted, raw = (s.strip() for s in text.split("=", 1))
    if "." not in dotted:
        hint = nearest(dotted, schema.all_keys()) or nearest(dotted, [k.split(".")[1] for k in schema.all_keys()])
        raise UnknownKeyError(f"override key {dotted!r} needs a section prefix"
                              + (f"; did you mean {hint!r}?" if hint else ""), line)
    section, key = dotted.split(".", 1)
    schema.check_key(section, key, line)
    return dotted, schema.parse_value(section, key, raw, line)


def _number(section, key, raw, line, kind=float):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as a number", line) from None
    if kind is int:
        if not math.isfinite(value) or value != int(value):
            raise RangeError(f"{section}.{key} must be an integer, got {raw!r}", line)
        return int(value)
    return value


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}", error_line(exc)) from None

    if not parser.has_section("scenario"):
        raise ConfigError(f"{source}: missing [scenario] section")

    scenario = {}
    grid = {}
    overrides = {}
    for section in parser.sections():
        line = locate(text, section)
        for key, raw in parser.items(section):
            kline = locate(text, section, key)
            if section == "scenario":
                if key != "kind" and key not in SCENARIO_DEFAULTS:
                    hint = nearest(key, ["kind", *SCENARIO_DEFAULTS])
                    raise UnknownKeyError(f"unknown key {key!r} in [scenario]"
                                          + (f"; did you mean {hint!r}?" if hint else ""), kline)
                scenario[key] = (raw.strip(), kline)
            elif section == "grid":
                if key not in ("min", "max", "step"):
                    hint = nearest(key, ["min", "max", "step"])
                    raise UnknownKeyError(f"unknown key {key!r} in [grid]"
                                          + (f"; did you mean {hint!r}?" if hint else ""), kline)
                grid[key] = _number("grid", key, raw, kline)
            elif section == "overrides":
                dotted, value = parse_override(f"{key}={raw}", kline)
                overrides[dotted] = value
            elif section in schema.SCHEMA:
                schema.check_key(section, key, kline)
                overrides[f"{section}.{key}"] = schema.parse_value(section, key, raw, kline)
            else:
                hint = nearest(section, ["scenario", "grid", "overrides", *schema.SCHEMA])
                raise UnknownKeyError(f"unknown section [{section}]" + (f"; did you mean [{hint}]?" if hint else ""),
                                      line)

    if "kind" not in scenario:
        raise ConfigError(f"{source}: [scenario] needs a 'kind' ({', '.join(KINDS)})", locate(text, "scenario"))
    kind = scenario["kind"][0]
    values = {}
    for key, default in SCENARIO_DEFAULTS.items():
        if key in scenario:
            raw, kline = scenario[key]
            values[key] = _number("scenario", key, raw, kline, int) if isinstance(default, int) else raw
        else:
            logger.info("default scenario.%s = %r", key, default)
            values[key] = default

    spec = None
    if grid or kind in GRID_KINDS:
        if kind not in GRID_KINDS:
            raise ConfigError(f"scenario kind {kind!r} takes no [grid]", locate(text, "grid"))
        for key, default in zip(("min", "max", "step"), GRID_DEFAULTS[kind]):
            if key not in grid:
                logger.info("default grid.%s = %r", key, default)
                grid[key] = default
        try:
            spec = GridSpec(grid["min"], grid["max"], grid["step"])
        except RangeError as exc:
            raise RangeError(str(exc), locate(text, "grid")) from None

    try:
        return ScenarioConfig(kind=kind, grid=spec, overrides=tuple(overrides.items()), source=source, **values)
    except RangeError as exc:
        raise RangeError(str(exc), scenario.get("kind", (None, None))[1]) from None


def load_config(path) -> ScenarioConfig:
    """Read, validate and default-fill a scenario file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror or exc}") from None
    return parse_config(text, str(p))


def dump_config(config: ScenarioConfig) -> str:
    """INI text that :func:`parse_config` turns back into an equal config."""
    lines = ["[scenario]", f"kind = {config.kind}"]
    for key in SCENARIO_DEFAULTS:
        lines.append(f"{key} = {getattr(config, key)}")
    if config.grid is not None:
        lines += ["", "[grid]", f"min = {config.grid.min!r}", f"max = {config.grid.max!r}",
                  f"step = {config.grid.step!r}"]
    if config.overrides:
        lines += ["", "[overrides]"]
        lines += [f"{k} = {schema.format_value(v)}" for k, v in config.overrides]
    return "\n".join(lines) + "\n"


def resolve_calibration(config: ScenarioConfig):
    """Calibration with the scenario overrides applied; every default is logged."""
    cal = schema.load_calibration(config.calibration or None)
    given = dict(config.overrides)
    for section, keys in cal.values.items():
        for key, value in keys.items():
            dotted = f"{section}.{key}"
            if dotted not in given:
                logger.info("default %s = %r (calibration %s)", dotted, value, cal.version)
    cal = cal.with_overrides(config.overrides)
    # build the derived objects once so that inconsistent combinations fail early
    params = cal.atom()
    try:
        cal.medium(params)
    except ValueError as exc:
        raise RangeError(f"medium: {exc}") from None
    cal.protocol()
    return cal
