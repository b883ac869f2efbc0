"""Run configuration: a flat ``key = value`` file with three bracketed sections.

::

    [run]
    mass = 1.0
    ell = 2
    ...
    [grid]
    rstar_min = -40.0
    ...
    [initial_data]
    kind = momentarily_static_bump
    ...

Keys are exactly the field names of :class:`RunConfig`, :class:`GridSpec` and
:class:`InitialDataSpec`; unknown sections or keys are rejected.  Floats are
written with ``repr`` so that ``parse(dump(cfg)) == cfg`` holds exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from typing import Tuple

from oddgauge.evolve import DataKind, InitialDataSpec, System
from oddgauge.geometry import Background, DomainError
from oddgauge.grid import GridSpec
from oddgauge.harmonics import ModeIndex


class ConfigError(ValueError):
    """Malformed or inconsistent configuration text."""


@dataclass(frozen=True)
class RunConfig:
    mass: float = 1.0
    ell: int = 2
    m: int = 0
    system: str = "coupled"
    t_final: float = 100.0
    probes: Tuple[float, ...] = (6.0, 10.0, 20.0)
    energies: Tuple[float, ...] = (0.0625, 1.0)
    energy_stride: int = 10
    monitor_window: Tuple[float, ...] = ()
    snapshot_stride: int = 0
    outputs: str = "out"
    deterministic: bool = True
    grid: GridSpec = field(default_factory=GridSpec)
    initial_data: InitialDataSpec = field(default_factory=InitialDataSpec)

    def __post_init__(self):
        try:
            System(self.system)
            ModeIndex(self.ell, self.m)
            Background(self.mass)
        except (ValueError, DomainError) as err:
            raise ConfigError(str(err)) from None
        if not self.deterministic:
            raise ConfigError("deterministic must be true: runs are seedless by construction")
        if self.energy_stride < 1 or self.snapshot_stride < 0:
            raise ConfigError("energy_stride must be >= 1 and snapshot_stride >= 0")
        if len(self.monitor_window) not in (0, 2):
            raise ConfigError("monitor_window takes two r* values (or is left empty)")
        if any(not 0 <= p <= 2 for p in self.energies):
            raise ConfigError("energy exponents must lie in [0, 2]")

    @property
    def mode(self) -> ModeIndex:
        return ModeIndex(self.ell, self.m)

    @property
    def background(self) -> Background:
        return Background(self.mass)


_RUN_KEYS = [f.name for f in fields(RunConfig) if f.name not in ("grid", "initial_data")]
_SECTIONS = {
    "run": (RunConfig, _RUN_KEYS),
    "grid": (GridSpec, [f.name for f in fields(GridSpec)]),
    "initial_data": (InitialDataSpec, [f.name for f in fields(InitialDataSpec)]),
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(float(v)) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _convert(kind, raw: str, key: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _kind(cls, name):
    default = getattr(cls(), name) if cls is not RunConfig else getattr(RunConfig(), name)
    if isinstance(default, bool):
        return bool
    if isinstance(default, int) and not isinstance(default, bool):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return "floats"
    return str


def parse(text: str) -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` on any problem."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err).splitlines()[0]) from None
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls, keys = _SECTIONS[section]
        out = {}
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            out[key] = _convert(_kind(cls, key), raw, f"{section}.{key}")
        values[section] = out
    try:
        grid = GridSpec(**values.get("grid", {}))
        init = InitialDataSpec(**values.get("initial_data", {}))
        return RunConfig(grid=grid, initial_data=init, **values.get("run", {}))
    except (DomainError, ValueError, TypeError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None


def dump(cfg: RunConfig) -> str:
    """Canonical text form (LF line endings, fixed key order)."""
    lines = ["[run]"]
    for key in _RUN_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    for section, obj in (("grid", cfg.grid), ("initial_data", cfg.initial_data)):
        lines.append("")
        lines.append(f"[{section}]")
        for key in _SECTIONS[section][1]:
            lines.append(f"{key} = {_fmt(getattr(obj, key))}")
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


__all__ = ["ConfigError", "RunConfig", "parse", "dump", "load", "DataKind", "asdict"]
