"""Run configuration files.

A configuration is a TOML document with two optional top-level keys and
six optional sections::

    seed = 7                 # optional; CLI --seed and NOTRADE_SEED also apply
    output_dir = "out"

    [market]                 # MarketModel fields
    kind = "BlackScholes"
    mu = 0.08
    sigma = 0.2

    [spread]                 # SpreadModel fields
    mode = "ProportionalConstant"
    eta0 = 0.01

    [preferences]            # Preferences fields
    family = "Power"
    gamma = 5.0

    [grid]                   # horizon, n_steps, n_paths
    n_steps = 1000
    n_paths = 10000

    [experiment]             # ExperimentSection fields
    eps_grid = [0.0025, 0.005, 0.01, 0.02]

    [tolerances]             # overrides of experiments.DEFAULT_TOLERANCES
    ce_loss = 0.25

Omitted keys take their defaults. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import sys
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .experiments import DEFAULT_TOLERANCES, BaseConfig
from .market import MarketModel, PathGrid, SpreadModel
from .preferences import Preferences
from .simulator import SimOptions

__all__ = [
    "ConfigError",
    "GridSection",
    "ExperimentSection",
    "RunConfig",
    "load_config",
    "parse_config",
    "dump_config",
]


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class GridSection:
    horizon: float = 1.0
    n_steps: int = 1000
    n_paths: int = 10000


@dataclass(frozen=True)
class ExperimentSection:
    """Experiment settings shared by the subcommands.

    ``target_kind`` and ``target_value`` select the mean-variance frontier
    point; the remaining simulator fields mirror :class:`SimOptions`.
    """

    x0: float = 1.0
    eps_grid: tuple[float, ...] = (0.0025, 0.005, 0.01, 0.02)
    common_random_numbers: bool = True
    target_kind: str = "mean"
    target_value: float = 1.5
    liquidate_at_T: bool = True
    charge_initial_trade: bool = True
    initial_position: str = "midpoint"
    overshoot: float = 0.0
    control_variate: bool = True
    band: str = "auto"
    trace_paths: int = 0
    max_bankruptcy_rate: float = 1e-3
    block_paths: int = 0

    def options(self) -> SimOptions:
        return SimOptions(
            liquidate_at_T=self.liquidate_at_T,
            charge_initial_trade=self.charge_initial_trade,
            initial_position=self.initial_position,
            overshoot=self.overshoot,
            control_variate=self.control_variate,
            band=self.band,
            trace_paths=self.trace_paths,
            max_bankruptcy_rate=self.max_bankruptcy_rate,
        )


_SECTIONS = {
    "market": MarketModel,
    "spread": SpreadModel,
    "preferences": Preferences,
    "grid": GridSection,
    "experiment": ExperimentSection,
}


@dataclass(frozen=True)
class RunConfig:
    market: MarketModel = field(default_factory=MarketModel)
    spread: SpreadModel = field(default_factory=SpreadModel)
    preferences: Preferences = field(default_factory=lambda: Preferences.power(5.0))
    grid: GridSection = field(default_factory=GridSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    tolerances: dict[str, float] = field(default_factory=dict)
    output_dir: str = "."
    seed: int | None = None

    def path_grid(self, seed: int) -> PathGrid:
        g = self.grid
        return PathGrid(g.horizon, g.n_steps, g.n_paths, seed)

    def base_config(self, seed: int) -> BaseConfig:
        return BaseConfig(
            self.market, self.preferences, self.spread, self.path_grid(seed), self.experiment.x0, self.experiment.options()
        )

    def resolved_tolerances(self) -> dict[str, float]:
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        return tol

    def to_dict(self) -> dict:
        out: dict = {}
        if self.seed is not None:
            out["seed"] = self.seed
        out["output_dir"] = self.output_dir
        for name in _SECTIONS:
            out[name] = _section_dict(getattr(self, name))
        out["tolerances"] = dict(self.tolerances)
        return out


def _section_dict(obj) -> dict:
    d = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if v is None:
            continue
        if hasattr(v, "value"):
            v = v.value
        elif isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return d


def _base_type(tp):
    """Strip ``X | None`` to ``X``."""
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0]
    return tp


def _coerce(section: str, key: str, tp, value):
    where = f"[{section}].{key}"
    tp = _base_type(tp)
    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return tuple(_coerce(section, key, float, v) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    # enums and plain strings
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build_section(name: str, cls, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"[{name}]: unknown key(s) {', '.join(unknown)}")
    kw = {k: _coerce(name, k, hints[k], v) for k, v in raw.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded TOML document and build a :class:`RunConfig`."""
    allowed = set(_SECTIONS) | {"tolerances", "output_dir", "seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kw: dict = {}
    defaults = RunConfig()
    for name, cls in _SECTIONS.items():
        if name in data:
            raw = data[name]
            if name == "preferences" and isinstance(raw, dict) and "gamma" not in raw:
                # a Power section without gamma keeps the default risk aversion
                if raw.get("family", "Power") == "Power":
                    raw = {**raw, "gamma": defaults.preferences.gamma}
            kw[name] = _build_section(name, cls, raw)
    if "tolerances" in data:
        tol = data["tolerances"]
        if not isinstance(tol, dict):
            raise ConfigError("[tolerances] must be a table")
        bad = sorted(set(tol) - set(DEFAULT_TOLERANCES))
        if bad:
            raise ConfigError(f"[tolerances]: unknown key(s) {', '.join(bad)}")
        kw["tolerances"] = {k: _coerce("tolerances", k, float, v) for k, v in tol.items()}
    if "output_dir" in data:
        kw["output_dir"] = _coerce("", "output_dir", str, data["output_dir"])
    if "seed" in data:
        seed = _coerce("", "seed", int, data["seed"])
        if not 0 <= seed < 2**63:
            raise ConfigError(f"seed must lie in [0, 2**63), got {seed}")
        kw["seed"] = seed
    return RunConfig(**kw)


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a configuration file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror or exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    """Serialize to TOML; ``parse_config(tomllib.loads(dump_config(c))) == c``."""
    return tomli_w.dumps(cfg.to_dict())
