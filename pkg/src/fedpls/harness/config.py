"""Run configuration: nested dataclasses, INI round-trip, profiles, overrides.

File format is INI-style ``key = value`` text with one section per module::

    [run]          episodes, seed, agent, output_dir, smoothing_window, ...
    [channel]      FadingParams fields
    [environment]  EnvConfig fields
    [network]      hidden
    [dqn]          DqnConfig fields
    [reinforce]    ReinforceConfig fields
    [federation]   xi, mode, user_counts

Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..agents import DqnConfig, ReinforceConfig
from ..channel import FadingParams
from ..environment import EnvConfig
from ..errors import ConfigError, FedPlsError
from ..federation import FederationConfig

AGENT_KINDS = ("dqn", "reinforce")


@dataclass(frozen=True)
class RunSettings:
    episodes: int = 500
    seed: int = 0
    agent: str = "reinforce"
    output_dir: str = ""
    smoothing_window: int = 25
    repetitions: int = 5
    step_rows: bool = False

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ConfigError("run.episodes must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("run.repetitions must be >= 1")
        if self.smoothing_window < 1:
            raise ConfigError("run.smoothing_window must be >= 1")
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"run.agent must be one of {AGENT_KINDS}, got {self.agent!r}")
        if self.seed < 0:
            raise ConfigError("run.seed must be >= 0")


@dataclass(frozen=True)
class NetworkSettings:
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError("network.hidden sizes must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    channel: FadingParams = field(default_factory=FadingParams)
    environment: EnvConfig = field(default_factory=EnvConfig)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    reinforce: ReinforceConfig = field(default_factory=ReinforceConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)

    def __post_init__(self) -> None:
        counts = self.federation.user_counts
        env = self.environment
        if counts and (len(counts) != env.cell_count or any(c != env.users_per_cell for c in counts)):
            raise ConfigError(
                "federation.user_counts must list users_per_cell once per cell (every cell serves the same L)"
            )

    def replace(self, **overrides: Any) -> "RunConfig":
        """Override dotted keys, e.g. ``replace(**{"federation.xi": 10})``."""
        return apply_overrides(self, overrides)

    @property
    def user_counts(self) -> tuple[int, ...]:
        env = self.environment
        return self.federation.user_counts or (env.users_per_cell,) * env.cell_count


SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig))

_DESK = {
    "environment.cell_count": 4,
    "environment.users_per_cell": 2,
    "environment.eta": 4,
    "environment.slots_per_episode": 50,
    "run.episodes": 500,
    "run.repetitions": 5,
    # plain SGD at 1e-3 shows no learning within 500 episodes at this scale
    "reinforce.lr": 0.1,
    "dqn.lr": 0.03,
}

PROFILES: dict[str, dict[str, Any]] = {"paper": {}, "desk": _DESK}


def profile(name: str) -> RunConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return apply_overrides(RunConfig(), PROFILES[name])


def _coerce(raw: Any, default: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {type(default).__name__}") from exc
    return text


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    grouped: dict[str, dict[str, Any]] = {}
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(config, section)
        names = {f.name for f in dataclasses.fields(current)}
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in section [{section}]; valid keys: {sorted(names)}")
        grouped.setdefault(section, {})[key] = _coerce(value, getattr(current, key), dotted)
    try:
        sections = {s: dataclasses.replace(getattr(config, s), **kv) for s, kv in grouped.items()}
        return dataclasses.replace(config, **sections)
    except ConfigError:
        raise
    except (FedPlsError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def to_ini(config: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(config, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_ini(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    overrides = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            overrides[f"{section}.{key}"] = value
    return apply_overrides(base or RunConfig(), overrides)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_ini(text, base)


def parse_assignments(items: Iterable[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out
