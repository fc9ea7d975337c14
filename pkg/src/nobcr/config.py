"""Scenario configuration: validated parameters plus variant switches.

Configs load from flat ``key = value`` text files (``#`` comments allowed).
Unknown keys are an error rather than silently ignored, so typos in sweep
scripts fail fast.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


class Termination(str, Enum):
    MU = "MU"  # per-neighbour mark table, relay while some neighbour unmarked
    RU = "RU"  # single sequence number, updated on actual forwards only
    CU = "CU"  # single sequence number, updated on every larger reception
    MCU = "MCU"  # sliding window bitmap per source


class Coding(str, Enum):
    NONE = "none"
    LIGHTWEIGHT = "lightweight"  # previous-hop neighbourhoods estimate receivers
    TABLE = "table"  # per-neighbour reception tables from overheard traffic


class Pruning(str, Enum):
    PDP = "pdp"  # single previous hop
    MULTIPREV = "multiprev"  # all recorded previous hops


@dataclass
class ScenarioConfig:
    # topology / radio
    n_nodes: int
    area_side: float  # square deployment area, metres
    sim_duration: float
    n_sources: int
    tx_range: float = 250.0
    bandwidth_bps: float = 2e6
    pkt_size: int = 256  # payload bytes per native packet
    collisions: bool = True
    mac_jitter: float = 0.02  # uniform channel-access delay per transmission

    # traffic
    pkt_rate: float = 1.0  # packets per second per source
    traffic_delay: float = 3.0  # quiet lead-in so hellos converge first
    traffic_cutoff: float = 5.0  # stop generating this long before the end

    # hello protocol
    hello_enabled: bool = True
    hello_interval: float = 1.0
    hello_expiry_factor: float = 2.0  # view entries expire after factor*interval
    preconverged_views: bool = False  # seed views from the true adjacency at t=0

    # protocol timers / windows
    rad_max: float = 0.4  # relay assessment delay, uniform in [0, rad_max]
    pool_lifetime: float = 2.0  # packet pool retention (B_T)
    mcu_window: int = 64  # bitmap width k
    mark_expiry: float = 5.0  # M/U neighbour mark retention
    table_expiry: float = 5.0  # reception table retention (R_T)

    # mobility (random waypoint; zero speed means a static run)
    speed_min: float = 0.0
    speed_max: float = 0.0
    pause_time: float = 0.0
    mobility_warmup: float = 100.0

    # variant switches
    termination: Termination = Termination.MCU
    coding: Coding = Coding.LIGHTWEIGHT
    coded_redundancy: bool = True
    pruning: Pruning = Pruning.MULTIPREV
    gratis_rule_off: bool = False  # debug: let gratis arrivals touch termination state
    blind_flood: bool = False  # sanity baseline: every node relays once

    # bookkeeping
    seed: int = 1
    sample_interval: float = 1.0
    sample_storage: bool = False  # periodic detector-storage sampling
    log_events: bool = False

    def __post_init__(self) -> None:
        self.termination = _coerce("termination", self.termination, Termination)
        self.coding = _coerce("coding", self.coding, Coding)
        self.pruning = _coerce("pruning", self.pruning, Pruning)
        self.validate()

    def validate(self) -> None:
        if self.n_nodes < 1:
            raise ConfigError("n_nodes must be >= 1")
        if self.n_sources < 0 or self.n_sources > self.n_nodes:
            raise ConfigError("n_sources must be in [0, n_nodes]")
        for name in ("area_side", "sim_duration", "tx_range", "bandwidth_bps", "pkt_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in (
            "pkt_size",
            "hello_interval",
            "hello_expiry_factor",
            "pool_lifetime",
            "mcu_window",
            "mark_expiry",
            "table_expiry",
            "sample_interval",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in (
            "rad_max",
            "mac_jitter",
            "speed_min",
            "pause_time",
            "mobility_warmup",
            "traffic_delay",
            "traffic_cutoff",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.speed_max < self.speed_min:
            raise ConfigError("speed_max must be >= speed_min")
        if self.speed_max > 0 and self.speed_min <= 0:
            raise ConfigError("speed_min must be positive when speed_max > 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key in _ENUM_FIELDS:
            out[key] = out[key].value
        return out

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ScenarioConfig":
        known = cls.field_names()
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        hints = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in mapping.items():
            kwargs[key] = _coerce(key, raw, hints[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:  # missing required keys
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_mapping(parse_kv_file(path))


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}

_INT_FIELDS = {"n_nodes", "n_sources", "pkt_size", "mcu_window", "seed"}
_BOOL_FIELDS = {
    "collisions", "hello_enabled", "preconverged_views", "coded_redundancy",
    "gratis_rule_off", "blind_flood", "sample_storage", "log_events",
}
_ENUM_FIELDS = {"termination": Termination, "coding": Coding, "pruning": Pruning}


def _coerce(key: str, raw: Any, hint: Any) -> Any:
    if key in _ENUM_FIELDS:
        enum_cls = _ENUM_FIELDS[key]
        if isinstance(raw, enum_cls):
            return raw
        try:
            return enum_cls(str(raw).strip())
        except ValueError:
            # accept enum names case-insensitively ("MCU", "mcu", "Lightweight")
            text = str(raw).strip()
            for member in enum_cls:
                if text.lower() in (member.value.lower(), member.name.lower()):
                    return member
            raise ConfigError(
                f"{key}: {raw!r} not one of {[m.value for m in enum_cls]}"
            ) from None
    if key in _BOOL_FIELDS:
        if isinstance(raw, bool):
            return raw
        word = str(raw).strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if key in _INT_FIELDS:
        try:
            return int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    try:
        return float(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    mapping: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in mapping:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping
