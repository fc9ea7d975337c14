"""Protocol variants and canned experiment definitions.

Each experiment has a full profile and a cheaper desk profile; both sweep one
scenario knob across a set of protocol variants.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import ScenarioConfig


@dataclass(frozen=True)
class VariantSpec:
    name: str
    termination: str
    coding: str
    coded_redundancy: bool
    pruning: str
    rad_max: float | None = None  # None: take the scenario's value
    extra: tuple[tuple[str, float], ...] = ()  # further per-variant settings

    def apply(self, config: ScenarioConfig) -> ScenarioConfig:
        changes = {
            "termination": self.termination,
            "coding": self.coding,
            "coded_redundancy": self.coded_redundancy,
            "pruning": self.pruning,
        }
        if self.rad_max is not None:
            changes["rad_max"] = self.rad_max
        changes.update(self.extra)
        return config.replace(**changes)


VARIANTS: dict[str, VariantSpec] = {
    v.name: v
    for v in [
        # full protocol: bitmap termination, lightweight detection, gratis
        # packets, pruning against every known previous hop
        VariantSpec("nobcr", "mcu", "lightweight", True, "multiprev", 0.4),
        VariantSpec("nobcr-nocr", "mcu", "lightweight", False, "multiprev", 0.4),
        VariantSpec("nobcr-table", "mcu", "table", True, "multiprev", 0.4),
        # coding with per-neighbour reception tables over classic pruning;
        # runs with the longer decode buffer usually paired with such tables
        VariantSpec("codeb", "mu", "table", False, "pdp", 0.4,
                    extra=(("pool_lifetime", 5.0),)),
        # plain pruned flooding baselines, no assessment delay
        VariantSpec("pdp-mu", "mu", "none", False, "pdp", 0.0),
        VariantSpec("pdp-cu", "cu", "none", False, "pdp", 0.0),
        VariantSpec("pdp-ru", "ru", "none", False, "pdp", 0.0),
        # delay-tolerant baselines whose RAD comes from the scenario sweep
        VariantSpec("pdp-cu-rad", "cu", "none", False, "pdp", None),
        VariantSpec("pdp-mcu", "mcu", "none", False, "pdp", None),
    ]
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: dict
    desk: dict  # overrides applied on top of base for desk runs
    sweep: tuple[tuple[str, dict], ...]  # (label, config overrides)
    desk_sweep: tuple[tuple[str, dict], ...]
    variants: tuple[str, ...]
    seeds: tuple[int, ...] = tuple(range(1, 21))
    desk_seeds: tuple[int, ...] = tuple(range(1, 11))

    def profile(self, desk: bool) -> tuple[dict, tuple[tuple[str, dict], ...], tuple[int, ...]]:
        if desk:
            return {**self.base, **self.desk}, self.desk_sweep, self.desk_seeds
        return self.base, self.sweep, self.seeds


def _sources_sweep(values) -> tuple[tuple[str, dict], ...]:
    return tuple((str(v), {"n_sources": v}) for v in values)


_FULL = {
    "n_nodes": 100,
    "area_side": 1000,
    "sim_duration": 300,
    "n_sources": 20,
    "pkt_rate": 1.0,
    "speed_max": 10.0,
    "speed_min": 0.1,
    "pause_time": 1.0,
}

_DESK = {
    "n_nodes": 60,
    "area_side": 886,
    "sim_duration": 120,
    "n_sources": 20,
    "pkt_rate": 2.0,
    "speed_max": 0.0,
    "speed_min": 0.0,
    "pause_time": 0.0,
}


PRESETS: dict[str, ExperimentSpec] = {
    spec.name: spec
    for spec in [
        ExperimentSpec(
            name="sparse-sources",
            base={**_FULL, "area_side": 1400},
            desk=dict(_DESK),
            sweep=_sources_sweep([10, 20, 30, 40, 50]),
            desk_sweep=_sources_sweep([10, 20, 30]),
            variants=("nobcr", "codeb", "pdp-cu", "pdp-mu"),
        ),
        ExperimentSpec(
            name="dense-sources",
            base={**_FULL, "area_side": 900},
            desk={**_DESK, "area_side": 750},
            sweep=_sources_sweep([10, 20, 30, 40, 50]),
            desk_sweep=_sources_sweep([10, 20, 30]),
            variants=("nobcr", "codeb", "pdp-cu", "pdp-mu"),
        ),
        ExperimentSpec(
            name="scalability",
            base={**_FULL, "n_sources": 20},
            desk={**_DESK, "n_sources": 15},
            sweep=(
                ("50", {"n_nodes": 50, "area_side": 990}),
                ("100", {"n_nodes": 100, "area_side": 1400}),
                ("150", {"n_nodes": 150, "area_side": 1715}),
                ("200", {"n_nodes": 200, "area_side": 1980}),
            ),
            desk_sweep=(
                ("40", {"n_nodes": 40, "area_side": 723}),
                ("60", {"n_nodes": 60, "area_side": 886}),
                ("80", {"n_nodes": 80, "area_side": 1023}),
            ),
            variants=("nobcr", "codeb", "pdp-cu"),
        ),
        ExperimentSpec(
            name="rad-sweep",
            base={**_FULL, "n_sources": 20},
            # reordering needs successive packets to land inside the assessment
            # window, so the desk profile runs hot: 4 pkt/s puts the 0.25 s
            # inter-packet gap under the default 0.4 s rad_max
            desk={**_DESK, "pkt_rate": 4.0},
            sweep=tuple((str(v), {"rad_max": v}) for v in [0.0, 0.1, 0.2, 0.4, 0.8]),
            desk_sweep=tuple((str(v), {"rad_max": v}) for v in [0.0, 0.4]),
            variants=("pdp-cu-rad", "pdp-mcu"),
        ),
        ExperimentSpec(
            name="mobility",
            base={**_FULL, "n_sources": 20},
            desk={**_DESK, "n_sources": 15, "mobility_warmup": 50},
            sweep=tuple(
                (str(v), {"speed_max": float(v), "speed_min": 0.1 if v else 0.0})
                for v in [0, 5, 10, 20]
            ),
            desk_sweep=tuple(
                (str(v), {"speed_max": float(v), "speed_min": 0.1 if v else 0.0})
                for v in [0, 10]
            ),
            variants=("nobcr", "pdp-cu"),
        ),
        ExperimentSpec(
            name="storage",
            base={**_FULL, "sample_storage": True},
            # denser static layout: detector state is the object of study here,
            # so give the reception table a realistic neighbourhood to track
            desk={**_DESK, "area_side": 650, "n_sources": 10, "sample_storage": True},
            sweep=_sources_sweep([20]),
            desk_sweep=_sources_sweep([10]),
            variants=("nobcr", "nobcr-table"),
        ),
        ExperimentSpec(
            name="coding-compare",
            base={**_FULL, "speed_max": 0.0, "speed_min": 0.0, "pause_time": 0.0},
            desk=dict(_DESK),
            sweep=_sources_sweep([20, 40]),
            desk_sweep=_sources_sweep([20]),
            variants=("nobcr", "nobcr-table", "nobcr-nocr"),
        ),
    ]
}
