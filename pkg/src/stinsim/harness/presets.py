"""Named experiment presets.

Every preset runs at desk scale (scale_factor 10: 10/5 Mbps links, file
sizes divided by ten) with ten seeds per cell unless overridden.  The
satellite path's RTT ramps from 52 to 68 ms and resets at each handover,
which happens every 15 simulated seconds starting 2 s into the run so that
even the shortest transfer crosses one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import (HandoverConfig, PathConfig, RttConfig, ScenarioConfig, SchedulerConfig)
from ..schedulers import SCHEDULER_NAMES

PRESET_VERSION = 1
DEFAULT_SEEDS = tuple(range(1, 11))
ALL_SCHEDULERS = ("minrtt", "rr", "ecf", "blest", "alcs")
assert set(ALL_SCHEDULERS) == set(SCHEDULER_NAMES)

HANDOVER_EVERY_S = 15.0
HANDOVER_FIRST_S = 2.0
HANDOVER_DURATION_S = 0.8


@dataclass(frozen=True)
class Variant:
    label: str
    config: ScenarioConfig


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    variants: tuple[Variant, ...]
    schedulers: tuple[str, ...] = ALL_SCHEDULERS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    version: int = PRESET_VERSION

    def cells(self):
        for v in self.variants:
            for name in self.schedulers:
                yield v.label, name

    def scenario(self, label: str, scheduler: str, seed: int) -> ScenarioConfig:
        for v in self.variants:
            if v.label == label:
                cfg = v.config
                return cfg.with_changes(
                    seed=seed,
                    scheduler=SchedulerConfig(**{**cfg.scheduler.__dict__, "name": scheduler}),
                    name=f"{self.name}/{label}/{scheduler}",
                )
        raise KeyError(label)


def satellite_path(pid: str = "sat", loss_rate: float = 0.0001, handovers: int = 20,
                   first_s: float = HANDOVER_FIRST_S, every_s: float = HANDOVER_EVERY_S) -> PathConfig:
    ho = None
    if handovers:
        ho = HandoverConfig(first_s=first_s, every_s=every_s, count=handovers,
                            duration_s=HANDOVER_DURATION_S)
    # the ramp restarts when a handover moves the link to a fresh satellite
    phase = (every_s - first_s % every_s) % every_s
    return PathConfig(
        id=pid, kind="satellite", bandwidth_mbps=50.0, loss_rate=loss_rate,
        rtt=RttConfig(shape="sawtooth", min_ms=52.0, max_ms=68.0, period_s=every_s, phase_s=phase),
        handovers=ho,
    )


def terrestrial_path(pid: str = "terr") -> PathConfig:
    return PathConfig(id=pid, kind="terrestrial", bandwidth_mbps=100.0, loss_rate=0.0001,
                      rtt=RttConfig(shape="constant", min_ms=108.0, max_ms=108.0))


def stin(file_size_mb: float, sat_loss: float = 0.0001, handovers: int = 20,
         name: str = "stin", **sat_kw) -> ScenarioConfig:
    return ScenarioConfig(
        file_size_mb=file_size_mb,
        paths=[satellite_path(loss_rate=sat_loss, handovers=handovers, **sat_kw), terrestrial_path()],
        name=name,
    )


def multi_stin(subflows: int, file_size_mb: float, sat_loss: float) -> ScenarioConfig:
    """``subflows/2`` satellite paths with staggered handovers plus as many terrestrial paths."""
    half = subflows // 2
    sats = [
        satellite_path(f"sat{j}", loss_rate=sat_loss, first_s=HANDOVER_FIRST_S + j * HANDOVER_EVERY_S / half)
        for j in range(half)
    ]
    terrs = [terrestrial_path(f"terr{j}") for j in range(half)]
    return ScenarioConfig(file_size_mb=file_size_mb, paths=sats + terrs, name=f"subflows-{subflows}")


def _loss_label(rate: float) -> str:
    return f"{rate * 100:g}%"


def _build_presets() -> dict[str, ExperimentPreset]:
    presets = [
        ExperimentPreset(
            "stin-basic",
            "1 satellite + 1 terrestrial path, 40 MB, satellite loss 0.01%",
            (Variant("40MB", stin(40)),),
        ),
        ExperimentPreset(
            "handover",
            "retransmission causes with 6 disconnect handovers (every 3 s from 2 s), 200 MB",
            (Variant("6-handovers", stin(200, handovers=6, every_s=3.0)),),
        ),
        ExperimentPreset(
            "no-handover",
            "heterogeneous paths without handovers, 100 MB",
            (Variant("100MB", stin(100, handovers=0)),),
        ),
        ExperimentPreset(
            "table3",
            "3 file sizes x 2 satellite loss rates x 5 schedulers",
            tuple(
                Variant(f"{size}MB/{_loss_label(loss)}", stin(size, sat_loss=loss))
                for size in (40, 100, 150)
                for loss in (0.0001, 0.005)
            ),
        ),
        ExperimentPreset(
            "loss-shift",
            "satellite byte fraction at satellite loss 0.01% vs 0.5%, 40 MB",
            tuple(Variant(_loss_label(loss), stin(40, sat_loss=loss)) for loss in (0.0001, 0.005)),
        ),
        ExperimentPreset(
            "subflows",
            "2/4/6 subflows (half satellite), 150 MB, satellite loss 0.5%",
            tuple(Variant(f"{n}-subflows", multi_stin(n, 150, 0.005)) for n in (2, 4, 6)),
        ),
    ]
    return {p.name: p for p in presets}


PRESETS = _build_presets()


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None
