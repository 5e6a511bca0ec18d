"""Seed sweeps over a preset: one isolated simulation per (variant, scheduler, seed)."""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from ..metrics import RunMetrics
from .presets import ExperimentPreset
from .runner import run_scenario


@dataclass
class RunRecord:
    variant: str
    scheduler: str
    seed: int
    metrics: RunMetrics | None = None
    error: str | None = None


@dataclass
class CellSummary:
    variant: str
    scheduler: str
    runs: int
    failures: int
    completion_median: float
    completion_iqr: float
    throughput_median: float
    throughput_iqr: float
    satellite_fraction_median: float
    retrans_median: float
    handover_retrans_total: int
    retrans_total: int

    def row(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    preset: str
    records: list[RunRecord] = field(default_factory=list)

    def metrics(self, variant: str, scheduler: str) -> list[RunMetrics]:
        return [r.metrics for r in self.records
                if r.variant == variant and r.scheduler == scheduler and r.metrics is not None]

    def failures(self) -> list[RunRecord]:
        return [r for r in self.records if r.error is not None]

    def summary(self) -> list[CellSummary]:
        keys = sorted({(r.variant, r.scheduler) for r in self.records})
        return [summarize_cell(v, s, [r for r in self.records if (r.variant, r.scheduler) == (v, s)])
                for v, s in keys]


def iqr(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    q1, _, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q3 - q1


def _median(values: Sequence[float]) -> float:
    return statistics.median(values) if values else float("nan")


def summarize_cell(variant: str, scheduler: str, records: Sequence[RunRecord]) -> CellSummary:
    ok = [r.metrics for r in records if r.metrics is not None]
    done = [m for m in ok if m.completed]
    times = [m.completion_time for m in ok]
    tput = [m.avg_throughput for m in done]
    sat = [m.satellite_fraction() for m in ok]
    return CellSummary(
        variant=variant,
        scheduler=scheduler,
        runs=len(records),
        failures=len(records) - len(done),
        completion_median=_median(times),
        completion_iqr=iqr(times),
        throughput_median=_median(tput),
        throughput_iqr=iqr(tput),
        satellite_fraction_median=_median(sat),
        retrans_median=_median([m.retrans_total for m in ok]),
        handover_retrans_total=sum(m.retrans_handover for m in ok),
        retrans_total=sum(m.retrans_total for m in ok),
    )


def _run_one(job: tuple[ExperimentPreset, str, str, int]) -> RunRecord:
    preset, variant, scheduler, seed = job
    try:
        m = run_scenario(preset.scenario(variant, scheduler, seed))
    except Exception as exc:  # recorded per cell, the sweep goes on
        return RunRecord(variant, scheduler, seed, error=f"{type(exc).__name__}: {exc}")
    return RunRecord(variant, scheduler, seed, metrics=m)


def run_experiment(preset: ExperimentPreset, *, seeds: Sequence[int] | None = None,
                   schedulers: Sequence[str] | None = None, variants: Sequence[str] | None = None,
                   jobs: int = 1, out_dir: str | Path | None = None) -> ExperimentResult:
    seeds = tuple(seeds) if seeds is not None else preset.seeds
    wanted = set(schedulers) if schedulers is not None else None
    labels = set(variants) if variants is not None else None
    jobs_list = [
        (preset, v, s, seed)
        for v, s in preset.cells()
        if (wanted is None or s in wanted) and (labels is None or v in labels)
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, jobs_list))
    else:
        records = [_run_one(j) for j in jobs_list]
    records.sort(key=lambda r: (r.variant, r.scheduler, r.seed))
    result = ExperimentResult(preset.name, records)
    if out_dir is not None:
        write_results(result, out_dir)
    return result


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-." else "_" for c in text)


def write_results(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    for r in result.records:
        name = f"{_slug(r.variant)}__{r.scheduler}__seed{r.seed}.json"
        if r.metrics is not None:
            (runs / name).write_text(r.metrics.to_json())
        else:
            (runs / name).write_text(json.dumps({"error": r.error, "variant": r.variant,
                                                 "scheduler": r.scheduler, "seed": r.seed}))
    table = out / f"{_slug(result.preset)}.csv"
    rows = [s.row() for s in result.summary()]
    with open(table, "w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return table


def format_table(summary: Sequence[CellSummary]) -> str:
    header = f"{'cell':<22} {'sched':<7} {'completion s':>16} {'MB/s':>14} {'sat frac':>8} {'retx':>6} {'ho/total':>12} {'fail':>4}"
    lines = [header, "-" * len(header)]
    for c in summary:
        lines.append(
            f"{c.variant:<22} {c.scheduler:<7} "
            f"{c.completion_median:>8.3f} ±{c.completion_iqr:>6.3f} "
            f"{c.throughput_median:>6.3f} ±{c.throughput_iqr:>5.3f} "
            f"{c.satellite_fraction_median:>8.3f} {c.retrans_median:>6.0f} "
            f"{c.handover_retrans_total:>5}/{c.retrans_total:<6} {c.failures:>4}"
        )
    return "\n".join(lines)
