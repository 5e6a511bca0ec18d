"""Command line: run one scenario, sweep a preset, list presets, validate a file.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness.config import ConfigError, SchedulerConfig, load_scenario_file
from .harness.experiment import format_table, run_experiment
from .harness.presets import PRESETS, get_preset
from .harness.runner import build
from .metrics import write_series_csv
from .schedulers import SCHEDULER_NAMES

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stinsim", description="Multipath scheduler simulator for satellite-terrestrial networks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("scenario", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--scheduler", choices=SCHEDULER_NAMES)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--series", action="store_true", help="also write per-subflow srtt, cwnd, sigma and inflight CSVs")

    sweep = sub.add_parser("sweep", help="run every cell of a preset")
    sweep.add_argument("preset")
    sweep.add_argument("--seeds", type=int, help="number of seeds (1..N) instead of the preset's list")
    sweep.add_argument("--scheduler", action="append", choices=SCHEDULER_NAMES,
                       help="restrict to these schedulers (repeatable)")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out", type=Path)

    sub.add_parser("presets", help="list preset names")

    val = sub.add_parser("validate", help="check a scenario file and echo it with defaults")
    val.add_argument("scenario", type=Path)
    return p


def _load(path: Path):
    try:
        return load_scenario_file(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def cmd_run(args) -> int:
    cfg = _load(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_changes(seed=args.seed)
    if args.scheduler:
        cfg = cfg.with_changes(scheduler=SchedulerConfig(**{**cfg.scheduler.__dict__, "name": args.scheduler}))
    sim = build(cfg)
    if args.series:
        sim.conn.config.series_interval = 10_000
    metrics = sim.run()
    args.out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.scenario.stem}__{cfg.scheduler.name}__seed{cfg.seed}"
    out = args.out / f"{stem}.json"
    out.write_text(metrics.to_json())
    if args.series:
        for key, series in sorted(sim.conn.series.items()):
            write_series_csv(series, args.out / f"{stem}__{key.replace('.', '_')}.csv")
    state = "completed" if metrics.completed else "did not complete"
    print(f"{cfg.scheduler.name} seed {cfg.seed}: {state} in {metrics.completion_time:.3f} s, "
          f"{metrics.avg_throughput:.3f} MB/s, {metrics.retrans_total} retransmissions -> {out}")
    return EXIT_OK if metrics.completed else EXIT_RUNTIME


def cmd_sweep(args) -> int:
    try:
        preset = get_preset(args.preset)
    except KeyError as exc:
        print(f"stinsim: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    seeds = range(1, args.seeds + 1) if args.seeds else None
    out = args.out or Path("results") / preset.name
    result = run_experiment(preset, seeds=seeds, schedulers=args.scheduler, jobs=args.jobs, out_dir=out)
    print(f"{preset.name}: {preset.description}")
    print(format_table(result.summary()))
    print(f"per-run JSON and table CSV in {out}")
    for r in result.failures():
        print(f"failed: {r.variant} {r.scheduler} seed {r.seed}: {r.error}", file=sys.stderr)
    return EXIT_RUNTIME if result.failures() else EXIT_OK


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        p = PRESETS[name]
        cells = len(p.variants) * len(p.schedulers)
        print(f"{name:<12} {cells:>3} cells x {len(p.seeds)} seeds  {p.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args.scenario)
    print(cfg.dump(), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "presets": cmd_presets, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"stinsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a simulator failure
        print(f"stinsim: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
