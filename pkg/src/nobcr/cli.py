"""Command line entry points: batch runs, scripted scenarios, comparisons."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, ScenarioConfig
from .metrics import Metrics
from .presets import PRESETS, VARIANTS
from .scenario import ScriptError, load_script, run_scenario


def parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part]


def parse_sets(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_run(args) -> int:
    overrides = parse_sets(args.set)
    seeds = parse_seeds(args.seeds) if args.seeds else None
    if args.target in PRESETS:
        rows = harness.run_experiment(
            args.target,
            desk=args.desk,
            seeds=seeds,
            variants=args.variant or None,
            out_dir=args.out,
            jobs=args.jobs,
            overrides=overrides or None,
        )
        experiment = args.target
    else:
        path = Path(args.target)
        if not path.exists():
            print(f"error: {args.target!r} is neither a preset nor a config file", file=sys.stderr)
            print(f"presets: {', '.join(sorted(PRESETS))}", file=sys.stderr)
            return 2
        base = ScenarioConfig.from_file(path)
        cfg = {**base.to_mapping(), **overrides}
        names = args.variant or ["nobcr"]
        tasks = []
        for name in names:
            if name not in VARIANTS:
                print(f"error: unknown variant {name!r}", file=sys.stderr)
                return 2
            for seed in seeds or [base.seed]:
                tasks.append(
                    {
                        "experiment": path.stem,
                        "variant": name,
                        "sweep": "-",
                        "seed": seed,
                        "config": cfg,
                    }
                )
        rows = harness.run_tasks(tasks, jobs=args.jobs)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        harness.write_raw_csv(rows, out / f"{path.stem}_raw.csv")
        harness.write_agg_csv(harness.aggregate(rows), out / f"{path.stem}_agg.csv")
        experiment = path.stem
    print(f"{experiment}: {len(rows)} runs written to {args.out}/")
    for agg in harness.aggregate(rows):
        print(
            f"  {agg['variant']:<12s} sweep={agg['sweep']:<6s} "
            f"delivery={agg['delivery_ratio_mean']:.3f} "
            f"tx={agg['data_tx_mean']:.0f} "
            f"delay={agg['mean_delay_mean']*1000:.1f}ms"
        )
    return 0


def _print_script_result(metrics: Metrics, log, quiet: bool) -> None:
    if not quiet:
        for line in log.lines():
            print(line)
    print("-- delivered --")
    pids = sorted({pid for seen in metrics.delivered for pid in seen})
    for pid in pids:
        nodes = sorted(metrics.delivered_nodes(pid))
        print(f"  {pid}: {nodes}")
    s = metrics.summary()
    print(
        f"-- counters -- tx={s['data_tx']:.0f} encoded={s['encoded_tx']:.0f} "
        f"gratis_coded={s['encoded_tx_gratis']:.0f} decode_failures={s['decode_failures']:.0f}"
    )


def cmd_script(args) -> int:
    scenario = load_script(args.file)
    overrides = parse_sets(args.set)
    if overrides:
        scenario.config = ScenarioConfig.from_mapping(
            {**scenario.config.to_mapping(), **overrides}
        )
    metrics, log = run_scenario(scenario)
    _print_script_result(metrics, log, args.quiet)
    return 0


def cmd_report(args) -> int:
    base = harness.read_rows(args.baseline)
    cand = harness.read_rows(args.candidate)
    rows = harness.transmission_reduction(base, cand)
    print(f"transmission reduction, {args.candidate} vs {args.baseline}")
    for row in rows:
        pct = row["reduction_pct"]
        shown = "undefined" if pct != pct else f"{pct:6.1f}%"
        print(
            f"  sweep={row['sweep']:<6s} baseline={row['baseline_tx']:10.1f} "
            f"candidate={row['candidate_tx']:10.1f} saved={shown}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nobcr",
        description="Broadcast protocol simulator: batch experiments, scripted scenarios, comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset experiment or a config file")
    run.add_argument("target", help=f"preset ({', '.join(sorted(PRESETS))}) or config file")
    run.add_argument("--desk", action="store_true", help="small fast profile")
    run.add_argument("--seeds", help="seed list: 1..10 or 1,2,5")
    run.add_argument("--variant", action="append", help=f"one of {', '.join(sorted(VARIANTS))}")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", default="results")
    run.add_argument("--jobs", type=int, default=1)
    run.set_defaults(func=cmd_run)

    script = sub.add_parser("script", help="run a scripted scenario and print its event log")
    script.add_argument("file")
    script.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    script.add_argument("--quiet", action="store_true", help="suppress the event log")
    script.set_defaults(func=cmd_script)

    report = sub.add_parser("report", help="transmission savings between two raw CSVs")
    report.add_argument("baseline")
    report.add_argument("candidate")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScriptError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
