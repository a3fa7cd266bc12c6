"""Command-line front end.

    bsense run <config> [--seed 0-9] [--out DIR]
    bsense sweep <config> --axis protocol.trim_fraction=0,0.25 [--out DIR]
    bsense figs <family> <config> [--out DIR]
    bsense validate <config>

Exit codes: 0 success, 2 configuration error, 3 failed trend check.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from bsense.errors import ConfigError
from bsense.harness.config import load_config, parse_axis
from bsense.harness.figures import FIGURES, write_figure
from bsense.harness.runner import run_scenario, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsense", description="Byzantine-resilient spectrum sensing experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML scenario file")
        sp.add_argument("--seed", help="seed, list or range such as 0-99 (overrides the file and $BSENSE_SEED)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key; repeatable")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    common(sub.add_parser("run", help="run every seed and write <out>/<scenario>/run.csv"))
    sw = sub.add_parser("sweep", help="sweep one or more keys and write <out>/<scenario>/sweep.csv")
    common(sw)
    sw.add_argument("--axis", action="append", required=True, metavar="SECTION.KEY=V1,V2,...")
    fg = sub.add_parser("figs", help="produce a figure family as CSV + SVG")
    fg.add_argument("family", choices=sorted(FIGURES))
    common(fg)
    va = sub.add_parser("validate", help="check a config file and report every problem")
    va.add_argument("config")
    va.add_argument("--seed")
    va.add_argument("--set", action="append", default=[])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.set)
        if args.command == "sweep":
            cfg = dataclasses.replace(cfg, sweep=tuple(parse_axis(a) for a in args.axis))
            # surface out-of-range sweep values as config errors before running anything
            for point in cfg.sweep_points():
                cfg.sensing_params(point), cfg.protocol_config(point), cfg.adversary_config(point)
    except ConfigError as exc:
        for k, v in sorted(exc.errors.items()):
            print(f"config error: {k}: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"ok: scenario {cfg.name!r}, {len(cfg.seeds)} seeds, {len(cfg.sweep_points())} sweep point(s)")
        return EXIT_OK

    out = Path(args.out)
    if args.command in ("run", "sweep"):
        rows = run_scenario(cfg, jobs=args.jobs)
        path = write_csv(rows, out / cfg.name / f"{args.command}.csv")
        print(path)
        return EXIT_OK

    try:
        fig = FIGURES[args.family](cfg)
    except ConfigError as exc:
        for k, v in sorted(exc.errors.items()):
            print(f"config error: {k}: {v}", file=sys.stderr)
        return EXIT_CONFIG
    paths = write_figure(fig, out, cfg.name)
    for c in fig.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  [{c.detail}]")
    print(paths["csv"])
    return EXIT_OK if fig.ok else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
