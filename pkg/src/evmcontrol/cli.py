"""Command-line interface.

Subcommands::

    evmcontrol simulate --project FILE --runs N --seed S --ev-levels L1,L2 --out DIR
    evmcontrol analyze  --project FILE --at T --ac C --ev E [--data DIR] [--out DIR]
    evmcontrol chart    --report FILE --out FILE.svg

Exit codes: 0 success, 1 validation problem, 2 I/O problem, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .charts import cmd_chart
from .errors import NumericsError, ProjectFormatError, ValidationError
from .pipeline import DEFAULT_EV_LEVELS, RunConfig, cmd_analyze, cmd_simulate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def _parse_levels(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ValidationError(f"cannot parse ev-levels {raw!r}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evmcontrol",
        description="Stochastic earned-value project control toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate the triad ensemble CSVs")
    sim.add_argument("--project", required=True, help="project JSON file")
    sim.add_argument("--runs", type=int, default=20000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--ev-levels", default=",".join(f"{l:g}" for l in DEFAULT_EV_LEVELS))
    sim.add_argument("--out", default="evmcontrol-out")

    ana = sub.add_parser("analyze", help="analyze an observed status (AT, AC, EV)")
    ana.add_argument("--project", required=True)
    ana.add_argument("--at", type=float, required=True, help="actual time")
    ana.add_argument("--ac", type=float, required=True, help="actual cost")
    ana.add_argument("--ev", type=float, required=True, help="earned value")
    ana.add_argument("--data", default=None, help="directory written by `simulate`")
    ana.add_argument("--runs", type=int, default=20000)
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--out", default="evmcontrol-out")
    ana.add_argument("--grid-resolution", type=int, default=60)

    cha = sub.add_parser("chart", help="render the control chart for a report")
    cha.add_argument("--report", required=True, help="report.json from `analyze`")
    cha.add_argument("--out", required=True, help="output SVG path")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            config = RunConfig(
                project=args.project,
                runs=args.runs,
                seed=args.seed,
                ev_levels=_parse_levels(args.ev_levels),
                out_dir=args.out,
            )
            manifest = cmd_simulate(config)
            print(f"wrote {len(manifest['files'])} triad file(s) to {config.out_dir}")
        elif args.command == "analyze":
            config = RunConfig(
                project=args.project,
                runs=args.runs,
                seed=args.seed,
                out_dir=args.out,
                grid_resolution=args.grid_resolution,
            )
            result = cmd_analyze(config, at=args.at, ac=args.ac, ev=args.ev,
                                 data_dir=args.data)
            print(json.dumps(result.report.to_dict(), indent=2))
            print(f"report written to {Path(config.out_dir) / 'report.json'}",
                  file=sys.stderr)
        elif args.command == "chart":
            out = cmd_chart(args.report, args.out)
            print(f"chart written to {out} (JSON twin alongside)")
    except (ValidationError, ProjectFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
