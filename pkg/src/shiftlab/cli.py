"""Command line entry point.

Exit codes: 0 success, 1 usage or config error, 2 run failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import glob
import sys

from shiftlab import config, runner, verify
from shiftlab.aggregate import AlignmentError, aggregate_files
from shiftlab.plot import PlotStyle, plot_files

EXIT_OK, EXIT_USAGE, EXIT_RUN, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _report(manifest: dict) -> int:
    for r in manifest["runs"]:
        extra = f" ({r['error']})" if r["error"] else ""
        print(f"{r['status']:6} {r['run_id']} -> {r['path']} [{r['seconds']:.1f}s]{extra}")
    return EXIT_RUN if manifest["failed"] else EXIT_OK


def cmd_run(args) -> int:
    cfg = config.load(args.config)
    return _report(runner.run_experiment(cfg, args.workers))


def cmd_sweep(args) -> int:
    code = EXIT_OK
    for cfg in config.expand_sweep(config.load(args.config)):
        code = max(code, _report(runner.run_experiment(cfg, args.workers)))
    return code


def cmd_aggregate(args) -> int:
    paths = sorted({p for pattern in args.inputs for p in glob.glob(pattern)})
    if not paths:
        print("aggregate: no files match", file=sys.stderr)
        return EXIT_USAGE
    bands = aggregate_files(paths, args.output)
    print(f"{len(bands)} series from {len(paths)} files -> {args.output}")
    return EXIT_OK


def cmd_plot(args) -> int:
    style = PlotStyle(width=args.width, height=args.height, title=args.title)
    plot_files(args.inputs, args.output, style, args.metric)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = config.load(args.config)
    if cfg.kind != "offline":
        print("gen-dataset: config kind must be 'offline'", file=sys.stderr)
        return EXIT_USAGE
    for path in runner.write_datasets(cfg):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_checks(args.only or None)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shiftlab", description="Reward-shifting experiments at desk scale.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run every (seed, shift) pair of a config")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None, help="parallel runs (default: $SHIFTLAB_THREADS or 1)")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run the cross product in the config's [sweep] table")
    sweep.add_argument("config")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.set_defaults(func=cmd_sweep)

    agg = sub.add_parser("aggregate", help="median and 25-75%% bands across seeds")
    agg.add_argument("inputs", nargs="+", help="run CSV files or glob patterns")
    agg.add_argument("-o", "--output", required=True)
    agg.set_defaults(func=cmd_aggregate)

    plot = sub.add_parser("plot", help="render aggregate CSVs to SVG")
    plot.add_argument("inputs", nargs="+")
    plot.add_argument("-o", "--output", required=True)
    plot.add_argument("--metric", default=None, help="plot only this metric")
    plot.add_argument("--title", default="")
    plot.add_argument("--width", type=int, default=640)
    plot.add_argument("--height", type=int, default=400)
    plot.set_defaults(func=cmd_plot)

    gen = sub.add_parser("gen-dataset", help="write the offline datasets of a config")
    gen.add_argument("config")
    gen.set_defaults(func=cmd_gen_dataset)

    ver = sub.add_parser("verify", help="run the exact property suite")
    ver.add_argument("--only", nargs="*", help="check names to run")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (config.ConfigError, AlignmentError, FileNotFoundError) as exc:
        print(f"shiftlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"shiftlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
