"""Command line entry point: ``run``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import GraphUnlearnError, IoError
from .graph import PERTURBATIONS

log = logging.getLogger("graph_unlearn")


def _levels(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="graph-unlearn", description="Graph unlearning experiments.")
    p.add_argument("--data-dir", default=None,
                   help="base directory for dataset paths (env GRAPH_UNLEARN_DATA when omitted)")
    p.add_argument("--out", default="results", help="root directory for per-run result folders")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config")

    sweep = sub.add_parser("sweep", help="run a request-ratio or noise sweep")
    sweep.add_argument("config")
    sweep.add_argument("--kind", choices=("ratio", "noise"), required=True)
    sweep.add_argument("--levels", type=_levels, nargs="+", required=True,
                       help="levels, space or comma separated")
    sweep.add_argument("--perturbation", choices=PERTURBATIONS, default="label_noise",
                       help="perturbation applied by a noise sweep")

    rep = sub.add_parser("report", help="summarize results.jsonl files under a directory")
    rep.add_argument("dir")
    return p


def _print_summary(reports, stream):
    for row in harness.summary_rows(reports):
        method, backbone, task, request, level, metric, value = row[:7]
        tag = f" level={level}" if level else ""
        print(f"{method:10s} {backbone:5s} {task:5s} {request:8s}{tag} {metric}={float(value):.4f}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            cfg = harness.load_config(args.config)
            report = harness.run_experiment(cfg, args.data_dir)
            out = harness.run_dir(args.out, cfg)
            harness.emit_report([report], out)
            _print_summary([report], sys.stdout)
            print(out)
        elif args.verb == "sweep":
            cfg = harness.load_config(args.config)
            levels = [x for chunk in args.levels for x in chunk]
            if args.kind == "ratio":
                reports = harness.sweep_intensity(cfg, levels, args.data_dir)
                name = "ratio"
            else:
                reports = harness.sweep_perturbation(cfg, args.perturbation, levels, args.data_dir)
                name = args.perturbation
            out = harness.run_dir(args.out, cfg, f"-sweep-{name}")
            harness.emit_report(reports, out, series={name: reports})
            _print_summary(reports, sys.stdout)
            print(out)
        else:
            reports = harness.read_reports(args.dir)
            if not reports:
                raise IoError(f"no results.jsonl under {args.dir}")
            harness.write_summary(reports, args.dir)
            _print_summary(reports, sys.stdout)
    except GraphUnlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
