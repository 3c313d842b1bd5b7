"""Command line front end.

Runs one scenario (or the distance-ratio sweep), writes the delimited log,
a summary, raw plot series, and rendered figures into the output directory,
and exits 0 on a safe run, 2 when the cone constraint was violated, and 1 on
any usage or runtime error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time
import uuid

from . import report
from .config import ParseError, parse_config_file, serialize_config
from .scenarios import (SAFETY_FLOOR, KINDS, ScenarioConfig, ScenarioError,
                        ValidationError, run, summarize)

SWEEP_RATIOS = (0.5, 0.75, 1.0, 2.0, 5.0, 15.0)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSAFE = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for safety
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _build_parser():
    p = _Parser(prog="fovsafe",
                description="Field-of-view safety filter experiments")
    p.add_argument("--config", help="scenario config file (key = value lines)")
    p.add_argument("--scenario", choices=KINDS,
                   help="scenario kind; overrides the config file")
    p.add_argument("--duration", type=float, help="run length in seconds")
    p.add_argument("--dt", type=float, help="integration step in seconds")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--sweep-dtilde", action="store_true",
                   help="run every distance-ratio in the robustness sweep")
    p.add_argument("--no-filter", action="store_true",
                   help="bypass the safety filter (ablation)")
    p.add_argument("--summary-only", action="store_true",
                   help="write only the summary file")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for the sweep")
    return p


def _configure(args):
    if args.config:
        cfg = parse_config_file(args.config)
    else:
        cfg = ScenarioConfig()
    if args.scenario:
        cfg.kind = args.scenario
    if args.duration is not None:
        cfg.duration = args.duration
    if args.dt is not None:
        cfg.dt = args.dt
    if args.no_filter:
        cfg.filter_enabled = False
    return cfg.validate()


def _run_and_write(cfg, outdir, summary_only):
    os.makedirs(outdir, exist_ok=True)
    log = run(cfg)
    with open(os.path.join(outdir, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    summary = report.write_summary(log, os.path.join(outdir, "summary.txt"))
    if not summary_only:
        report.write_csv(log, os.path.join(outdir, "log.csv"))
        report.write_plot_data(log, os.path.join(outdir, "plot_data"))
        report.render_figures(log, outdir)
    return summary


def _sweep_job(payload):
    text, outdir, summary_only = payload
    from .config import parse_config
    cfg = parse_config(text)
    summary = _run_and_write(cfg, outdir, summary_only)
    return summary.min_h, summary.infeasible_steps


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR

    started = time.time()
    try:
        cfg = _configure(args)
        os.makedirs(args.out, exist_ok=True)
        worst_h = float("inf")
        if args.sweep_dtilde:
            jobs = []
            for r in SWEEP_RATIOS:
                sub = parse_config_file(args.config) if args.config else ScenarioConfig()
                if args.scenario:
                    sub.kind = args.scenario
                if args.duration is not None:
                    sub.duration = args.duration
                if args.dt is not None:
                    sub.dt = args.dt
                if args.no_filter:
                    sub.filter_enabled = False
                sub.d_hat_mode = "scaled-true"
                sub.d_hat_ratio = r
                sub.validate()
                outdir = os.path.join(args.out, f"ratio-{r:g}")
                jobs.append((serialize_config(sub), outdir, args.summary_only))
            if args.jobs > 1:
                with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
                    results = list(ex.map(_sweep_job, jobs))
            else:
                results = [_sweep_job(j) for j in jobs]
            for (ratio, (min_h, bad)) in zip(SWEEP_RATIOS, results):
                print(f"ratio {ratio:g}: min_h = {min_h:.9g}, "
                      f"infeasible_steps = {bad}")
                worst_h = min(worst_h, min_h)
        else:
            summary = _run_and_write(cfg, args.out, args.summary_only)
            worst_h = summary.min_h
            print(f"min_h = {summary.min_h:.9g}")
            print(f"max_tracking_error = {summary.max_tracking_error:.9g}")
            print(f"rms_tracking_error = {summary.rms_tracking_error:.9g}")
            print(f"infeasible_steps = {summary.infeasible_steps}")
        with open(os.path.join(args.out, "manifest.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"run_id = {uuid.uuid4().hex}\n")
            fh.write(f"config = {args.config or '<defaults>'}\n")
            fh.write(f"out = {args.out}\n")
            fh.write(f"wall_time_s = {time.time() - started:.3f}\n")
    except (ParseError, ValidationError, ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if worst_h < SAFETY_FLOOR:
        print(f"safety violated: min_h = {worst_h:.9g}", file=sys.stderr)
        return EXIT_UNSAFE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
