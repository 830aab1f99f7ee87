"""Protocol commands: ``run``, ``eval`` and ``tune-xi``.

``eval`` and ``tune-xi`` work from the eval-lap cache a run leaves in its
artifact directory, so re-thresholding never touches the network again.
"""

from __future__ import annotations

import argparse
import asyncio
import os

from cli.helpers import add_override_flag, emit, parse_overrides
from memory.artifacts import (
    read_eval_record,
    read_meta,
    write_metrics,
    write_summary,
    write_xi_curve,
)
from memory.bundle import read_bundle
from memory.run_settings import load_run_config
from protocol import run_seeds
from services.errors import BundleFormatError
from services.log import log
from services.metrics import evaluate_record, tune_record


def run_directories(root: str) -> list[str]:
    """*root* itself when it holds one run, else its ``seed_<n>`` subdirectories."""
    if os.path.isfile(os.path.join(root, "meta.json")):
        return [root]
    found = []
    if os.path.isdir(root):
        for name in os.listdir(root):
            path = os.path.join(root, name)
            if name.startswith("seed_") and os.path.isfile(os.path.join(path, "meta.json")):
                found.append((int(name[5:]) if name[5:].isdigit() else 0, path))
    if not found:
        raise BundleFormatError(root, "no run artifacts (meta.json) found")
    return [path for _, path in sorted(found)]


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, parse_overrides(args.overrides))
    bundle = read_bundle(cfg["bundle"], force_gray=cfg["force_gray"])
    results, artifacts, summary = asyncio.run(run_seeds(bundle, cfg))
    for arts in artifacts:
        for path in arts.paths.values():
            emit(path)
    emit(summary)
    for r in results:
        log("RUN", f"Seed {r.seed}: trajectory macro-F1 {r.trajectory_report.macro_f1:.4f} at xi={r.xi:.2f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rows = []
    for directory in run_directories(args.artifacts):
        meta = read_meta(directory)
        record = read_eval_record(directory)
        xi = args.xi if args.xi is not None else float(meta["xi"])
        exclude = args.exclude_saccades or bool(meta.get("exclude_saccades", False))
        trajectory, whole = evaluate_record(record, int(meta["m"]), xi, exclude)
        emit(write_metrics(os.path.join(directory, "eval_metrics.csv"), [trajectory, whole]))
        log("EVAL", f"{directory}: xi={xi:.2f} trajectory macro-F1 {trajectory.macro_f1:.4f}, "
                    f"whole-frame macro-F1 {whole.macro_f1:.4f}")
        rows.append((int(meta["seed"]), trajectory.macro_f1, whole.macro_f1))
    if len(rows) > 1:
        emit(write_summary(os.path.join(args.artifacts, "eval_summary.csv"), rows))
    return 0


def cmd_tune_xi(args: argparse.Namespace) -> int:
    for directory in run_directories(args.artifacts):
        meta = read_meta(directory)
        record = read_eval_record(directory)
        exclude = args.exclude_saccades or bool(meta.get("exclude_saccades", False))
        best, curve = tune_record(record, int(meta["m"]), exclude)
        emit(write_xi_curve(os.path.join(directory, "xi_tuning.csv"), curve))
        score = dict(curve)[best]
        log("EVAL", f"{directory}: best xi={best:.2f} (trajectory macro-F1 {score:.4f})")
        print(f"xi={best:.2f}", flush=True)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    run = subparsers.add_parser("run", help="Run the lap protocol for every configured seed")
    run.add_argument("config", help="Run config file (key=value)")
    add_override_flag(run)
    run.set_defaults(handler=cmd_run)

    ev = subparsers.add_parser("eval", help="Score a finished run, optionally at another xi")
    ev.add_argument("artifacts", help="Run directory, or a multi-seed output directory")
    ev.add_argument("--xi", type=float, default=None, help="Open-set threshold override")
    ev.add_argument("--exclude-saccades", action="store_true", help="Drop saccade frames from trajectory F1")
    ev.set_defaults(handler=cmd_eval)

    tune = subparsers.add_parser("tune-xi", help="Sweep xi over the eval lap and report the best value")
    tune.add_argument("artifacts", help="Run directory, or a multi-seed output directory")
    tune.add_argument("--exclude-saccades", action="store_true", help="Drop saccade frames from trajectory F1")
    tune.set_defaults(handler=cmd_tune_xi)
