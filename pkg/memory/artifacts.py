"""Run artifact directory: metrics, losses, checkpoints, overlays, eval cache.

Layout of one run directory::

    config.cfg                    resolved run configuration (reruns the run)
    metrics.csv                   scope,class,precision,recall,f1 (+ macro rows)
    loss.csv                      t,l_t,l_s,l_c,total,delta,inside,outside
    weights.wgt / templates.tpl   WGT1 and TPL1 checkpoints
    trajectory_predictions.csv    per eval frame: gaze pixel, truth, nearest, distance
    frame_scores.npz              whole-frame nearest class and distance per eval frame
    overlays/dddddd00/pred_%06d.msk  predicted class ids (MSK1)
    xi_tuning.csv                 xi,macro_f1 curve when ξ was tuned
    meta.json                     seed, ξ, supervisions, fallbacks, counters
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import config
from memory.bundle import write_mask
from memory.models import EvalRecord
from services.errors import BundleFormatError
from services.metrics import METRICS_HEADER, F1Report
from services.objective import LossReport

TRAJECTORY_HEADER = "t,x,y,truth,nearest,distance,saccade"


@dataclass
class RunArtifacts:
    directory: str
    paths: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name: str) -> str:
        return self.paths[name]

    def add(self, name: str, path: str) -> str:
        self.paths[name] = path
        return path


def overlay_path(directory: str, t: int) -> str:
    folder = f"{(t // config.FRAMES_PER_FOLDER) * config.FRAMES_PER_FOLDER:08d}"
    return os.path.join(directory, "overlays", folder, f"pred_{t:06d}.msk")


def write_lines(path: str, header: Optional[str], rows: list[str]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header:
            f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")
    return path


def write_metrics(path: str, reports: list[F1Report]) -> str:
    rows: list[str] = []
    for r in reports:
        rows.extend(r.csv_rows())
    return write_lines(path, METRICS_HEADER, rows)


def write_losses(path: str, losses: list[tuple[int, LossReport]]) -> str:
    return write_lines(path, LossReport.CSV_HEADER, [rep.csv_row(t) for t, rep in losses])


def write_xi_curve(path: str, curve: list[tuple[float, float]]) -> str:
    return write_lines(path, "xi,macro_f1", [f"{xi:.2f},{score:.9g}" for xi, score in curve])


def write_summary(path: str, rows: list[tuple[int, float, float]]) -> str:
    """Per-seed trajectory and whole-frame macro-F1 plus their mean."""
    lines = [f"{seed},{traj:.9g},{whole:.9g}" for seed, traj, whole in rows]
    if rows:
        lines.append(f"mean,{np.mean([r[1] for r in rows]):.9g},{np.mean([r[2] for r in rows]):.9g}")
    return write_lines(path, "seed,trajectory_macro_f1,whole_frame_macro_f1", lines)


def write_meta(path: str, meta: dict) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return path


def read_meta(directory: str) -> dict:
    path = os.path.join(directory, "meta.json")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise BundleFormatError(path, f"cannot read run metadata: {e}") from None


# ── Eval cache ───────────────────────────────────────────


def write_eval_record(directory: str, record: EvalRecord, overlays_xi: Optional[float] = None) -> dict[str, str]:
    paths = {}
    rows = [
        f"{t},{x},{y},{tr},{nn},{dist:.17g},{int(sac)}"
        for t, x, y, tr, nn, dist, sac in zip(
            record.frames, record.foa_x, record.foa_y, record.traj_truth,
            record.traj_nearest, record.traj_distance, record.saccade,
        )
    ]
    paths["trajectory"] = write_lines(os.path.join(directory, "trajectory_predictions.csv"),
                                       TRAJECTORY_HEADER, rows)
    scores = os.path.join(directory, "frame_scores.npz")
    np.savez_compressed(
        scores,
        frames=record.frames,
        truth=record.frame_truth,
        nearest=record.frame_nearest,
        distance=record.frame_distance,
    )
    paths["frame_scores"] = scores
    if overlays_xi is not None:
        pred = np.where(record.frame_distance <= overlays_xi, record.frame_nearest, 0).astype(np.uint16)
        for t, mask in zip(record.frames, pred):
            write_mask(overlay_path(directory, int(t)), mask)
        paths["overlays"] = os.path.join(directory, "overlays")
    return paths


def read_eval_record(directory: str) -> EvalRecord:
    traj_path = os.path.join(directory, "trajectory_predictions.csv")
    scores_path = os.path.join(directory, "frame_scores.npz")
    try:
        with open(traj_path, "r", encoding="utf-8") as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as e:
        raise BundleFormatError(traj_path, f"cannot read: {e}") from None
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise BundleFormatError(traj_path, "missing trajectory header")
    cols: list[list[str]] = [[] for _ in range(7)]
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise BundleFormatError(traj_path, f"line {lineno}: expected 7 fields")
        for col, value in zip(cols, parts):
            col.append(value)
    try:
        with np.load(scores_path) as data:
            frame_truth = data["truth"]
            frame_nearest = data["nearest"]
            frame_distance = data["distance"]
    except (OSError, KeyError, ValueError) as e:
        raise BundleFormatError(scores_path, f"cannot read: {e}") from None
    return EvalRecord(
        frames=np.array([int(v) for v in cols[0]], dtype=np.int64),
        foa_x=np.array([int(v) for v in cols[1]], dtype=np.int64),
        foa_y=np.array([int(v) for v in cols[2]], dtype=np.int64),
        traj_truth=np.array([int(v) for v in cols[3]], dtype=np.int64),
        traj_nearest=np.array([int(v) for v in cols[4]], dtype=np.int64),
        traj_distance=np.array([float(v) for v in cols[5]], dtype=np.float64),
        saccade=np.array([v == "1" for v in cols[6]], dtype=bool),
        frame_truth=frame_truth,
        frame_nearest=frame_nearest,
        frame_distance=frame_distance,
    )
