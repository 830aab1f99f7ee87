"""F1 scoring over the ``m`` categories and post-hoc open-set threshold tuning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import config
from memory.models import EvalRecord


@dataclass(frozen=True)
class ClassScore:
    class_id: int
    precision: float
    recall: float
    f1: float
    support: int = 0


@dataclass
class F1Report:
    scope: str                                  # "trajectory" or "whole-frame"
    per_class: list[ClassScore] = field(default_factory=list)

    @property
    def macro_f1(self) -> float:
        if not self.per_class:
            return 0.0
        return float(np.mean([c.f1 for c in self.per_class]))

    def csv_rows(self) -> list[str]:
        rows = [f"{self.scope},{c.class_id},{c.precision:.9g},{c.recall:.9g},{c.f1:.9g}"
                for c in self.per_class]
        macro_p = float(np.mean([c.precision for c in self.per_class])) if self.per_class else 0.0
        macro_r = float(np.mean([c.recall for c in self.per_class])) if self.per_class else 0.0
        rows.append(f"{self.scope},macro,{macro_p:.9g},{macro_r:.9g},{self.macro_f1:.9g}")
        return rows


METRICS_HEADER = "scope,class,precision,recall,f1"


def f1_scores(predictions, truth, m: int, scope: str = "trajectory") -> F1Report:
    """One-vs-rest precision, recall and F1 for classes ``0..m-1``.

    A class absent from both predictions and truth scores 1 on all three;
    otherwise an undefined ratio counts as 0.
    """
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError(f"predictions ({pred.size}) and truth ({true.size}) differ in length")
    for name, arr in (("prediction", pred), ("truth", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= m):
            raise ValueError(f"{name} class id outside 0..{m - 1}")

    confusion = np.bincount(true * m + pred, minlength=m * m).reshape(m, m)
    tp = np.diag(confusion)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)

    scores = []
    for c in range(m):
        if predicted[c] == 0 and actual[c] == 0:
            scores.append(ClassScore(c, 1.0, 1.0, 1.0, 0))
            continue
        p = tp[c] / predicted[c] if predicted[c] else 0.0
        r = tp[c] / actual[c] if actual[c] else 0.0
        f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        scores.append(ClassScore(c, float(p), float(r), float(f1), int(actual[c])))
    return F1Report(scope=scope, per_class=scores)


def apply_threshold(nearest_class, min_distance, xi: float) -> np.ndarray:
    """Open-set decision: the nearest class where its distance is ``≤ ξ``, else unknown."""
    nearest = np.asarray(nearest_class, dtype=np.int64)
    dist = np.asarray(min_distance, dtype=np.float64)
    return np.where(dist <= xi, nearest, 0)


def xi_grid(
    start: float = config.XI_GRID_START,
    stop: float = config.XI_GRID_STOP,
    step: float = config.XI_GRID_STEP,
) -> np.ndarray:
    count = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(count), 10)


def tune_xi(nearest_class, min_distance, truth, m: int, grid=None) -> tuple[float, list[tuple[float, float]]]:
    """Best ``ξ`` on *grid* by macro-F1; ties keep the smallest ``ξ``.

    Returns ``(best_xi, [(xi, macro_f1), ...])``.
    """
    grid = xi_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    curve = []
    best_xi, best_f1 = float(grid[0]), -1.0
    for xi in grid:
        score = f1_scores(apply_threshold(nearest_class, min_distance, float(xi)), truth, m).macro_f1
        curve.append((float(xi), score))
        if score > best_f1:
            best_xi, best_f1 = float(xi), score
    return best_xi, curve


def evaluate_record(
    record: EvalRecord,
    m: int,
    xi: float,
    exclude_saccades: bool = False,
) -> tuple[F1Report, F1Report]:
    """Trajectory and whole-frame reports for one measured lap at threshold *xi*."""
    keep = ~record.saccade if exclude_saccades else np.ones(len(record), dtype=bool)
    traj_pred = apply_threshold(record.traj_nearest[keep], record.traj_distance[keep], xi)
    trajectory = f1_scores(traj_pred, record.traj_truth[keep], m, scope="trajectory")
    frame_pred = apply_threshold(record.frame_nearest, record.frame_distance, xi)
    whole = f1_scores(frame_pred, record.frame_truth, m, scope="whole-frame")
    return trajectory, whole


def tune_record(record: EvalRecord, m: int, exclude_saccades: bool = False, grid=None):
    """Tune ``ξ`` against trajectory macro-F1 of a measured lap."""
    keep = ~record.saccade if exclude_saccades else np.ones(len(record), dtype=bool)
    return tune_xi(record.traj_nearest[keep], record.traj_distance[keep], record.traj_truth[keep], m, grid)
