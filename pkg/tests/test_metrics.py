import numpy as np
import pytest

from memory.models import EvalRecord
from services.metrics import (
    apply_threshold,
    evaluate_record,
    f1_scores,
    tune_record,
    tune_xi,
    xi_grid,
)


def _oracle(pred, truth, m):
    out = []
    for c in range(m):
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        if tp + fp + fn == 0:
            out.append(1.0)
            continue
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out.append(2 * p * r / (p + r) if p + r else 0.0)
    return out


class TestF1Scores:
    def test_perfect(self):
        truth = np.array([0, 1, 2, 2, 1])
        assert f1_scores(truth, truth, 3).macro_f1 == 1.0

    def test_all_unknown_predictions(self):
        truth = np.array([0, 0, 1, 2, 1, 0])
        report = f1_scores(np.zeros(6, dtype=int), truth, 3)
        f1 = [c.f1 for c in report.per_class]
        assert f1[0] == pytest.approx(2 * 0.5 / 1.5)
        assert f1[1:] == [0.0, 0.0]
        assert f1 == pytest.approx(_oracle(np.zeros(6, dtype=int), truth, 3))

    def test_half_right_single_frame(self):
        truth = np.array([[1, 1], [1, 1]])
        pred = np.array([[1, 1], [0, 0]])
        report = f1_scores(pred, truth, 2, scope="whole-frame")
        cls1 = report.per_class[1]
        assert (cls1.precision, cls1.recall) == (1.0, 0.5)
        assert cls1.f1 == pytest.approx(2 / 3)
        assert report.per_class[0].f1 == 0.0
        assert report.scope == "whole-frame"

    def test_absent_class_scores_one(self):
        report = f1_scores([1, 1], [1, 1], 3)
        assert [c.f1 for c in report.per_class] == [1.0, 1.0, 1.0]

    def test_random_against_oracle(self, rng):
        for _ in range(50):
            m = int(rng.integers(2, 6))
            truth = rng.integers(0, m, size=40)
            pred = rng.integers(0, m, size=40)
            got = [c.f1 for c in f1_scores(pred, truth, m).per_class]
            assert got == pytest.approx(_oracle(pred, truth, m))

    def test_class_out_of_range(self):
        with pytest.raises(ValueError):
            f1_scores([3], [0], 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            f1_scores([0, 1], [0], 2)

    def test_csv_rows_end_with_macro(self):
        rows = f1_scores([0, 1], [0, 1], 2).csv_rows()
        assert rows[-1] == "trajectory,macro,1,1,1"
        assert rows[0].startswith("trajectory,0,")


class TestThreshold:
    def test_apply(self):
        np.testing.assert_array_equal(apply_threshold([1, 2, 2], [0.1, 0.5, 0.9], 0.5), [1, 2, 0])

    def test_grid(self):
        grid = xi_grid()
        assert len(grid) == 200
        assert grid[0] == 0.01 and grid[-1] == 2.0

    def test_tune_prefers_smallest_best(self):
        nearest = np.array([1, 1, 2, 2])
        dist = np.array([0.1, 0.2, 0.3, 0.9])
        truth = np.array([1, 1, 2, 0])
        best, curve = tune_xi(nearest, dist, truth, 3, grid=[0.05, 0.3, 0.5, 0.8, 1.0])
        assert best == 0.3
        assert [x for x, _ in curve] == [0.05, 0.3, 0.5, 0.8, 1.0]
        assert dict(curve)[0.3] == 1.0


def _record():
    frame_truth = np.zeros((3, 2, 2), dtype=np.uint16)
    frame_truth[:, 0, 0] = 1
    return EvalRecord(
        frames=np.array([10, 11, 12]),
        foa_x=np.array([1, 1, 2]),
        foa_y=np.array([1, 1, 2]),
        saccade=np.array([False, True, False]),
        traj_truth=np.array([1, 1, 0]),
        traj_nearest=np.array([1, 2, 1]),
        traj_distance=np.array([0.1, 0.1, 0.7]),
        frame_truth=frame_truth,
        frame_nearest=np.ones((3, 2, 2), dtype=np.int16),
        frame_distance=np.where(frame_truth == 1, 0.1, 0.7),
    )


class TestRecord:
    def test_evaluate(self):
        traj, whole = evaluate_record(_record(), 3, xi=0.5)
        assert traj.per_class[1].recall == 0.5
        assert whole.macro_f1 == 1.0

    def test_exclude_saccades(self):
        traj, _ = evaluate_record(_record(), 3, xi=0.5, exclude_saccades=True)
        assert traj.macro_f1 == 1.0

    def test_tune(self):
        best, _ = tune_record(_record(), 3, exclude_saccades=True, grid=[0.05, 0.5, 0.8])
        assert best == 0.5
