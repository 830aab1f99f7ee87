import asyncio
import json
import os

import numpy as np
import pytest

from cli import main
from memory.artifacts import read_eval_record
from memory.bundle import read_bundle
from memory.checkpoints import read_templates, read_weights
from memory.run_settings import build_run_config, load_run_config
from protocol import ProtocolRunner, run_protocol, run_seeds, weights_digest, write_run
from services.errors import ConfigValidationError
from services.metrics import evaluate_record

pytestmark = pytest.mark.slow

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _cfg(tmp_path, **overrides):
    raw = {
        "bundle": str(tmp_path / "bundle"),
        "out": str(tmp_path / "runs"),
        "seeds": "0",
        "kernel": "3",
        "hidden": "4",
        "d": "4",
        "e": "20",
        "learn_laps": "1",
        "supervise_through_lap": "2",
        "eval_lap": "3",
        "supervisions_per_object": "1",
        "min_spacing": "2",
        "refresh_every": "5",
        "tune_xi": "true",
    }
    raw.update({k: str(v) for k, v in overrides.items()})
    return build_run_config(raw)


def _bytes(path):
    with open(path, "rb") as f:
        return f.read()


class TestRun:
    def test_same_seed_same_artifacts(self, tiny_stream, tmp_path):
        cfg = _cfg(tmp_path)
        a = write_run(run_protocol(tiny_stream, cfg, seed=0), str(tmp_path / "a"))
        b = write_run(run_protocol(tiny_stream, cfg, seed=0), str(tmp_path / "b"))
        for name in ("metrics", "loss", "weights", "templates", "trajectory"):
            assert _bytes(a[name]) == _bytes(b[name]), name

    def test_different_seeds_differ(self, tiny_stream, tmp_path):
        cfg = _cfg(tmp_path)
        r0 = run_protocol(tiny_stream, cfg, seed=0)
        r1 = run_protocol(tiny_stream, cfg, seed=1)
        assert weights_digest(r0.extractor) != weights_digest(r1.extractor)

    def test_weights_frozen_on_measured_lap(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path), seed=0)
        assert result.meta["weights_sha256_frozen"] == result.meta["weights_sha256_end"]
        assert result.meta["updates"] > 0

    def test_learning_covers_supervised_laps_only(self, tiny_stream, tmp_path):
        cfg = _cfg(tmp_path)
        result = run_protocol(tiny_stream, cfg, seed=0)
        learn = tiny_stream.manifest.frames_of_laps(1, 2)
        assert [t for t, _ in result.losses] == list(range(learn[-1] + 1))
        assert list(result.record.frames) == tiny_stream.manifest.frames_of_laps(3, 3)

    def test_supervisions_fall_in_window(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path), seed=0)
        window = set(tiny_stream.manifest.frames_of_laps(2, 2))
        assert len(result.supervisions) == tiny_stream.manifest.object_count
        assert all(e.t in window for e in result.supervisions)
        assert {e.class_id for e in result.supervisions} == set(tiny_stream.manifest.object_classes)
        assert len(result.store) == len(result.supervisions)

    def test_zero_supervisions_predict_unknown(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path, supervisions_per_object=0), seed=0)
        assert len(result.store) == 0
        assert np.all(result.record.traj_nearest == 0)
        assert np.all(np.isinf(result.record.traj_distance))
        assert np.all(result.record.frame_nearest == 0)

    def test_eval_lap_beyond_stream(self, tiny_stream, tmp_path):
        cfg = _cfg(tmp_path, eval_lap=5)
        with pytest.raises(ConfigValidationError, match="eval_lap"):
            ProtocolRunner(tiny_stream, cfg, seed=0)

    def test_untuned_threshold_is_configured_value(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path, tune_xi="false", xi=0.7), seed=0)
        assert result.xi == 0.7
        assert result.xi_curve == []

    def test_refresh_disabled_notice(self, tiny_stream, tmp_path, capsys):
        run_protocol(tiny_stream, _cfg(tmp_path, b=1), seed=0)
        err = capsys.readouterr().err
        assert err.count("Template refresh disabled (b = 1)") == 1

    def test_exhaustive_graph_mode(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path, graph_mode="exhaustive"), seed=0)
        assert len(result.record) == len(tiny_stream.manifest.frames_of_laps(3, 3))


class TestArtifacts:
    def test_run_directory_layout(self, tiny_stream, tmp_path):
        cfg = _cfg(tmp_path)
        result = run_protocol(tiny_stream, cfg, seed=0)
        out = str(tmp_path / "run")
        arts = write_run(result, out)
        for name in ("config.cfg", "metrics.csv", "loss.csv", "weights.wgt", "templates.tpl",
                     "trajectory_predictions.csv", "frame_scores.npz", "xi_tuning.csv", "meta.json"):
            assert os.path.isfile(os.path.join(out, name)), name
        assert os.path.isdir(arts["overlays"])

        with open(arts["loss"]) as f:
            assert len(f.read().splitlines()) == len(result.losses) + 1
        with open(arts["meta"]) as f:
            meta = json.load(f)
        assert meta["seed"] == 0
        assert meta["xi"] == result.xi

    def test_checkpoints_match_result(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path), seed=0)
        arts = write_run(result, str(tmp_path / "run"))
        _, tensors = read_weights(arts["weights"])
        for p, t in zip(result.extractor.parameters(), tensors):
            assert np.array_equal(p.data, t)
        entries = read_templates(arts["templates"])
        assert [e.class_id for e in entries] == [e.class_id for e in result.store.entries]

    def test_config_echo_reruns_the_run(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path), seed=0)
        arts = write_run(result, str(tmp_path / "run"))
        echoed = load_run_config(arts["config"])
        assert echoed["seeds"] == [0]
        again = run_protocol(tiny_stream, echoed, seed=0)
        assert weights_digest(again.extractor) == weights_digest(result.extractor)

    def test_eval_cache_reproduces_metrics(self, tiny_stream, tmp_path):
        result = run_protocol(tiny_stream, _cfg(tmp_path), seed=0)
        out = str(tmp_path / "run")
        write_run(result, out)
        traj, whole = evaluate_record(read_eval_record(out), result.m, result.xi)
        assert traj.csv_rows() == result.trajectory_report.csv_rows()
        assert whole.csv_rows() == result.frame_report.csv_rows()


def test_run_seeds_writes_summary(tiny_stream, tmp_path):
    cfg = _cfg(tmp_path, seeds="0,1")
    results, artifacts, summary = asyncio.run(run_seeds(tiny_stream, cfg))
    assert [r.seed for r in results] == [0, 1]
    assert [a.directory for a in artifacts] == [os.path.join(cfg["out"], "seed_0"),
                                                 os.path.join(cfg["out"], "seed_1")]
    with open(summary) as f:
        lines = f.read().splitlines()
    assert lines[0] == "seed,trajectory_macro_f1,whole_frame_macro_f1"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1", "mean"]
    assert os.path.isfile(os.path.join(cfg["out"], "config.cfg"))


def test_single_seed_writes_into_out(tiny_stream, tmp_path):
    cfg = _cfg(tmp_path)
    _, artifacts, _ = asyncio.run(run_seeds(tiny_stream, cfg))
    assert artifacts[0].directory == cfg["out"]
    assert os.path.isfile(os.path.join(cfg["out"], "metrics.csv"))


@pytest.fixture(scope="module")
def smoke_bundle(tmp_path_factory):
    """The default empty-2 stream with one supervision per object."""
    out = str(tmp_path_factory.mktemp("smoke") / "empty-2")
    assert main(["generate", "empty-2", out, "--supervisions", "1"]) == 0
    return out, read_bundle(out)


@pytest.fixture(scope="module")
def smoke_scores(smoke_bundle, tmp_path_factory):
    """Mean trajectory macro-F1 over the configured seeds, per example config."""
    directory, bundle = smoke_bundle
    scores = {}
    for name in ("smoke", "smoke-no-temporal"):
        out = str(tmp_path_factory.mktemp(name))
        cfg = load_run_config(os.path.join(CONFIGS, f"{name}.cfg"),
                              {"bundle": directory, "out": out})
        results, _, _ = asyncio.run(run_seeds(bundle, cfg))
        assert [r.seed for r in results] == [0, 1, 2]
        scores[name] = float(np.mean([r.trajectory_report.macro_f1 for r in results]))
    return scores


class TestSmokeStream:
    def test_two_objects_are_told_apart(self, smoke_scores):
        assert smoke_scores["smoke"] >= 0.8

    def test_temporal_coherence_does_not_hurt(self, smoke_scores):
        assert smoke_scores["smoke-no-temporal"] <= smoke_scores["smoke"]
