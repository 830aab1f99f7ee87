"""Lap protocol: online learning over the stream, then measurement.

Frames are visited in stream order.  During laps ``1..supervise_through_lap``
every frame runs segmentation, graph sampling, the forward pass, the
losses and one SGD step; supervisions fall in laps
``learn_laps+1..supervise_through_lap``.  Learning then freezes, templates
are re-encoded with the final weights, and the ``eval_lap`` frames are
encoded and matched against the templates.

Usage::

    bundle = read_bundle("data/empty-2")
    cfg = load_run_config("configs/smoke.cfg")
    result = run_protocol(bundle, cfg, seed=0)
    write_run(result, "runs/smoke/seed_0")
"""

from __future__ import annotations

import asyncio
import hashlib
import os
from dataclasses import dataclass, field, replace

import numpy as np

from memory.artifacts import (
    RunArtifacts,
    write_eval_record,
    write_losses,
    write_meta,
    write_metrics,
    write_summary,
    write_xi_curve,
)
from memory.checkpoints import save_templates, save_weights
from memory.models import AttentionState, EvalRecord, StreamBundle, SupervisionEvent
from memory.run_settings import RunConfig, write_echo
from memory.template_store import TemplateStore
from services.attention import initial_state, simulate_trajectory
from services.attgraph import exhaustive_graph, node_budget, sample_graph
from services.errors import ConfigValidationError, FoaError, ProtocolError
from services.features import FeatureExtractor
from services.gradcore import Tape
from services.log import debug, log
from services.metrics import F1Report, evaluate_record, tune_record
from services.motionseg import round_coords, segment_moving_region
from services.objective import LossReport, frame_loss, online_step
from services.scenes import plan_supervisions


@dataclass
class RunResult:
    seed: int
    config: RunConfig
    m: int
    trajectory: list[AttentionState]
    supervisions: list[SupervisionEvent]
    losses: list[tuple[int, LossReport]]
    record: EvalRecord
    extractor: FeatureExtractor
    store: TemplateStore
    xi: float
    trajectory_report: F1Report
    frame_report: F1Report
    xi_curve: list[tuple[float, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def weights_digest(extractor: FeatureExtractor) -> str:
    h = hashlib.sha256()
    for p in extractor.parameters():
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()


def check_coverage(bundle: StreamBundle, cfg: RunConfig) -> None:
    laps = bundle.manifest.laps_per_object()
    if laps < cfg["eval_lap"]:
        raise ConfigValidationError([f"eval_lap: bundle has only {laps} laps per object, eval_lap is {cfg['eval_lap']}"])


def _last_frame(bundle: StreamBundle, lap: int) -> int:
    frames = bundle.manifest.frames_of_laps(1, lap)
    return frames[-1] if frames else -1


def _supervisions(bundle: StreamBundle, cfg: RunConfig, trajectory: list[AttentionState]):
    first, last = cfg["learn_laps"] + 1, cfg["supervise_through_lap"]
    if cfg["supervision_source"] == "bundle":
        window = set(bundle.manifest.frames_of_laps(first, last))
        events = [e for e in bundle.supervisions if e.t in window]
        return events, [], 0
    if cfg["supervisions_per_object"] == 0:
        return [], [], 0
    plan = plan_supervisions(bundle, trajectory, first, last,
                             cfg["supervisions_per_object"], cfg["min_spacing"])
    return plan.events, plan.fallbacks, plan.boundary_skips


class ProtocolRunner:
    """One seeded run over one bundle; not shared between threads."""

    def __init__(self, bundle: StreamBundle, cfg: RunConfig, seed: int):
        check_coverage(bundle, cfg)
        self.bundle = bundle
        self.cfg = cfg
        self.seed = seed
        man = bundle.manifest

        ext_cfg = cfg.extractor_config(man.channels)
        self.extractor = FeatureExtractor(replace(ext_cfg, seed=ext_cfg.seed + seed))
        self.weights = cfg.loss_weights()
        self.attention = cfg.attention_params()
        self.budget = node_budget(cfg["e"])
        self.rng = np.random.default_rng(seed)
        self.store = TemplateStore(
            distance=cfg["distance"], xi=cfg["xi"], batch_cap=cfg.batch_cap(man.object_count),
            width=man.width, height=man.height,
        )
        self.learn_end = _last_frame(bundle, cfg["supervise_through_lap"])
        self.eval_frames = man.frames_of_laps(cfg["eval_lap"], cfg["eval_lap"])
        self.skipped_steps = 0

    def _frame_source(self, r: int):
        return self.bundle.frame(r) if 0 <= r < len(self.bundle) else None

    def _learn_frame(self, t: int, state: AttentionState, f_prev, sup: list[SupervisionEvent]):
        bundle, cfg, width = self.bundle, self.cfg, self.bundle.manifest.width
        anchor = round_coords(state.position)
        region = segment_moving_region(bundle.flow(t), state.position, cfg["gamma"], cfg["eight_connected"])
        if cfg["graph_mode"] == "exhaustive":
            graph = exhaustive_graph(region)
        else:
            graph = sample_graph(region, self.budget, cfg["beta"], self.rng)

        delta = 0 if (state.saccade or f_prev is None) else 1
        params = self.extractor.parameters()
        with Tape() as tape:
            fmap = self.extractor.forward(bundle.frame(t))
            total, report = frame_loss(fmap, anchor, f_prev, delta, graph, self.weights)

        for event in sup:
            coords = event.coords(width)
            self.store.add_supervision(fmap.restrict(coords), event.class_id, t, coords)

        if params and total.requires_grad:
            grads = tape.backward(total, params)
            if online_step(params, grads, self.weights.lr):
                self.extractor.version += 1
            else:
                self.skipped_steps += 1
        debug("LOSS", f"t={t} total={report.total:.6g} inside={report.inside} outside={report.outside}")
        return fmap.restrict(anchor), report

    def _eval_frame(self, t: int, state: AttentionState):
        man = self.bundle.manifest
        fmap = self.extractor.forward(self.bundle.frame(t))
        nearest, dist = self.store.nearest(fmap.rows.data)
        x, y = round_coords(state.position)
        x, y = min(max(x, 1), man.width), min(max(y, 1), man.height)
        idx = (y - 1) * man.width + (x - 1)
        truth = self.bundle.mask(t)
        return (x, y, int(truth[y - 1, x - 1]), int(nearest[idx]), float(dist[idx]),
                nearest.reshape(man.height, man.width), dist.reshape(man.height, man.width))

    def run(self) -> RunResult:
        bundle, cfg, man = self.bundle, self.cfg, self.bundle.manifest
        start = initial_state(man.width, man.height, (cfg["initial_vx"], cfg["initial_vy"]), nu=self.attention.nu)
        trajectory = simulate_trajectory(bundle, self.attention, start)
        events, fallbacks, boundary_skips = _supervisions(bundle, cfg, trajectory)
        by_frame: dict[int, list[SupervisionEvent]] = {}
        for e in events:
            by_frame.setdefault(e.t, []).append(e)

        log("RUN", f"Seed {self.seed}: learning on frames 0-{self.learn_end}, "
                   f"{len(events)} supervisions, eval lap {cfg['eval_lap']} ({len(self.eval_frames)} frames)")
        losses: list[tuple[int, LossReport]] = []
        f_prev = None
        rounds = {span.start: k for k, span in enumerate(man.laps_of(0), start=1)}
        t = 0
        try:
            for t in range(self.learn_end + 1):
                if t in rounds:
                    log("RUN", f"Lap {rounds[t]} starts at frame {t}")
                f_prev, report = self._learn_frame(t, trajectory[t], f_prev, by_frame.get(t, []))
                losses.append((t, report))
                if t % cfg["refresh_every"] == 0:
                    self.store.refresh(self.extractor.forward, self._frame_source)

            self.store.refresh(self.extractor.forward, self._frame_source, all_frames=True)
            frozen = weights_digest(self.extractor)
            log("LEARN", f"Learning frozen after frame {self.learn_end}; "
                         f"{self.extractor.version} updates, {self.skipped_steps} skipped")

            rows = []
            for t in self.eval_frames:
                rows.append(self._eval_frame(t, trajectory[t]))
        except FoaError as e:
            raise ProtocolError(t, e) from e
        except (ValueError, IndexError, ArithmeticError) as e:
            raise ProtocolError(t, e) from e

        record = _record(self.eval_frames, trajectory, rows, bundle)
        if weights_digest(self.extractor) != frozen:
            raise ProtocolError(self.eval_frames[-1] if self.eval_frames else -1,
                                RuntimeError("weights changed during the measured lap"))

        curve: list[tuple[float, float]] = []
        xi = cfg["xi"]
        if cfg["tune_xi"]:
            xi, curve = tune_record(record, man.m, cfg["exclude_saccades"])
            log("EVAL", f"Tuned xi = {xi:.2f}")
        traj_report, frame_report = evaluate_record(record, man.m, xi, cfg["exclude_saccades"])
        log("EVAL", f"Seed {self.seed}: trajectory macro-F1 {traj_report.macro_f1:.4f}, "
                    f"whole-frame macro-F1 {frame_report.macro_f1:.4f}")

        meta = {
            "seed": self.seed,
            "m": man.m,
            "class_names": list(man.class_names),
            "xi": xi,
            "xi_tuned": bool(cfg["tune_xi"]),
            "exclude_saccades": bool(cfg["exclude_saccades"]),
            "supervisions": [{"t": e.t, "index": e.index, "class_id": e.class_id} for e in events],
            "supervision_fallbacks": fallbacks,
            "boundary_skips": boundary_skips,
            "skipped_steps": self.skipped_steps,
            "updates": self.extractor.version,
            "stale_templates": sum(e.stale for e in self.store.entries),
            "batch_cap": self.store.batch_cap,
            "weights_sha256_frozen": frozen,
            "weights_sha256_end": weights_digest(self.extractor),
            "eval_frames": len(self.eval_frames),
        }
        return RunResult(
            seed=self.seed, config=cfg, m=man.m, trajectory=trajectory, supervisions=events,
            losses=losses, record=record, extractor=self.extractor, store=self.store, xi=xi,
            trajectory_report=traj_report, frame_report=frame_report, xi_curve=curve, meta=meta,
        )


def _record(frames: list[int], trajectory: list[AttentionState], rows: list[tuple], bundle: StreamBundle) -> EvalRecord:
    man = bundle.manifest
    n = len(frames)
    if n == 0:
        shape = (0, man.height, man.width)
        return EvalRecord(
            frames=np.zeros(0, dtype=np.int64), foa_x=np.zeros(0, dtype=np.int64),
            foa_y=np.zeros(0, dtype=np.int64), saccade=np.zeros(0, dtype=bool),
            traj_truth=np.zeros(0, dtype=np.int64), traj_nearest=np.zeros(0, dtype=np.int64),
            traj_distance=np.zeros(0), frame_truth=np.zeros(shape, dtype=np.uint16),
            frame_nearest=np.zeros(shape, dtype=np.int16), frame_distance=np.zeros(shape),
        )
    return EvalRecord(
        frames=np.array(frames, dtype=np.int64),
        foa_x=np.array([r[0] for r in rows], dtype=np.int64),
        foa_y=np.array([r[1] for r in rows], dtype=np.int64),
        saccade=np.array([trajectory[t].saccade for t in frames], dtype=bool),
        traj_truth=np.array([r[2] for r in rows], dtype=np.int64),
        traj_nearest=np.array([r[3] for r in rows], dtype=np.int64),
        traj_distance=np.array([r[4] for r in rows], dtype=np.float64),
        frame_truth=np.stack([bundle.mask(t) for t in frames]).astype(np.uint16),
        frame_nearest=np.stack([r[5] for r in rows]).astype(np.int16),
        frame_distance=np.stack([r[6] for r in rows]).astype(np.float64),
    )


def run_protocol(bundle: StreamBundle, cfg: RunConfig, seed: int) -> RunResult:
    return ProtocolRunner(bundle, cfg, seed).run()


# ── Artifacts ────────────────────────────────────────────


def write_run(result: RunResult, directory: str) -> RunArtifacts:
    os.makedirs(directory, exist_ok=True)
    arts = RunArtifacts(directory)
    cfg = result.config.with_values(seeds=[result.seed], out=directory)
    arts.add("config", write_echo(cfg, directory))
    arts.add("metrics", write_metrics(os.path.join(directory, "metrics.csv"),
                                      [result.trajectory_report, result.frame_report]))
    arts.add("loss", write_losses(os.path.join(directory, "loss.csv"), result.losses))
    arts.add("weights", save_weights(result.extractor, os.path.join(directory, "weights.wgt")))
    arts.add("templates", save_templates(result.store, os.path.join(directory, "templates.tpl")))
    overlays_xi = result.xi if result.config["write_overlays"] else None
    for name, path in write_eval_record(directory, result.record, overlays_xi).items():
        arts.add(name, path)
    if result.xi_curve:
        arts.add("xi_tuning", write_xi_curve(os.path.join(directory, "xi_tuning.csv"), result.xi_curve))
    arts.add("meta", write_meta(os.path.join(directory, "meta.json"), result.meta))
    log("RUN", f"Artifacts for seed {result.seed} written to {directory}")
    return arts


def _run_and_write(bundle: StreamBundle, cfg: RunConfig, seed: int, directory: str) -> tuple[RunResult, RunArtifacts]:
    result = run_protocol(bundle, cfg, seed)
    return result, write_run(result, directory)


async def run_seeds(bundle: StreamBundle, cfg: RunConfig) -> tuple[list[RunResult], list[RunArtifacts], str]:
    """Run every configured seed in worker threads; returns results, artifacts and summary path."""
    out = cfg["out"]
    seeds = list(cfg["seeds"])
    os.makedirs(out, exist_ok=True)
    write_echo(cfg, out)
    if len(seeds) == 1:
        pairs = [await asyncio.to_thread(_run_and_write, bundle, cfg, seeds[0], out)]
    else:
        pairs = await asyncio.gather(*(
            asyncio.to_thread(_run_and_write, bundle, cfg, s, os.path.join(out, f"seed_{s}"))
            for s in seeds
        ))
    results = [p[0] for p in pairs]
    artifacts = [p[1] for p in pairs]
    summary = write_summary(
        os.path.join(out, "summary.csv"),
        [(r.seed, r.trajectory_report.macro_f1, r.frame_report.macro_f1) for r in results],
    )
    return results, artifacts, summary
