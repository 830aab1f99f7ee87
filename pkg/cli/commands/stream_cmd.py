"""Stream commands: ``generate`` renders a preset, ``foa`` precomputes a trajectory."""

from __future__ import annotations

import argparse
import os

import config
from cli.helpers import add_override_flag, emit, parse_overrides
from memory.bundle import read_bundle, write_bundle
from memory.foa_file import write_foa
from memory.run_settings import build_run_config, load_run_config
from services.attention import initial_state, simulate_trajectory
from services.errors import ConfigValidationError
from services.log import log
from services.scenes import PRESETS, generate_stream, plan_supervisions, preset


def cmd_generate(args: argparse.Namespace) -> int:
    if args.preset not in PRESETS:
        raise ConfigValidationError([f"preset: unknown preset {args.preset!r}, expected one of {', '.join(PRESETS)}"])
    scene = preset(args.preset, laps=args.laps, size=args.size, lap_frames=args.lap_frames)
    bundle = generate_stream(scene, args.seed)

    cfg = build_run_config({"bundle": args.out, "out": args.out})
    start = initial_state(scene.width, scene.height, (cfg["initial_vx"], cfg["initial_vy"]),
                          nu=cfg["nu"])
    trajectory = simulate_trajectory(bundle, cfg.attention_params(), start)
    laps = bundle.manifest.laps_per_object()
    first = min(cfg["learn_laps"] + 1, laps)
    last = min(cfg["supervise_through_lap"], laps)
    plan = plan_supervisions(bundle, trajectory, first, last,
                             args.supervisions, cfg["min_spacing"])
    bundle.supervisions = plan.events

    emit(write_bundle(bundle, args.out))
    emit(os.path.join(args.out, "sup", "sup.csv"))
    if args.foa:
        emit(write_foa(trajectory, os.path.join(args.out, "trajectory.foa")))
    log("STREAM", f"Preset {args.preset}: {len(plan.events)} supervisions in laps {first}-{last}")
    return 0


def cmd_foa(args: argparse.Namespace) -> int:
    overrides = parse_overrides(args.overrides)
    overrides.update(bundle=args.bundle, out=os.path.dirname(os.path.abspath(args.out)))
    cfg = load_run_config(args.config, overrides) if args.config else build_run_config({}, overrides)

    bundle = read_bundle(args.bundle, force_gray=cfg["force_gray"])
    man = bundle.manifest
    start = initial_state(man.width, man.height, (cfg["initial_vx"], cfg["initial_vy"]),
                          nu=cfg["nu"])
    trajectory = simulate_trajectory(bundle, cfg.attention_params(), start)
    saccades = sum(s.saccade for s in trajectory)
    log("FOA", f"{len(trajectory)} states, {saccades} saccade frames")
    emit(write_foa(trajectory, args.out))
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    gen = subparsers.add_parser("generate", help="Render a synthetic stream bundle from a preset")
    gen.add_argument("preset", help=f"One of: {', '.join(PRESETS)}")
    gen.add_argument("out", help="Bundle directory to write")
    gen.add_argument("--seed", type=int, default=config.STREAM_SEED)
    gen.add_argument("--laps", type=int, default=None, help="Laps per object")
    gen.add_argument("--size", type=int, default=None, help="Frame side in pixels")
    gen.add_argument("--lap-frames", type=int, default=None, help="Frames per lap")
    gen.add_argument("--supervisions", type=int, default=config.SUPERVISIONS_PER_OBJECT,
                     help="Supervisions per object written to sup/sup.csv")
    gen.add_argument("--foa", action="store_true", help="Also write trajectory.foa with default parameters")
    gen.set_defaults(handler=cmd_generate)

    foa = subparsers.add_parser("foa", help="Attention-only pass over a bundle")
    foa.add_argument("bundle", help="Bundle directory")
    foa.add_argument("out", help=".foa file to write")
    foa.add_argument("--config", default=None, help="Run config providing attention parameters")
    add_override_flag(foa)
    foa.set_defaults(handler=cmd_foa)
