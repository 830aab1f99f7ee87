"""``bench``: loss + gradient timings, sampled vs exhaustive attention graphs."""

from __future__ import annotations

import argparse
import os

import config
from cli.helpers import emit, int_list
from memory.artifacts import write_lines
from services.bench import BENCH_HEADER, run_bench, speedups
from services.errors import ConfigValidationError
from services.log import log


def cmd_bench(args: argparse.Namespace) -> int:
    problems = []
    if args.repeats < 3:
        problems.append(f"repeats: must be >= 3, got {args.repeats}")
    if args.e < 1:
        problems.append(f"e: must be >= 1, got {args.e}")
    if any(d < 1 for d in args.d):
        problems.append("d: every dimension must be >= 1")
    if any(not 2 <= s < args.side * args.side for s in args.sizes):
        problems.append(f"sizes: every region size must be in [2, {args.side * args.side - 1}]")
    if problems:
        raise ConfigValidationError(problems)

    cells = run_bench(args.d, args.sizes, e=args.e, repeats=args.repeats, side=args.side,
                      seed=args.seed, pair_cap=args.pair_cap)
    emit(write_lines(os.path.join(args.out, "bench.csv"), BENCH_HEADER, [c.csv_row() for c in cells]))
    samples = [
        f"{c.mode},{c.d},{c.region_size},{i},{s:.9g}"
        for c in cells for i, s in enumerate(c.samples)
    ]
    emit(write_lines(os.path.join(args.out, "bench_samples.csv"), "mode,d,region_size,repeat,seconds", samples))
    for (d, size), ratio in sorted(speedups(cells).items()):
        log("BENCH", f"d={d} |S|={size}: exhaustive/stochastic median ratio {ratio:.2f}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    bench = subparsers.add_parser("bench", help="Time stochastic vs exhaustive pairwise losses")
    bench.add_argument("out", help="Directory for bench.csv and bench_samples.csv")
    bench.add_argument("--d", type=int_list, default=[32, 128], help="Feature dimensions, comma-separated")
    bench.add_argument("--e", type=int, default=10000, help="Target edges per type for the sampled graph")
    bench.add_argument("--sizes", type=int_list, default=[100, 2000], help="Moving-region sizes")
    bench.add_argument("--repeats", type=int, default=config.BENCH_REPEATS)
    bench.add_argument("--side", type=int, default=config.STREAM_WIDTH, help="Synthetic frame side")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--pair-cap", type=int, default=config.BENCH_PAIR_CAP,
                       help="Exhaustive cells above this pair count are skipped")
    bench.set_defaults(handler=cmd_bench)
