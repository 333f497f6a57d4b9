"""Command line entry point.

Subcommands::

    persbev census --config FILE --out CSV
    persbev bench  --config FILE --reps N --out CSV
    persbev e2e    --seeds N --sampling MODE --depth MODE --out CSV
    persbev sweep  --axis x-density --factors 1,2,4,8 --out CSV

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, PersBEVError
from .harness import bench, report
from .harness.config import PIPELINE_DEPTH_MODES, READOUTS, SAMPLING_MODES, PipelineConfig, load_config
from .sampling import sampling_census


def _configs(path):
    if path is None:
        return [("default", PipelineConfig().validate())]
    return load_config(path)


def cmd_census(args):
    entries = []
    channels = 64
    for config_id, cfg in _configs(args.config):
        grid, spec = cfg.frustum.build(), cfg.voxel.build()
        entries.append((config_id, sampling_census(grid, spec)))
        channels = cfg.channels
    report.emit_report(report.census_report(entries, channels), args.out)
    return 0


def cmd_bench(args):
    configs = _configs(args.config)
    if args.config is None:
        base = configs[0][1]
        configs = [
            ("none", replace(base, sampling_mode="none")),
            ("grid_nearest", replace(base, sampling_mode="grid_nearest")),
        ]
    rep = bench.latency_bench(configs, repetitions=args.reps, thread_count=args.threads)
    report.emit_report(rep, args.out)
    return 0


def cmd_e2e(args):
    base = _configs(args.config)[0][1]
    cfg = replace(
        base,
        sampling_mode=args.sampling or base.sampling_mode,
        depth_mode=args.depth or base.depth_mode,
        decode=replace(base.decode, readout=args.readout or base.decode.readout),
        scene=replace(base.scene, n_objects=base.scene.n_objects if args.objects is None else args.objects),
    ).validate()
    rep, dets = bench.e2e_report(range(args.seeds), cfg, thread_count=args.threads)
    report.emit_report(rep, args.out)
    if args.detections:
        report.emit_report(report.detections_report(dets), args.detections)
    return 0


def cmd_sweep(args):
    try:
        factors = [float(f) if "." in f else int(f) for f in args.factors.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse factors {args.factors!r}") from exc
    base = _configs(args.config)[0][1]
    rep = bench.density_sweep(base, args.axis, factors, seeds=range(args.seeds))
    report.emit_report(rep, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="persbev", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("census", help="sampling census of frustum vs voxel grid")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_census)

    s = sub.add_parser("bench", help="per-stage latency benchmark")
    s.add_argument("--config")
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("e2e", help="end-to-end synthetic evaluation")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, default=100)
    s.add_argument("--sampling", choices=SAMPLING_MODES)
    s.add_argument("--depth", choices=PIPELINE_DEPTH_MODES)
    s.add_argument("--readout", choices=READOUTS)
    s.add_argument("--objects", type=int)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--detections", help="also write detections CSV here")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_e2e)

    s = sub.add_parser("sweep", help="anchor-density sweep")
    s.add_argument("--config")
    s.add_argument("--axis", default="x-density", choices=("x-density", "depth-bins"))
    s.add_argument("--factors", default="1,2,4,8")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (PersBEVError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
