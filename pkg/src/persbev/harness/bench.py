"""Latency benchmark, density sweep and end-to-end evaluation reports."""

from __future__ import annotations

import gc
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .. import sampling
from ..errors import ConfigError, PersBEVError
from .config import PipelineConfig
from .pipeline import STAGES, PipelineContext, run_batch, run_pipeline
from .report import BenchReport
from .scene import synth_scene

BENCH_COLUMNS = (
    "config_id", "sampling_mode", "depth_mode", "threads", "reps",
    "lift_us", "sample_us", "collapse_us", "decode_us", "total_us", "ratio_to_none",
    "tensor_bytes", "under_sampled_fraction", "duplication_factor", "invalid_fraction",
    "mean_translation_error", "n_scenes",
)
SWEEP_COLUMNS = (
    "axis", "factor", "nx", "nz", "ny", "depth_bins", "voxel_size_x",
    "frustum_bytes", "voxel_bytes", "total_bytes", "area_scaled_bytes",
    "under_sampled_fraction", "duplication_factor", "invalid_fraction",
    "mean_translation_error", "n_matched",
)
E2E_COLUMNS = (
    "scene_id", "sampling_mode", "depth_mode", "readout", "n_gt", "n_det", "n_matched",
    "mean_translation_error", "median_depth_error", "total_us",
)


class BenchError(PersBEVError, RuntimeError):
    pass


def _census_summary(ctx: PipelineContext):
    if not ctx.cfg.sampled:
        # every perspective cell is read exactly once and lies in view
        return 0.0, 1.0, sampling.perspective_invalid_fraction(ctx.grid)
    c = sampling.sampling_census(ctx.grid, ctx.spec)
    return c.under_sampled_fraction, c.duplication_factor, c.invalid_cell_fraction


def tensor_bytes(ctx: PipelineContext) -> int:
    W, H, D = ctx.grid.shape
    C = ctx.cfg.channels
    total = sampling.memory_footprint((C, D, H, W))
    if ctx.cfg.sampled:
        total += sampling.memory_footprint((C,) + ctx.spec.dims)
    return total


def _normalize(cfg_list):
    out = []
    for i, item in enumerate(cfg_list):
        if isinstance(item, PipelineConfig):
            out.append((f"cfg{i}", item))
        else:
            out.append((str(item[0]), item[1]))
    return out


def latency_bench(cfg_list, repetitions: int = 20, thread_count: int = 1, warmup: int = 3, scene_seed: int = 0):
    """Median per-stage wall-clock times for each config on one fixed scene.

    ``cfg_list`` holds configs or ``(config_id, config)`` pairs. The headline
    comparison is single-threaded; with ``thread_count > 1`` repetitions run
    concurrently and the numbers measure throughput under contention.
    ``ratio_to_none`` divides each total by the first ``sampling_mode="none"``
    config's total.
    """
    if repetitions < 5:
        raise ConfigError(f"need at least 5 repetitions, got {repetitions}")
    if thread_count < 1:
        raise ConfigError("thread_count must be at least 1")
    entries = _normalize(cfg_list)
    if time.get_clock_info("perf_counter").monotonic is False:
        raise BenchError("perf_counter is not monotonic on this platform")

    rows = []
    for config_id, cfg in entries:
        ctx = PipelineContext.build(cfg)
        scene = synth_scene(scene_seed, cfg.scene.n_objects, cfg, ctx.grid, ctx.spec)
        for _ in range(warmup):
            run_pipeline(scene, cfg, ctx)
        # as timeit does: keep collector pauses out of the timed runs
        gc.collect()
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            if thread_count == 1:
                results = [run_pipeline(scene, cfg, ctx) for _ in range(repetitions)]
            else:
                with ThreadPoolExecutor(max_workers=thread_count) as pool:
                    results = list(pool.map(lambda _: run_pipeline(scene, cfg, ctx), range(repetitions)))
        finally:
            if gc_was_enabled:
                gc.enable()
        med = {k: statistics.median(r.timings[k] for r in results) for k in STAGES + ("total",)}
        under, dup, invalid = _census_summary(ctx)
        rows.append(dict(
            config_id=config_id, sampling_mode=cfg.sampling_mode, depth_mode=cfg.depth_mode,
            threads=thread_count, reps=repetitions,
            **{f"{k}_us": med[k] for k in STAGES}, total_us=med["total"], ratio_to_none=float("nan"),
            tensor_bytes=tensor_bytes(ctx), under_sampled_fraction=under, duplication_factor=dup,
            invalid_fraction=invalid, mean_translation_error=results[0].report.mean_error, n_scenes=1,
        ))
    base = next((r["total_us"] for r in rows if r["sampling_mode"] == "none"), None)
    report = BenchReport(BENCH_COLUMNS)
    for r in rows:
        if base:
            r["ratio_to_none"] = r["total_us"] / base
        report.add(**r)
    return report


def _mean_error(results) -> tuple[float, int]:
    errs = [e[1] for _, r in results for e in r.errors]
    return (float(np.mean(errs)) if errs else float("nan")), len(errs)


def density_sweep(base_cfg: PipelineConfig, axis: str = "x_density", factors=(1, 2, 4, 8), seeds=range(20)):
    """Scale one density axis and record memory, census and quantization error.

    ``x_density`` divides the lateral voxel size by each factor (so ``nx``
    scales with it) and runs the resampled pipeline; ``depth_bins`` multiplies
    the number of depth bins. ``area_scaled_bytes`` is what the voxel tensor
    would take if both ground-plane axes were densified by the same factor.
    """
    factors = list(factors)
    if factors != sorted(factors) or not factors or factors[0] <= 0:
        raise ConfigError(f"factors must be positive and ascending, got {factors}")
    axis = axis.replace("-", "_")
    if axis not in ("x_density", "depth_bins"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    seeds = list(seeds)

    report = BenchReport(SWEEP_COLUMNS)
    for f in factors:
        if axis == "x_density":
            sx, sz, sy = base_cfg.voxel.voxel_size
            mode = base_cfg.sampling_mode if base_cfg.sampled else "grid_nearest"
            cfg = replace(
                base_cfg, sampling_mode=mode,
                voxel=replace(base_cfg.voxel, voxel_size=(sx / f, sz, sy)),
            )
        else:
            if int(base_cfg.frustum.depth_bins * f) != base_cfg.frustum.depth_bins * f:
                raise ConfigError(f"depth-bin factor {f} does not give an integer bin count")
            cfg = replace(
                base_cfg, frustum=replace(base_cfg.frustum, depth_bins=int(base_cfg.frustum.depth_bins * f))
            )
        ctx = PipelineContext.build(cfg)
        W, H, D = ctx.grid.shape
        nx, nz, ny = ctx.spec.dims
        C = cfg.channels
        under, dup, invalid = _census_summary(ctx)
        err, n = _mean_error(run_batch(seeds, cfg, thread_count=1))
        frustum = sampling.memory_footprint((C, D, H, W))
        voxel = sampling.memory_footprint((C, nx, nz, ny)) if cfg.sampled else 0
        base_nz = ctx.spec.dims[1]
        report.add(
            axis=axis, factor=f, nx=nx, nz=nz, ny=ny, depth_bins=D,
            voxel_size_x=ctx.spec.voxel_size[0],
            frustum_bytes=frustum, voxel_bytes=voxel, total_bytes=frustum + voxel,
            area_scaled_bytes=sampling.memory_footprint((C, nx, int(base_nz * f), ny)) if cfg.sampled else 0,
            under_sampled_fraction=under, duplication_factor=dup, invalid_fraction=invalid,
            mean_translation_error=err, n_matched=n,
        )
    return report


def e2e_report(seeds, cfg: PipelineConfig, thread_count: int | None = None):
    """Per-scene evaluation rows plus the detections, ``(report, [(seed, det), ...])``."""
    results = run_batch(seeds, cfg, thread_count)
    report = BenchReport(E2E_COLUMNS)
    dets = []
    for scene, r in results:
        depth_err = [e[2] for e in r.errors]
        report.add(
            scene_id=scene.seed, sampling_mode=cfg.sampling_mode, depth_mode=cfg.depth_mode,
            readout=cfg.decode.readout, n_gt=r.report.n_gt, n_det=r.report.n_det,
            n_matched=r.report.n_matched, mean_translation_error=r.report.mean_error,
            median_depth_error=float(np.median(depth_err)) if depth_err else float("nan"),
            total_us=r.timings["total"],
        )
        dets.extend((scene.seed, d) for d in r.detections)
    return report, dets
