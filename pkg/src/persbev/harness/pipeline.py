"""End-to-end pipeline: lift, optional resampling, collapse, readout, match."""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import lift, sampling
from ..decode import Detection, MatchReport, decode_boxes, extract_peaks, match_and_score
from ..errors import ConfigError
from ..geometry import FrustumGrid
from ..sampling import VoxelGridSpec
from ..targets import N_ATTRS, TargetSet, encode_targets
from .config import PipelineConfig
from .scene import Scene, synth_scene

STAGES = ("lift", "sample", "collapse", "decode")


@dataclass(eq=False)
class PipelineContext:
    """Geometry and sampling plans shared by every run of one config.

    Precomputing the sampling plan mirrors deployed grid-sampling detectors,
    whose sampling grid is fixed by calibration.
    """

    cfg: PipelineConfig
    grid: FrustumGrid
    spec: VoxelGridSpec | None
    plan: sampling.SamplingPlan | None = None
    pool_target: np.ndarray | None = None
    _local: threading.local = field(default_factory=threading.local, repr=False)

    @classmethod
    def build(cls, cfg: PipelineConfig) -> "PipelineContext":
        cfg.validate()
        grid = cfg.frustum.build()
        spec = cfg.voxel.build()
        ctx = cls(cfg, grid, spec)
        if cfg.sampling_mode in ("grid_nearest", "grid_trilinear"):
            ctx.plan = sampling.plan_grid_sample(grid, spec, cfg.sampling_mode.split("_")[1])
        elif cfg.sampling_mode == "voxel_pool":
            ctx.pool_target = sampling.plan_voxel_pool(grid, spec)
        return ctx

    @property
    def lattice(self):
        return self.spec if self.cfg.sampled else self.grid

    def workspace(self, name: str, shape) -> np.ndarray:
        """Per-thread float32 buffer reused across runs, like a device allocator would.

        Keeps large per-run allocations (and their page faults) out of timings.
        """
        shape = tuple(shape)
        buf = getattr(self._local, name, None)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape, dtype=np.float32)
            setattr(self._local, name, buf)
        return buf


@dataclass(eq=False)
class PipelineResult:
    detections: list[Detection]
    report: MatchReport
    timings: dict[str, float]
    # per object (gt_index, ground-plane error, depth error) for signature readout,
    # per matched pair otherwise
    errors: list[tuple[int, float, float]] = field(default_factory=list)
    bev_shape: tuple[int, ...] = ()
    n_dropped: int = 0


def build_depth(scene: Scene, ctx: PipelineContext) -> lift.DepthDistribution:
    cfg, grid = ctx.cfg, ctx.grid
    shape = (grid.depth_bins, grid.feat_h, grid.feat_w)
    mode = cfg.depth_mode
    if mode in ("onehot_oracle", "predicted_stub"):
        gt = lift.feature_depth(scene.depth_map, grid.stride)
        if mode == "onehot_oracle":
            return lift.make_depth_mode("onehot_oracle", gt_depth=gt, grid=grid)
        # peaked logits around the true depth; flat where the pixel sees background
        with np.errstate(invalid="ignore"):
            logits = -0.5 * ((grid.bin_centers[:, None, None] - gt[None]) / grid.bin_width) ** 2
        logits = np.where(np.isfinite(logits), logits, 0.0)
        return lift.softmax_depth(logits)
    return lift.make_depth_mode(mode, seed=cfg.depth_seed, shape=shape)


def _bev_lattice_map(bev: np.ndarray, sampled: bool) -> np.ndarray:
    # perspective BEV is (C, D, W); targets use (W, D)
    return bev if sampled else np.transpose(bev, (0, 2, 1))


def _targets_readout(targets: TargetSet, ctx: PipelineContext):
    dc = ctx.cfg.decode
    peaks = extract_peaks(targets.heatmap, dc.k_max, dc.threshold)
    return decode_boxes(peaks, targets.attrs, targets.lattice, targets.dir_class, ctx.cfg.loss)


def _signature_readout(bev_map: np.ndarray, targets: TargetSet, boxes, ctx: PipelineContext, seed: int):
    dc = ctx.cfg.decode
    cell_of = {i: (w, d) for i, w, d in targets.assigned}
    rng = np.random.default_rng([seed, dc.jitter_seed])
    dets, dropped = [], 0
    for j in range(len(boxes)):
        ch = bev_map[j].astype(np.float64)
        noise = dc.jitter * rng.random(ch.shape)
        top = ch.max()
        if not top > 0 or j not in cell_of:
            continue
        score = ch / top * (1.0 - dc.jitter) + noise
        peaks = extract_peaks(score[None], k_max=1, threshold=dc.threshold)
        if not peaks:
            continue
        (w, d) = peaks[0].cell
        tw, td = cell_of[j]
        col = targets.attrs[:, tw, td].copy()
        if (w, d) != (tw, td):
            col[:2] = 0.0  # no valid offset away from the object's own cell
        attrs = np.zeros((N_ATTRS,) + bev_map.shape[1:])
        attrs[:, w, d] = col
        dir_map = np.full(bev_map.shape[1:], targets.dir_class[tw, td], dtype=np.int8)
        got, n_bad = decode_boxes(peaks, attrs, targets.lattice, dir_map, ctx.cfg.loss)
        dropped += n_bad
        for det in got:
            dets.append(Detection(det.box, det.score, det.cell, det.class_id, channel=j))
    return dets, dropped


def run_pipeline(scene: Scene, cfg: PipelineConfig, ctx: PipelineContext | None = None) -> PipelineResult:
    """Run one scene through the configured pipeline.

    ``sampling_mode="none"`` collapses the lifted frustum directly; the
    sampled modes resample onto the voxel grid first. Stage timings are in
    microseconds from a monotonic clock.
    """
    if ctx is None:
        ctx = PipelineContext.build(cfg)
    elif ctx.cfg is not cfg:
        raise ConfigError("pipeline context was built for a different config")
    grid = ctx.grid
    if scene.features.shape[1:] != (grid.feat_h, grid.feat_w):
        raise ConfigError(
            f"scene features {scene.features.shape} do not match the grid ({grid.feat_h}, {grid.feat_w})"
        )
    if cfg.decode.readout == "signature" and len(scene.boxes) > scene.features.shape[0]:
        raise ConfigError("signature readout needs one feature channel per object")

    clock = time.perf_counter_ns
    t = {}
    t_start = clock()

    t0 = clock()
    depth = build_depth(scene, ctx)
    C = scene.features.shape[0]
    f3d = lift.outer_product_lift(scene.features, depth, out=ctx.workspace("f3d", (C,) + depth.data.shape))
    t["lift"] = clock() - t0

    t["sample"] = 0
    if cfg.sampled:
        t0 = clock()
        if cfg.sampling_mode == "voxel_pool":
            voxels, valid = sampling.pool_voxels(f3d, ctx.pool_target, ctx.spec.n_voxels)
        else:
            voxels = sampling.gather_voxels(f3d, ctx.plan, out=ctx.workspace("voxels", (C, ctx.spec.n_voxels)))
            valid = ctx.plan.valid
        t["sample"] = clock() - t0

    t0 = clock()
    if cfg.sampled:
        bev = sampling.collapse_voxels(voxels, valid, ctx.spec.dims).data
    else:
        bev = lift.collapse_height(f3d).data
    t["collapse"] = clock() - t0

    t0 = clock()
    targets = encode_targets(scene.boxes, ctx.lattice, cfg.loss)
    if cfg.decode.readout == "targets":
        dets, dropped = _targets_readout(targets, ctx)
    else:
        bev_map = _bev_lattice_map(bev, cfg.sampled)
        dets, dropped = _signature_readout(bev_map, targets, scene.boxes, ctx, scene.seed)
    t["decode"] = clock() - t0
    t["total"] = clock() - t_start

    report = match_and_score(scene.boxes, dets, cfg.decode.max_match_dist)
    if cfg.decode.readout == "signature":
        errors = [
            (d.channel, _ground_err(scene.boxes[d.channel], d), abs(scene.boxes[d.channel].center.z - d.box.center.z))
            for d in dets
        ]
    else:
        errors = [
            (gi, dist, abs(scene.boxes[gi].center.z - dets[di].box.center.z))
            for gi, di, dist in report.pairs
        ]
    timings = {k: v / 1000.0 for k, v in t.items()}
    return PipelineResult(dets, report, timings, errors, tuple(bev.shape), dropped)


def _ground_err(gt, det) -> float:
    return float(np.hypot(gt.center.x - det.box.center.x, gt.center.z - det.box.center.z))


def run_batch(seeds, cfg: PipelineConfig, thread_count: int | None = None):
    """Generate and run one scene per seed; returns ``[(scene, result), ...]``.

    With ``thread_count > 1`` scenes run concurrently; results are identical
    to the sequential order because every run is independent.
    """
    ctx = PipelineContext.build(cfg)
    threads = cfg.thread_count if thread_count is None else thread_count

    def one(seed):
        scene = synth_scene(seed, cfg.scene.n_objects, cfg, ctx.grid, ctx.spec)
        return scene, run_pipeline(scene, cfg, ctx)

    seeds = list(seeds)
    if threads <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seeds))
