"""Learning targets on the perspective (w, d) lattice and the training losses.

An object is assigned to the lattice cell nearest to its projected center.
That cell gets a heatmap peak of exactly 1 surrounded by a Gaussian whose
radius is measured in *local* cell units: a lateral cell is ``d * stride / fx``
meters wide, so the same object covers fewer cells the farther away it is.

Attribute channels, in order::

    dw, dd         sub-cell offset of the center (cell units)
    height         center y (m)
    l, w, h        box size, log-encoded unless ``size_mode == "linear"``
    sin, cos       of the local yaw (or global yaw with ``local_yaw=False``)
    vx, vz         velocity, carried opaquely
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .geometry import FrustumGrid, WorldPoint, anchor_spacing_profile
from .sampling import VoxelGridSpec

ATTR_CHANNELS = ("dw", "dd", "height", "l", "w", "h", "sin", "cos", "vx", "vz")
N_ATTRS = len(ATTR_CHANNELS)
DIR_IGNORE = -1


def wrap_angle(a):
    """Wrap angles to ``(-pi, pi]``."""
    return math.pi - np.mod(math.pi - np.asarray(a, np.float64), 2 * math.pi)


@dataclass(frozen=True)
class Box3D:
    center: WorldPoint
    size: tuple[float, float, float]
    yaw: float
    velocity: tuple[float, float] = (0.0, 0.0)
    class_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", WorldPoint(*map(float, self.center)))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if len(self.size) != 3 or not all(s > 0 for s in self.size):
            raise DomainError(f"box sizes must be three positive values, got {self.size}")
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))


@dataclass(frozen=True)
class LossConfig:
    """Target-encoding and loss settings.

    ``attr_weights`` scales each attribute channel in the L1 term; velocity is
    off by default because synthetic objects are static.
    """

    w_d: float = 3.0
    heatmap_radius_min: int = 2
    prob_clamp_eps: float = 1e-6
    num_classes: int = 1
    size_mode: str = "log"
    local_yaw: bool = True
    attr_weights: tuple[float, ...] = (1.0,) * 8 + (0.0, 0.0)

    def __post_init__(self):
        if self.w_d < 0:
            raise ConfigError(f"w_d must be non-negative, got {self.w_d}")
        if self.heatmap_radius_min < 0:
            raise ConfigError("heatmap_radius_min must be non-negative")
        if self.size_mode not in ("log", "linear"):
            raise ConfigError(f"size_mode must be 'log' or 'linear', got {self.size_mode!r}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1")
        if len(self.attr_weights) != N_ATTRS:
            raise ConfigError(f"attr_weights needs {N_ATTRS} entries")


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Dense targets over a ``(W, D)`` lattice.

    ``assigned`` lists ``(box_index, w, d)`` for every encoded box, in input
    order; ``n_skipped`` counts boxes outside the view.
    """

    heatmap: np.ndarray
    attrs: np.ndarray
    dir_class: np.ndarray
    mask: np.ndarray
    assigned: tuple[tuple[int, int, int], ...] = ()
    n_skipped: int = 0
    lattice: object = field(default=None, repr=False)


def local_yaw(yaw: float, center) -> float:
    """Yaw relative to the viewing ray through ``center``."""
    x, _, z = center
    if not z > 0:
        raise DomainError("local yaw needs a center in front of the camera")
    return float(wrap_angle(yaw - math.atan2(x, z)))


def direction_class(yaw: float) -> int:
    """0 for wrapped yaw in ``[-pi/2, pi/2)``, else 1."""
    w = float(wrap_angle(yaw))
    return 0 if -math.pi / 2 <= w < math.pi / 2 else 1


class PerspectiveLattice:
    """The (column, depth-bin) lattice of a :class:`FrustumGrid`."""

    supports_local_yaw = True

    def __init__(self, grid: FrustumGrid):
        self.grid = grid
        self.dims = (grid.feat_w, grid.depth_bins)
        self._spacing = anchor_spacing_profile(grid)[:, 1] if grid.feat_w >= 2 else None

    def locate(self, center):
        """``(w, d, dw, dd)`` of a world point, or ``None`` outside the frustum."""
        g, intr = self.grid, self.grid.intr
        x, y, z = center
        if not z > 0:
            return None
        u = intr.fx * x / z + intr.cx
        v = intr.fy * y / z + intr.cy
        if not (0 <= u < intr.image_w and 0 <= v < intr.image_h):
            return None
        k = int(g.depth_bin_index(z))
        if k < 0:
            return None
        wf, _, kf = g.to_cell_coords(u, v, z)
        w = min(int(math.floor(u / g.stride)), g.feat_w - 1)
        return w, k, float(wf) - w, float(kf) - k

    def cell_size(self, w: int, d: int):
        """Metric (lateral, depth) extent of one cell at depth bin ``d``."""
        if self._spacing is None:
            lateral = self.grid.bin_centers[d] * self.grid.stride / self.grid.intr.fx
        else:
            lateral = self._spacing[d]
        return float(lateral), self.grid.bin_width

    def position(self, wf, df):
        """Ground-plane ``(x, z)`` of a fractional cell coordinate."""
        g = self.grid
        u, _, z = g.from_cell_coords(wf, 0.0, df)
        return (u - g.intr.cx) * z / g.intr.fx, z


class RegularLattice:
    """The (x, z) lattice of a voxel grid; centers snap to cells, no offsets."""

    supports_local_yaw = False

    def __init__(self, spec: VoxelGridSpec):
        self.spec = spec
        self.dims = spec.dims[:2]
        self._xc, self._zc, _ = spec.axis_centers()

    def locate(self, center):
        x, _, z = center
        y_mid = 0.5 * sum(self.spec.y_range)
        idx, inside = self.spec.bin_points(np.array([x, y_mid, z]))
        if not inside:
            return None
        return int(idx[0]), int(idx[1]), 0.0, 0.0

    def cell_size(self, w: int, d: int):
        return self.spec.voxel_size[0], self.spec.voxel_size[1]

    def position(self, wf, df):
        sx, sz = self.spec.voxel_size[:2]
        return self._xc[0] + np.asarray(wf) * sx, self._zc[0] + np.asarray(df) * sz


def lattice_for(grid):
    if isinstance(grid, FrustumGrid):
        return PerspectiveLattice(grid)
    if isinstance(grid, VoxelGridSpec):
        return RegularLattice(grid)
    if isinstance(grid, (PerspectiveLattice, RegularLattice)):
        return grid
    raise TypeError(f"no target lattice for {type(grid).__name__}")


def _splat(heatmap: np.ndarray, w: int, d: int, rw: int, rd: int):
    W, D = heatmap.shape
    sw, sd = (2 * rw + 1) / 6.0, (2 * rd + 1) / 6.0
    w0, w1 = max(0, w - rw), min(W, w + rw + 1)
    d0, d1 = max(0, d - rd), min(D, d + rd + 1)
    dw = np.arange(w0, w1)[:, None] - w
    dd = np.arange(d0, d1)[None, :] - d
    g = np.exp(-(dw**2 / (2 * sw**2) + dd**2 / (2 * sd**2))).astype(np.float32)
    np.maximum(heatmap[w0:w1, d0:d1], g, out=heatmap[w0:w1, d0:d1])


def encode_targets(boxes, grid, cfg: LossConfig = LossConfig()) -> TargetSet:
    """Encode ground-truth boxes as heatmap and attribute targets.

    ``grid`` is normally a :class:`FrustumGrid` (perspective lattice). A
    :class:`VoxelGridSpec` gives the regular-BEV equivalent used by the
    sampled baseline, where centers snap to cell centers and offsets are 0.
    When two boxes claim one cell the later box in ``boxes`` wins.
    """
    lat = lattice_for(grid)
    W, D = lat.dims
    heatmap = np.zeros((cfg.num_classes, W, D), dtype=np.float32)
    attrs = np.zeros((N_ATTRS, W, D), dtype=np.float64)
    dir_cls = np.full((W, D), DIR_IGNORE, dtype=np.int8)
    mask = np.zeros((W, D), dtype=bool)
    use_local = cfg.local_yaw and lat.supports_local_yaw
    assigned, skipped = [], 0

    for i, box in enumerate(boxes):
        if not 0 <= box.class_id < cfg.num_classes:
            raise ConfigError(f"box {i} has class {box.class_id}, config has {cfg.num_classes}")
        loc = lat.locate(box.center)
        if loc is None:
            skipped += 1
            continue
        w, d, dw, dd = loc
        l, bw, bh = box.size
        half_diag = 0.5 * math.hypot(l, bw)
        cw, cd = lat.cell_size(w, d)
        rw = max(cfg.heatmap_radius_min, int(half_diag / cw))
        rd = max(cfg.heatmap_radius_min, int(half_diag / cd))
        _splat(heatmap[box.class_id], w, d, rw, rd)

        alpha = local_yaw(box.yaw, box.center) if use_local else box.yaw
        sizes = np.log(box.size) if cfg.size_mode == "log" else np.asarray(box.size)
        attrs[:, w, d] = (
            dw, dd, box.center.y, *sizes,
            math.sin(alpha), math.cos(alpha), *box.velocity,
        )
        dir_cls[w, d] = direction_class(box.yaw)
        mask[w, d] = True
        assigned.append((i, w, d))

    return TargetSet(heatmap, attrs, dir_cls, mask, tuple(assigned), skipped, lat)


def _bce(p, t):
    return -(t * np.log(p) + (1.0 - t) * np.log1p(-p))


def detection_loss(pred_obj, pred_attr, t: TargetSet, cfg: LossConfig = LossConfig(), pred_dir=None):
    """Heatmap cross-entropy plus masked L1 on attributes.

    ``pred_obj`` has the heatmap's shape and holds probabilities; they are
    clamped to ``[eps, 1 - eps]``. The cross-entropy is averaged over every
    heatmap cell, the L1 term over positive cells (sum over channels, weighted
    by ``cfg.attr_weights``). ``pred_dir``, if given, is the probability of
    direction class 1 per cell and adds a binary cross-entropy on positives.

    Returns ``(total, {"obj": ..., "attr": ..., "dir": ...})``.
    """
    pred_obj = np.asarray(pred_obj, np.float64)
    pred_attr = np.asarray(pred_attr, np.float64)
    if pred_obj.shape != t.heatmap.shape:
        raise ShapeError(f"objectness {pred_obj.shape} vs target {t.heatmap.shape}")
    if pred_attr.shape != t.attrs.shape:
        raise ShapeError(f"attributes {pred_attr.shape} vs target {t.attrs.shape}")
    eps = cfg.prob_clamp_eps
    obj = float(_bce(np.clip(pred_obj, eps, 1 - eps), t.heatmap.astype(np.float64)).mean())

    n_pos = int(t.mask.sum())
    if n_pos:
        diff = np.abs(pred_attr[:, t.mask] - t.attrs[:, t.mask])
        attr = float((np.asarray(cfg.attr_weights)[:, None] * diff).sum() / n_pos)
    else:
        attr = 0.0

    direction = 0.0
    if pred_dir is not None:
        pred_dir = np.asarray(pred_dir, np.float64)
        if pred_dir.shape != t.mask.shape:
            raise ShapeError(f"direction {pred_dir.shape} vs lattice {t.mask.shape}")
        sel = t.mask & (t.dir_class != DIR_IGNORE)
        if sel.any():
            q = np.clip(pred_dir[sel], eps, 1 - eps)
            direction = float(_bce(q, t.dir_class[sel].astype(np.float64)).mean())

    return obj + attr + direction, {"obj": obj, "attr": attr, "dir": direction}


def depth_loss(depth_logits, gt_depth, grid: FrustumGrid):
    """Per-pixel softmax cross-entropy against the bin holding the true depth.

    Pixels whose depth is outside the grid's range (including ``inf``
    background) are excluded. Returns ``(loss, grad)`` with the gradient
    with respect to the logits, averaged over valid pixels.
    """
    x = np.asarray(depth_logits, np.float64)
    gt = np.asarray(gt_depth, np.float64)
    if x.ndim != 3 or x.shape[1:] != gt.shape or x.shape[0] != grid.depth_bins:
        raise ShapeError(f"logits {x.shape} incompatible with gt {gt.shape} / {grid.depth_bins} bins")
    idx = grid.depth_bin_index(gt)
    valid = idx >= 0
    n = int(valid.sum())
    grad = np.zeros_like(x)
    if n == 0:
        return 0.0, grad

    shifted = x - x.max(axis=0, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    logp = shifted - lse
    hh, ww = np.nonzero(valid)
    loss = float(-logp[idx[hh, ww], hh, ww].sum() / n)

    p = np.exp(logp)
    p[idx[hh, ww], hh, ww] -= 1.0
    grad = np.where(valid[None], p, 0.0) / n
    return loss, grad


def total_loss(det: float, depth: float, cfg: LossConfig = LossConfig()) -> float:
    if not (math.isfinite(det) and math.isfinite(depth)):
        raise DomainError("loss terms must be finite")
    return det + cfg.w_d * depth
