"""Seeded synthetic scenes: boxes, an analytic depth map and oracle features.

Objects stand on a ground plane ``camera_height`` meters below the camera.
The depth map is ray-cast against the boxes (nearest surface per pixel,
``inf`` for background). Each object owns one feature channel, imprinted as
a separable Gaussian over the feature cells inside its projected outline and
peaking at its projected center, so a detector reading that channel faces a
pure geometry problem.

Placement rejects candidates until every object is in view, inside the voxel
grid, at least two voxel diagonals from the others on the ground plane, and
not in the same or an adjacent cell as another object on either lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import PersBEVError
from ..geometry import FrustumGrid, WorldPoint
from ..lift import FeatureMap
from ..sampling import VoxelGridSpec
from ..targets import Box3D, PerspectiveLattice, RegularLattice
from .config import PipelineConfig

# (length, width, height) of the template object, meters
TEMPLATE_SIZE = (4.5, 1.9, 1.6)


class SceneError(PersBEVError, RuntimeError):
    """Placement could not satisfy the scene constraints."""


@dataclass(frozen=True, eq=False)
class Scene:
    seed: int
    boxes: tuple[Box3D, ...]
    depth_map: np.ndarray = field(repr=False)
    features: FeatureMap = field(repr=False)


def box_corners(box: Box3D) -> np.ndarray:
    """The 8 corners of a box, shape ``(8, 3)``."""
    l, w, h = box.size
    fwd = np.array([math.sin(box.yaw), 0.0, math.cos(box.yaw)])
    lat = np.array([math.cos(box.yaw), 0.0, -math.sin(box.yaw)])
    up = np.array([0.0, 1.0, 0.0])
    c = np.array(box.center)
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    return c + signs[:, 0:1] * fwd * l / 2 + signs[:, 1:2] * lat * w / 2 + signs[:, 2:3] * up * h / 2


def render_depth(boxes, intr) -> np.ndarray:
    """Per-pixel depth (z) of the nearest box surface, ``inf`` where nothing is hit."""
    u = np.arange(intr.image_w) + 0.5
    v = np.arange(intr.image_h) + 0.5
    rx = ((u - intr.cx) / intr.fx)[None, :]
    ry = ((v - intr.cy) / intr.fy)[:, None]
    rx, ry = np.broadcast_arrays(rx, ry)
    rz = np.ones_like(rx)
    depth = np.full(rx.shape, np.inf)
    for box in boxes:
        fwd = (math.sin(box.yaw), 0.0, math.cos(box.yaw))
        lat = (math.cos(box.yaw), 0.0, -math.sin(box.yaw))
        up = (0.0, 1.0, 0.0)
        c = np.asarray(box.center)
        t_near = np.full(rx.shape, -np.inf)
        t_far = np.full(rx.shape, np.inf)
        for axis, half in zip((fwd, lat, up), np.asarray(box.size) / 2):
            o = -float(np.dot(c, axis))  # ray origin (camera) in box coordinates
            dirn = rx * axis[0] + ry * axis[1] + rz * axis[2]
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-half - o) / dirn
                t2 = (half - o) / dirn
            parallel = dirn == 0
            inside_slab = abs(o) <= half
            lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
            hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
            t_near = np.maximum(t_near, lo)
            t_far = np.minimum(t_far, hi)
        hit = (t_near <= t_far) & (t_near > 0)
        # rays have unit z, so the ray parameter is the depth
        depth = np.where(hit, np.minimum(depth, t_near), depth)
    return depth


def imprint_signatures(boxes, grid: FrustumGrid, channels: int) -> FeatureMap:
    """Oracle feature map with one Gaussian signature channel per box."""
    if len(boxes) > channels:
        raise SceneError(f"{len(boxes)} objects need at least as many channels, have {channels}")
    intr, s = grid.intr, grid.stride
    W, H = grid.feat_w, grid.feat_h
    data = np.zeros((channels, H, W), dtype=np.float32)
    for j, box in enumerate(boxes):
        corners = box_corners(box)
        corners = corners[corners[:, 2] > 1e-3]
        uc = intr.fx * box.center.x / box.center.z + intr.cx
        vc = intr.fy * box.center.y / box.center.z + intr.cy
        us = intr.fx * corners[:, 0] / corners[:, 2] + intr.cx
        vs = intr.fy * corners[:, 1] / corners[:, 2] + intr.cy
        wc, hc = uc / s - 0.5, vc / s - 0.5
        w_lo = max(0, min(int(math.ceil(us.min() / s - 0.5)), int(uc // s)))
        w_hi = min(W - 1, max(int(math.floor(us.max() / s - 0.5)), int(uc // s)))
        h_lo = max(0, min(int(math.ceil(vs.min() / s - 0.5)), int(vc // s)))
        h_hi = min(H - 1, max(int(math.floor(vs.max() / s - 0.5)), int(vc // s)))
        sig_w = max(0.5, (us.max() - us.min()) / (4 * s))
        sig_h = max(0.5, (vs.max() - vs.min()) / (4 * s))
        ww = np.arange(w_lo, w_hi + 1)
        hh = np.arange(h_lo, h_hi + 1)
        gw = np.exp(-0.5 * ((ww - wc) / sig_w) ** 2)
        gh = np.exp(-0.5 * ((hh - hc) / sig_h) ** 2)
        data[j, h_lo:h_hi + 1, w_lo:w_hi + 1] = np.outer(gh, gw)
    return FeatureMap(data)


def _chebyshev(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def synth_scene(
    seed: int,
    n_objects: int,
    cfg: PipelineConfig | None = None,
    grid: FrustumGrid | None = None,
    spec: VoxelGridSpec | None = None,
) -> Scene:
    """Generate a deterministic scene with ``n_objects`` boxes."""
    if n_objects < 0:
        raise SceneError("n_objects must be non-negative")
    cfg = cfg or PipelineConfig()
    grid = grid or cfg.frustum.build()
    spec = spec or cfg.voxel.build()
    sc = cfg.scene
    intr = grid.intr
    persp, regular = PerspectiveLattice(grid), RegularLattice(spec)
    min_gap = 4 * spec.half_diagonal

    z_lo = max(grid.depth_min, spec.z_range[0], sc.min_depth)
    z_hi = min(grid.depth_max, spec.z_range[0] + spec.dims[1] * spec.voxel_size[1]) - 0.5
    if not z_lo < z_hi:
        raise SceneError(f"empty placement depth range [{z_lo}, {z_hi}]")

    rng = np.random.default_rng(seed)
    boxes, cells_p, cells_r = [], [], []
    tries = 0
    while len(boxes) < n_objects:
        tries += 1
        if tries > sc.max_tries * max(1, n_objects):
            raise SceneError(
                f"seed {seed}: placed {len(boxes)} of {n_objects} objects after {tries - 1} tries; "
                f"constraints: spacing >= {min_gap:.3f} m, no shared or adjacent lattice cells"
            )
        size = tuple(np.asarray(TEMPLATE_SIZE) * rng.uniform(0.85, 1.15, 3))
        z = rng.uniform(z_lo, z_hi)
        u = rng.uniform(sc.edge_margin_px, intr.image_w - sc.edge_margin_px)
        x = (u - intr.cx) * z / intr.fx
        y = sc.camera_height - size[2] / 2
        yaw = rng.uniform(-math.pi, math.pi)
        center = WorldPoint(x, y, z)

        cp = persp.locate(center)
        cr = regular.locate(center)
        if cp is None or cr is None:
            continue
        y_idx, y_in = spec.bin_points(np.array(center))
        if not y_in:
            continue
        if any(math.hypot(x - b.center.x, z - b.center.z) < min_gap for b in boxes):
            continue
        if any(_chebyshev(cp, c) < 2 for c in cells_p) or any(_chebyshev(cr, c) < 2 for c in cells_r):
            continue
        boxes.append(Box3D(center, size, yaw, (0.0, 0.0), 0))
        cells_p.append(cp[:2])
        cells_r.append(cr[:2])

    depth = render_depth(boxes, intr).astype(np.float32)
    features = imprint_signatures(boxes, grid, max(cfg.channels, n_objects))
    return Scene(seed, tuple(boxes), depth, features)
