"""Legacy feature-sampling path and the measurements that expose its costs.

Regular BEV detectors resample the lifted frustum feature onto a world
aligned voxel grid, then collapse height. :func:`grid_sample` does this in the
gather direction (each voxel reads the frustum), :func:`voxel_pool` in the
scatter direction (each frustum cell writes into a voxel).

:func:`sampling_census` counts, per depth quartile, how many frustum cells are
never read (under-sampling), how often the read ones are duplicated
(over-sampling), and how much of the voxel grid lies outside the camera's
field of view. :func:`memory_footprint` and :func:`memory_report` give tensor
payload sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .geometry import FrustumGrid
from .lift import Frustum3DFeature

INTERP_MODES = ("nearest", "trilinear")
MAX_TENSOR_BYTES = 2**63 - 1


@dataclass(frozen=True)
class VoxelGridSpec:
    """Regular grid over ``x`` (lateral), ``z`` (depth) and ``y`` (height).

    ``voxel_size`` and ``dims`` are ordered ``(x, z, y)``. Cells cover
    ``[min, min + n * size]`` per axis; any remainder of the range is dropped.
    """

    x_range: tuple[float, float]
    z_range: tuple[float, float]
    y_range: tuple[float, float]
    voxel_size: tuple[float, float, float]
    dims: tuple[int, int, int]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def axis_centers(self):
        """Cell centers ``(xc, zc, yc)`` along each axis."""
        out = []
        for (lo, _), size, n in zip(
            (self.x_range, self.z_range, self.y_range), self.voxel_size, self.dims
        ):
            out.append(lo + (np.arange(n) + 0.5) * size)
        return tuple(out)

    def centers(self) -> np.ndarray:
        """World ``(x, y, z)`` of every voxel, shape ``(nx, nz, ny, 3)``."""
        xc, zc, yc = self.axis_centers()
        xx, zz, yy = np.meshgrid(xc, zc, yc, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1)

    @property
    def half_diagonal(self) -> float:
        """Half the ground-plane diagonal of one cell."""
        return 0.5 * math.hypot(self.voxel_size[0], self.voxel_size[1])

    def bin_points(self, points: np.ndarray):
        """Voxel indices ``(ix, iz, iy)`` for world points ``(..., 3)``.

        A point on a boundary between two cells goes to the lower-index cell;
        the outer faces of the grid are inclusive. Returns the index array of
        shape ``(..., 3)`` and a boolean mask of points inside the grid.
        """
        points = np.asarray(points, np.float64)
        coords = (points[..., 0], points[..., 2], points[..., 1])
        idx, inside = [], np.ones(points.shape[:-1], dtype=bool)
        for c, (lo, _), size, n in zip(
            coords, (self.x_range, self.z_range, self.y_range), self.voxel_size, self.dims
        ):
            t = (c - lo) / size
            i = np.maximum(np.ceil(t) - 1, 0)
            inside &= (t >= 0) & (t <= n)
            idx.append(np.where(inside, i, 0).astype(np.int64))
        return np.stack(idx, axis=-1), inside


def build_voxel_grid(x_range, z_range, y_range, voxel_size) -> VoxelGridSpec:
    ranges = [tuple(map(float, r)) for r in (x_range, z_range, y_range)]
    sizes = tuple(float(s) for s in voxel_size)
    if len(sizes) != 3:
        raise ConfigError(f"voxel_size needs three entries (x, z, y), got {voxel_size}")
    dims = []
    for (lo, hi), size, name in zip(ranges, sizes, "xzy"):
        if not lo < hi:
            raise ConfigError(f"{name}_range must have min < max, got ({lo}, {hi})")
        if not size > 0:
            raise ConfigError(f"voxel size along {name} must be positive, got {size}")
        # tolerance guards extents that are exact multiples in decimal but not in binary
        n = int(math.floor((hi - lo) / size + 1e-9))
        if n < 1:
            raise ConfigError(f"{name} extent {hi - lo} is smaller than voxel size {size}")
        dims.append(n)
    return VoxelGridSpec(ranges[0], ranges[1], ranges[2], sizes, tuple(dims))


def default_voxel_grid(size: float = 0.64) -> VoxelGridSpec:
    """Depth [2, 58], lateral [-40, 40], height [-5, 3] meters."""
    return build_voxel_grid((-40.0, 40.0), (2.0, 58.0), (-5.0, 3.0), (size, size, size))


@dataclass(frozen=True, eq=False)
class SampledBEVFeature:
    """Height-collapsed voxel feature.

    ``data`` is ``(C, nx, nz)``; ``validity_mask`` flags BEV cells with at
    least one in-view voxel and ``voxel_mask`` keeps the per-voxel flags.
    Cells with no in-view voxel carry the fill value.
    """

    data: np.ndarray
    validity_mask: np.ndarray
    voxel_mask: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Precomputed voxel-to-frustum gather indices for one (grid, spec) pair.

    ``index`` has shape ``(n_valid, corners)`` into the flattened
    ``(D, H, W)`` frustum; ``weight`` matches it. ``valid`` is the flat voxel
    mask in ``(nx, nz, ny)`` order.
    """

    interp: str
    valid: np.ndarray
    index: np.ndarray
    weight: np.ndarray
    source_shape: tuple[int, int, int]
    dims: tuple[int, int, int]


def _voxel_frustum_coords(grid: FrustumGrid, spec: VoxelGridSpec):
    pts = spec.centers().reshape(-1, 3)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    intr = grid.intr
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * x / z + intr.cx
        v = intr.fy * y / z + intr.cy
    in_fov = (
        (z > 0)
        & (u >= 0) & (u < intr.image_w)
        & (v >= 0) & (v < intr.image_h)
        & (z >= grid.depth_min) & (z <= grid.depth_max)
    )
    return u, v, z, in_fov


def plan_grid_sample(grid: FrustumGrid, spec: VoxelGridSpec, interp: str = "nearest") -> SamplingPlan:
    """Project every voxel center into the frustum and record what it reads."""
    if interp not in INTERP_MODES:
        raise ConfigError(f"unknown interpolation {interp!r}")
    W, H, D = grid.shape
    u, v, z, valid = _voxel_frustum_coords(grid, spec)
    u, v, z = u[valid], v[valid], z[valid]

    if interp == "nearest":
        w = np.floor(u / grid.stride).astype(np.int64)
        h = np.floor(v / grid.stride).astype(np.int64)
        k = grid.depth_bin_index(z)
        index = ((k * H + h) * W + w)[:, None]
        weight = np.ones_like(index, dtype=np.float64)
    else:
        wf, hf, kf = grid.to_cell_coords(u, v, z)
        corners_i, corners_w = [], []
        axes = []
        for f, n in ((kf, D), (hf, H), (wf, W)):
            i0 = np.floor(f)
            t = f - i0
            i0 = i0.astype(np.int64)
            lo = np.clip(i0, 0, n - 1)
            hi = np.clip(i0 + 1, 0, n - 1)
            axes.append(((lo, 1.0 - t), (hi, t)))
        for ck in axes[0]:
            for ch in axes[1]:
                for cw in axes[2]:
                    corners_i.append((ck[0] * H + ch[0]) * W + cw[0])
                    corners_w.append(ck[1] * ch[1] * cw[1])
        index = np.stack(corners_i, axis=1)
        weight = np.stack(corners_w, axis=1)
    return SamplingPlan(interp, valid, index, weight, (D, H, W), spec.dims)


def _check_f3d(f3d: Frustum3DFeature, grid: FrustumGrid):
    W, H, D = grid.shape
    if f3d.data.ndim != 4 or f3d.data.shape[1:] != (D, H, W):
        raise ShapeError(
            f"lifted feature {f3d.data.shape} does not match grid (C, {D}, {H}, {W})"
        )


def gather_voxels(
    f3d: Frustum3DFeature, plan: SamplingPlan, fill: float = 0.0, out: np.ndarray | None = None
) -> np.ndarray:
    """Materialize the ``(C, nx * nz * ny)`` voxel tensor described by ``plan``.

    ``out`` may supply a preallocated float32 buffer of that shape to reuse.
    """
    C = f3d.data.shape[0]
    if plan.source_shape != f3d.data.shape[1:]:
        raise ShapeError("sampling plan was built for a different frustum shape")
    nx, nz, ny = plan.dims
    flat = f3d.data.reshape(C, -1)
    if out is None:
        voxels = np.full((C, nx * nz * ny), fill, dtype=np.float32)
    else:
        if out.shape != (C, nx * nz * ny) or out.dtype != np.float32:
            raise ShapeError(f"output buffer {out.shape} {out.dtype} does not match ({C}, {nx * nz * ny}) float32")
        voxels = out
        voxels[:, ~plan.valid] = fill
    if plan.interp == "nearest":
        voxels[:, plan.valid] = flat[:, plan.index[:, 0]]
    else:
        acc = np.zeros((C, plan.index.shape[0]), dtype=np.float64)
        for j in range(plan.index.shape[1]):
            acc += flat[:, plan.index[:, j]] * plan.weight[:, j]
        voxels[:, plan.valid] = acc
    return voxels


def grid_sample(
    f3d: Frustum3DFeature,
    grid: FrustumGrid,
    spec: VoxelGridSpec,
    interp: str = "nearest",
    fill: float = 0.0,
    plan: SamplingPlan | None = None,
) -> SampledBEVFeature:
    """Gather the frustum feature onto the voxel grid and collapse height.

    Voxels outside the camera FOV hold ``fill``; the height collapse sums only
    in-view voxels. Pass a ``plan`` from :func:`plan_grid_sample` to reuse the
    projection across calls.
    """
    _check_f3d(f3d, grid)
    if plan is None:
        plan = plan_grid_sample(grid, spec, interp)
    elif plan.interp != interp or plan.dims != spec.dims:
        raise ShapeError("sampling plan was built for a different spec or interpolation")
    voxels = gather_voxels(f3d, plan, fill)
    return collapse_voxels(voxels, plan.valid, spec.dims, fill)


def collapse_voxels(voxels, valid, dims, fill: float = 0.0) -> SampledBEVFeature:
    """Sum in-view voxels over height; ``(C, nx*nz*ny) -> (C, nx, nz)``."""
    C = voxels.shape[0]
    nx, nz, ny = dims
    voxels = voxels.reshape(C, nx, nz, ny)
    voxel_mask = valid.reshape(nx, nz, ny)
    if fill != 0:
        voxels = np.where(voxel_mask[None], voxels, np.float32(0))
    bev = voxels.sum(axis=-1, dtype=np.float32)
    col_valid = voxel_mask.any(axis=-1)
    if fill != 0:
        bev[:, ~col_valid] = fill
    return SampledBEVFeature(bev, col_valid, voxel_mask)


def plan_voxel_pool(grid: FrustumGrid, spec: VoxelGridSpec):
    """Flat target voxel for every frustum cell in ``(D, H, W)`` order, -1 if outside."""
    anchors = np.transpose(grid.world_anchors, (2, 1, 0, 3)).reshape(-1, 3)
    idx, inside = spec.bin_points(anchors)
    nx, nz, ny = spec.dims
    target = (idx[:, 0] * nz + idx[:, 1]) * ny + idx[:, 2]
    return np.where(inside, target, -1)


def pool_voxels(f3d: Frustum3DFeature, target: np.ndarray, n_vox: int):
    """Scatter-sum frustum cells into voxels; returns ``(voxels, occupied)``.

    Accumulation runs in a fixed order (channel, then source cell) so results
    do not depend on how callers partition work.
    """
    C = f3d.data.shape[0]
    keep = target >= 0
    src = f3d.data.reshape(C, -1)[:, keep]
    tgt = target[keep]
    flat_index = (np.arange(C)[:, None] * n_vox + tgt[None, :]).ravel()
    sums = np.bincount(flat_index, weights=src.ravel(), minlength=C * n_vox)
    occupied = np.bincount(tgt, minlength=n_vox) > 0
    return sums.reshape(C, n_vox).astype(np.float32), occupied


def voxel_pool(
    f3d: Frustum3DFeature,
    grid: FrustumGrid,
    spec: VoxelGridSpec,
    target: np.ndarray | None = None,
) -> SampledBEVFeature:
    """Scatter-sum every frustum cell into the voxel holding its world anchor.

    Empty voxels are zero and flagged invalid; ``target`` from
    :func:`plan_voxel_pool` may be passed to skip the binning.
    """
    _check_f3d(f3d, grid)
    if target is None:
        target = plan_voxel_pool(grid, spec)
    voxels, occupied = pool_voxels(f3d, target, spec.n_voxels)
    return collapse_voxels(voxels, occupied, spec.dims, 0.0)


@dataclass(frozen=True)
class QuartileRecord:
    quartile: int
    depth_lo: float
    depth_hi: float
    n_sources: int
    n_referenced: int
    n_references: int
    n_voxels: int
    n_invalid: int

    @property
    def under_sampled_fraction(self) -> float:
        return 1.0 - self.n_referenced / self.n_sources if self.n_sources else 0.0

    @property
    def duplication_factor(self) -> float:
        return self.n_references / self.n_referenced if self.n_referenced else float("nan")

    @property
    def invalid_cell_fraction(self) -> float:
        return self.n_invalid / self.n_voxels if self.n_voxels else 0.0


@dataclass(frozen=True)
class SamplingCensus:
    records: tuple[QuartileRecord, ...]
    n_sources: int
    n_referenced: int
    n_references: int
    n_voxels: int
    n_invalid: int

    @property
    def under_sampled_fraction(self) -> float:
        return 1.0 - self.n_referenced / self.n_sources

    @property
    def duplication_factor(self) -> float:
        return self.n_references / self.n_referenced if self.n_referenced else float("nan")

    @property
    def invalid_cell_fraction(self) -> float:
        return self.n_invalid / self.n_voxels


def depth_quartile(depth, depth_min: float, depth_max: float) -> np.ndarray:
    """Quartile 0..3 of ``[depth_min, depth_max]`` holding each depth (clipped)."""
    q = np.floor((np.asarray(depth, np.float64) - depth_min) / ((depth_max - depth_min) / 4))
    return np.clip(q, 0, 3).astype(np.int64)


def sampling_census(grid: FrustumGrid, spec: VoxelGridSpec, interp: str = "nearest") -> SamplingCensus:
    """Exhaustively count the nearest-neighbour voxel-to-frustum reference map.

    Sources are grouped by the quartile of their depth-bin center, voxels by
    the quartile of their center depth.
    """
    if interp != "nearest":
        raise ConfigError("the census is defined for nearest-neighbour sampling only")
    plan = plan_grid_sample(grid, spec, "nearest")
    W, H, D = grid.shape
    counts = np.bincount(plan.index[:, 0], minlength=D * H * W).reshape(D, H * W)

    src_q = depth_quartile(grid.bin_centers, grid.depth_min, grid.depth_max)
    _, zc, _ = spec.axis_centers()
    vox_q = np.broadcast_to(
        depth_quartile(zc, grid.depth_min, grid.depth_max)[None, :, None], spec.dims
    ).ravel()
    span = (grid.depth_max - grid.depth_min) / 4

    records = []
    for q in range(4):
        c = counts[src_q == q]
        in_q = vox_q == q
        records.append(
            QuartileRecord(
                quartile=q,
                depth_lo=grid.depth_min + q * span,
                depth_hi=grid.depth_min + (q + 1) * span,
                n_sources=int(c.size),
                n_referenced=int(np.count_nonzero(c)),
                n_references=int(c.sum()),
                n_voxels=int(in_q.sum()),
                n_invalid=int((in_q & ~plan.valid).sum()),
            )
        )
    return SamplingCensus(
        records=tuple(records),
        n_sources=int(counts.size),
        n_referenced=int(np.count_nonzero(counts)),
        n_references=int(counts.sum()),
        n_voxels=spec.n_voxels,
        n_invalid=int((~plan.valid).sum()),
    )


def perspective_invalid_fraction(grid: FrustumGrid) -> float:
    """Fraction of perspective BEV cells whose anchors fall outside the FOV.

    Computed by re-projecting every anchor; zero by construction for any
    valid grid.
    """
    a = grid.world_anchors.reshape(-1, 3)
    intr = grid.intr
    u = intr.fx * a[:, 0] / a[:, 2] + intr.cx
    v = intr.fy * a[:, 1] / a[:, 2] + intr.cy
    ok = (u >= 0) & (u < intr.image_w) & (v >= 0) & (v < intr.image_h)
    ok &= (a[:, 2] >= grid.depth_min) & (a[:, 2] <= grid.depth_max)
    return float(1.0 - ok.mean())


def memory_footprint(shape, bytes_per_element: int = 4) -> int:
    """Payload bytes of a dense tensor. Raises ``OverflowError`` past 2**63 - 1."""
    total = int(bytes_per_element)
    if total <= 0:
        raise ConfigError("bytes_per_element must be positive")
    for n in shape:
        n = int(n)
        if n < 0:
            raise ConfigError(f"negative dimension in shape {tuple(shape)}")
        total *= n
    if total > MAX_TENSOR_BYTES:
        raise OverflowError(f"tensor of shape {tuple(shape)} exceeds {MAX_TENSOR_BYTES} bytes")
    return total


def memory_report(
    grid: FrustumGrid,
    spec: VoxelGridSpec,
    channels: int,
    census: SamplingCensus | None = None,
    bytes_per_element: int = 4,
) -> dict:
    """Side-by-side payload sizes of the perspective and voxel representations."""
    if census is None:
        census = sampling_census(grid, spec)
    W, H, D = grid.shape
    nx, nz, ny = spec.dims
    voxel = memory_footprint((channels, nx, nz, ny), bytes_per_element)
    return {
        "frustum_bytes": memory_footprint((channels, D, H, W), bytes_per_element),
        "voxel_bytes": voxel,
        "invalid_waste_bytes": int(round(census.invalid_cell_fraction * voxel)),
        "persp_bev_bytes": memory_footprint((channels, D, W), bytes_per_element),
        "voxel_bev_bytes": memory_footprint((channels, nx, nz), bytes_per_element),
    }
