"""Pinhole camera model and perspective frustum anchors.

Coordinates are camera-centric: ``x`` to the right, ``y`` down (image
vertical), ``z`` forward (depth), all in meters. Pixel coordinates ``(u, v)``
follow the image convention with the origin at the top-left corner.

A :class:`FrustumGrid` places anchors uniformly in *frustum* space (one per
feature cell and depth bin) and inverse-projects them into the world. The
resulting world anchors are dense near the camera and sparse far away, which
is exactly the layout of the lifted image features, so no resampling is
needed to align features with anchors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_w: int
    image_h: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.image_w > 0 and self.image_h > 0):
            raise ConfigError(
                f"image size must be positive, got {self.image_w}x{self.image_h}"
            )

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 intrinsic matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def centered(cls, focal: float, image_w: int, image_h: int) -> "CameraIntrinsics":
        """Square pixels with the principal point at the image center."""
        return cls(focal, focal, image_w / 2.0, image_h / 2.0, image_w, image_h)


def project(intr: CameraIntrinsics, p) -> np.ndarray:
    """Project camera-frame points to ``(u, v, d)``.

    ``p`` is anything array-like with a trailing axis of length 3. The output
    has the same shape, with pixel coordinates in the first two components
    and metric depth in the last.
    """
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any(~(z > 0)):
        raise DomainError("cannot project points with non-positive depth")
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    return np.stack([u, v, z], axis=-1)


def inverse_project(intr: CameraIntrinsics, u, v, d) -> np.ndarray:
    """Lift pixel coordinates at metric depth ``d`` back to camera space.

    Equivalent to ``K^-1 @ (u*d, v*d, d)``. Returns an array of shape
    ``broadcast(u, v, d).shape + (3,)``.
    """
    u, v, d = np.broadcast_arrays(
        np.asarray(u, np.float64), np.asarray(v, np.float64), np.asarray(d, np.float64)
    )
    if np.any(~(d > 0)):
        raise DomainError("inverse projection requires positive depth")
    x = (u - intr.cx) * d / intr.fx
    y = (v - intr.cy) * d / intr.fy
    return np.stack([x, y, d], axis=-1)


@dataclass(frozen=True, eq=False)
class FrustumGrid:
    """Anchors at every (feature column, feature row, depth bin).

    ``frustum_anchors`` and ``world_anchors`` both have shape
    ``(feat_w, feat_h, depth_bins, 3)``; the former holds ``(u, v, d)``, the
    latter the inverse-projected ``(x, y, z)``.
    """

    intr: CameraIntrinsics
    stride: int
    depth_bins: int
    depth_min: float
    depth_max: float
    feat_w: int
    feat_h: int
    frustum_anchors: np.ndarray = field(repr=False)
    world_anchors: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.feat_w, self.feat_h, self.depth_bins)

    @property
    def bin_width(self) -> float:
        return (self.depth_max - self.depth_min) / self.depth_bins

    @property
    def bin_centers(self) -> np.ndarray:
        return self.depth_min + (np.arange(self.depth_bins) + 0.5) * self.bin_width

    @property
    def column_centers(self) -> np.ndarray:
        """Pixel ``u`` of every feature column center."""
        return (np.arange(self.feat_w) + 0.5) * self.stride

    @property
    def row_centers(self) -> np.ndarray:
        return (np.arange(self.feat_h) + 0.5) * self.stride

    def to_cell_coords(self, u, v, d):
        """Continuous cell coordinates ``(w, h, k)``; integers sit on anchors."""
        u, v, d = (np.asarray(a, np.float64) for a in (u, v, d))
        return (
            u / self.stride - 0.5,
            v / self.stride - 0.5,
            (d - self.depth_min) / self.bin_width - 0.5,
        )

    def from_cell_coords(self, w, h, k):
        """Inverse of :meth:`to_cell_coords`, returning ``(u, v, d)``."""
        w, h, k = (np.asarray(a, np.float64) for a in (w, h, k))
        return (
            (w + 0.5) * self.stride,
            (h + 0.5) * self.stride,
            self.depth_min + (k + 0.5) * self.bin_width,
        )

    def depth_bin_index(self, depth) -> np.ndarray:
        """Index of the bin containing each depth, or -1 outside the range.

        Bins are half-open except the last, which also takes ``depth_max``.
        Non-finite depths map to -1.
        """
        depth = np.asarray(depth, np.float64)
        with np.errstate(invalid="ignore"):
            idx = np.floor((depth - self.depth_min) / self.bin_width)
            inside = np.isfinite(depth) & (depth >= self.depth_min) & (depth <= self.depth_max)
        idx = np.where(inside, np.minimum(np.nan_to_num(idx), self.depth_bins - 1), -1)
        return idx.astype(np.int64)

    def ground_anchors(self) -> np.ndarray:
        """Ground-plane ``(x, z)`` of every perspective BEV cell, shape ``(W, D, 2)``."""
        u = self.column_centers[:, None]
        z = self.bin_centers[None, :]
        x = (u - self.intr.cx) * z / self.intr.fx
        return np.stack(np.broadcast_arrays(x, z), axis=-1)


def make_frustum_grid(
    intr: CameraIntrinsics,
    stride: int,
    depth_bins: int,
    depth_min: float,
    depth_max: float,
    spacing_mode: str = "uniform",
) -> FrustumGrid:
    """Build the perspective anchor lattice for a camera and feature stride.

    Anchors sit at feature-cell centers, ``u = (w + 0.5) * stride``, and at
    depth-bin centers of a uniform partition of ``[depth_min, depth_max]``.
    """
    if spacing_mode != "uniform":
        raise ConfigError(f"unsupported depth spacing mode {spacing_mode!r}")
    if stride <= 0 or intr.image_w % stride or intr.image_h % stride:
        raise ConfigError(
            f"image size {intr.image_w}x{intr.image_h} is not divisible by stride {stride}"
        )
    if depth_bins < 1:
        raise ConfigError(f"depth_bins must be >= 1, got {depth_bins}")
    if not depth_min < depth_max:
        raise ConfigError(f"need depth_min < depth_max, got [{depth_min}, {depth_max}]")
    if depth_min <= 0:
        raise ConfigError("depth_min must be positive for a pinhole frustum")

    feat_w, feat_h = intr.image_w // stride, intr.image_h // stride
    bin_width = (depth_max - depth_min) / depth_bins
    u = (np.arange(feat_w) + 0.5) * stride
    v = (np.arange(feat_h) + 0.5) * stride
    d = depth_min + (np.arange(depth_bins) + 0.5) * bin_width
    uu, vv, dd = np.meshgrid(u, v, d, indexing="ij")
    frustum = np.stack([uu, vv, dd], axis=-1)
    world = inverse_project(intr, uu, vv, dd)
    frustum.setflags(write=False)
    world.setflags(write=False)
    return FrustumGrid(
        intr=intr,
        stride=stride,
        depth_bins=depth_bins,
        depth_min=float(depth_min),
        depth_max=float(depth_max),
        feat_w=feat_w,
        feat_h=feat_h,
        frustum_anchors=frustum,
        world_anchors=world,
    )


def anchor_spacing_profile(grid: FrustumGrid) -> np.ndarray:
    """Horizontal distance between neighbouring anchors at every depth bin.

    Returns an array of shape ``(depth_bins, 2)`` with columns
    ``(bin_center, spacing)``, measured from the first two columns of world
    anchors on the top feature row.
    """
    if grid.feat_w < 2:
        raise DomainError("spacing needs at least two feature columns")
    a = grid.world_anchors
    spacing = a[1, 0, :, 0] - a[0, 0, :, 0]
    return np.stack([grid.bin_centers, spacing], axis=-1)


def default_grid(
    focal: float = 560.0,
    image_w: int = 704,
    image_h: int = 256,
    stride: int = 16,
    depth_bins: int = 56,
    depth_min: float = 2.0,
    depth_max: float = 58.0,
) -> FrustumGrid:
    """Default 704x256 camera with 16x downsampling and 1 m bins over [2, 58] m."""
    intr = CameraIntrinsics.centered(focal, image_w, image_h)
    return make_frustum_grid(intr, stride, depth_bins, depth_min, depth_max)
