"""Sampling-free lift: depth distributions, outer-product lift, height collapse.

Tensor layouts (all float32):

* feature map ``F``: ``(C, H, W)``
* depth distribution ``D``: ``(Dbins, H, W)``
* lifted frustum feature ``F ⊗ D``: ``(C, Dbins, H, W)``
* perspective BEV feature: ``(C, Dbins, W)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .geometry import FrustumGrid

DEPTH_MODES = ("predicted", "uniform_one", "static_random", "onehot_oracle")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"feature map must be (C, H, W), got shape {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class DepthDistribution:
    data: np.ndarray
    mode: str = "predicted"

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"depth must be (Dbins, H, W), got shape {self.data.shape}")
        if self.mode not in DEPTH_MODES:
            raise ConfigError(f"unknown depth mode {self.mode!r}")

    @property
    def valid(self) -> np.ndarray:
        """Pixels with any depth mass; oracle pixels outside the range are all-zero."""
        return self.data.sum(axis=0) > 0


@dataclass(frozen=True, eq=False)
class Frustum3DFeature:
    data: np.ndarray


@dataclass(frozen=True, eq=False)
class PerspBEVFeature:
    data: np.ndarray


def softmax_depth(logits) -> DepthDistribution:
    """Per-pixel softmax over the depth axis."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise ShapeError(f"depth logits must be (Dbins, H, W), got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise DomainError("depth logits must be finite")
    return DepthDistribution(_softmax(logits, axis=0).astype(np.float32), "predicted")


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def make_depth_mode(
    mode: str,
    seed: int | None = None,
    shape: tuple[int, int, int] | None = None,
    gt_depth=None,
    grid: FrustumGrid | None = None,
) -> DepthDistribution:
    """Construct one of the non-learned depth distributions.

    ``uniform_one`` fills every entry with exactly 1, deliberately unnormalized.
    ``static_random`` draws seeded uniform noise and normalizes it per pixel.
    ``onehot_oracle`` needs ``gt_depth`` (``(H, W)`` meters, feature
    resolution) and ``grid``; pixels whose depth falls outside the grid's range
    are left as all-zero columns.
    """
    if mode == "onehot_oracle":
        if gt_depth is None or grid is None:
            raise ConfigError("onehot_oracle depth needs gt_depth and grid")
        gt_depth = np.asarray(gt_depth)
        if shape is not None and tuple(shape) != (grid.depth_bins,) + gt_depth.shape:
            raise ShapeError(f"shape {shape} disagrees with gt depth {gt_depth.shape}")
        return DepthDistribution(onehot_bins(gt_depth, grid), "onehot_oracle")

    if shape is None or len(shape) != 3:
        raise ShapeError("shape must be (Dbins, H, W)")
    if mode == "uniform_one":
        return DepthDistribution(np.ones(shape, dtype=np.float32), "uniform_one")
    if mode == "static_random":
        rng = np.random.default_rng(seed)
        r = rng.random(shape)
        return DepthDistribution((r / r.sum(axis=0, keepdims=True)).astype(np.float32), mode)
    raise ConfigError(f"unknown depth mode {mode!r}")


def onehot_bins(gt_depth: np.ndarray, grid: FrustumGrid) -> np.ndarray:
    """One-hot ``(Dbins, H, W)`` encoding of per-pixel depth; zeros where out of range."""
    idx = grid.depth_bin_index(gt_depth)
    out = np.zeros((grid.depth_bins,) + idx.shape, dtype=np.float32)
    hh, ww = np.nonzero(idx >= 0)
    out[idx[hh, ww], hh, ww] = 1.0
    return out


def feature_depth(depth_map: np.ndarray, stride: int) -> np.ndarray:
    """Reduce an image-resolution depth map to feature resolution.

    Each feature cell takes the nearest surface (minimum depth) in its
    ``stride x stride`` block.
    """
    h, w = depth_map.shape
    if h % stride or w % stride:
        raise ShapeError(f"depth map {depth_map.shape} not divisible by stride {stride}")
    blocks = depth_map.reshape(h // stride, stride, w // stride, stride)
    return blocks.min(axis=(1, 3))


def outer_product_lift(f: FeatureMap, d: DepthDistribution, out: np.ndarray | None = None) -> Frustum3DFeature:
    """``out[c, k, h, w] = f[c, h, w] * d[k, h, w]``.

    ``out`` may supply a preallocated float32 ``(C, Dbins, H, W)`` buffer.
    """
    fd, dd = f.data, d.data
    if fd.shape[1:] != dd.shape[1:]:
        raise ShapeError(
            f"feature (H, W)={fd.shape[1:]} does not match depth (H, W)={dd.shape[1:]}"
        )
    shape = (fd.shape[0],) + dd.shape
    if out is not None and (out.shape != shape or out.dtype != np.float32):
        raise ShapeError(f"output buffer {out.shape} {out.dtype} does not match {shape} float32")
    out = np.multiply(fd[:, None], dd[None], dtype=np.float32, out=out)
    return Frustum3DFeature(out)


def collapse_height(f3d: Frustum3DFeature, weights=None) -> PerspBEVFeature:
    """Weighted reduction over the image-height axis, ``(C, D, H, W) -> (C, D, W)``.

    ``weights`` defaults to all ones (a plain sum).
    """
    data = f3d.data
    if data.ndim != 4:
        raise ShapeError(f"lifted feature must be (C, D, H, W), got {data.shape}")
    if weights is None:
        return PerspBEVFeature(data.sum(axis=2, dtype=np.float32))
    weights = np.asarray(weights, dtype=np.float32)
    if weights.shape != (data.shape[2],):
        raise ShapeError(f"need {data.shape[2]} height weights, got shape {weights.shape}")
    return PerspBEVFeature(np.einsum("ckhw,h->ckw", data, weights))
