"""Peak extraction, box decoding and center-distance matching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError
from .geometry import WorldPoint
from .targets import (
    DIR_IGNORE,
    Box3D,
    LossConfig,
    direction_class,
    lattice_for,
    wrap_angle,
)


class Peak(NamedTuple):
    cell: tuple[int, int]
    class_id: int
    score: float


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    cell: tuple[int, int]
    class_id: int
    # Signature channel the detection was read from, when the head is channel-per-object.
    channel: int | None = None


def extract_peaks(heatmap, k_max: int = 100, threshold: float = 0.3) -> list[Peak]:
    """Local maxima of a ``(K, W, D)`` heatmap.

    A cell is a peak if it is >= all 8 neighbours and >= ``threshold``.
    Connected plateaus of such cells keep only their lowest ``(w, d)`` cell.
    Returns at most ``k_max`` peaks ordered by descending score.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")
    heatmap = np.asarray(heatmap)
    if heatmap.ndim != 3:
        raise ConfigError(f"heatmap must be (K, W, D), got shape {heatmap.shape}")
    peaks = []
    footprint = np.ones((3, 3), dtype=bool)
    for k, hm in enumerate(heatmap):
        nb_max = ndimage.maximum_filter(hm, footprint=footprint, mode="constant", cval=-np.inf)
        cand = (hm >= nb_max) & (hm >= threshold)
        if not cand.any():
            continue
        labels, _ = ndimage.label(cand, structure=footprint)
        coords = np.argwhere(cand)  # row-major, so the first per label is the lowest cell
        _, first = np.unique(labels[coords[:, 0], coords[:, 1]], return_index=True)
        for w, d in coords[first]:
            peaks.append(Peak((int(w), int(d)), k, float(hm[w, d])))
    peaks.sort(key=lambda p: (-p.score, p.class_id, p.cell))
    return peaks[:k_max]


def decode_boxes(peaks, attrs, grid, dir_class=None, cfg: LossConfig = LossConfig()):
    """Turn peaks and attribute maps into world-space detections.

    The center is the anchor at the fractional cell ``(w + dw, d + dd)``;
    height comes straight from its channel, sizes are exponentiated (log
    mode), yaw is rebuilt from ``(sin, cos)`` plus the viewing-ray angle when
    local yaw is on. If ``dir_class`` disagrees with the decoded yaw's
    direction, yaw is flipped by pi.

    ``grid`` is the :class:`FrustumGrid` (or voxel spec) the targets were
    encoded on. Returns ``(detections, n_dropped)`` where dropped peaks had
    non-finite or invalid attributes.
    """
    lat = lattice_for(grid)
    attrs = np.asarray(attrs, np.float64)
    use_local = cfg.local_yaw and lat.supports_local_yaw
    dets, dropped = [], 0
    for p in peaks:
        w, d = p.cell
        a = attrs[:, w, d]
        if not np.all(np.isfinite(a)):
            dropped += 1
            continue
        dw, dd, y, s0, s1, s2, sn, cs, vx, vz = a
        sizes = np.exp([s0, s1, s2]) if cfg.size_mode == "log" else np.array([s0, s1, s2])
        if not np.all(sizes > 0) or (sn == 0 and cs == 0):
            dropped += 1
            continue
        x, z = lat.position(w + dw, d + dd)
        x, z = float(x), float(z)
        yaw = math.atan2(sn, cs)
        if use_local:
            yaw += math.atan2(x, z)
        yaw = float(wrap_angle(yaw))
        if dir_class is not None:
            want = int(dir_class[w, d])
            if want != DIR_IGNORE and direction_class(yaw) != want:
                yaw = float(wrap_angle(yaw + math.pi))
        box = Box3D(WorldPoint(x, float(y), z), tuple(sizes), yaw, (vx, vz), p.class_id)
        dets.append(Detection(box, p.score, (w, d), p.class_id))
    return dets, dropped


@dataclass(frozen=True)
class MatchReport:
    """Greedy center-distance matching result.

    ``pairs`` holds ``(gt_index, det_index, distance)`` on the ground plane.
    """

    pairs: tuple[tuple[int, int, float], ...]
    n_gt: int
    n_det: int

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def unmatched_gt(self) -> int:
        return self.n_gt - self.n_matched

    @property
    def unmatched_det(self) -> int:
        return self.n_det - self.n_matched

    @property
    def mean_error(self) -> float:
        if not self.pairs:
            return float("nan")
        return float(np.mean([p[2] for p in self.pairs]))

    @property
    def precision(self) -> float:
        return self.n_matched / self.n_det if self.n_det else float("nan")

    @property
    def recall(self) -> float:
        return self.n_matched / self.n_gt if self.n_gt else float("nan")


def ground_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.center.x - b.center.x, a.center.z - b.center.z)


def match_and_score(gts, dets, max_dist: float = 2.0) -> MatchReport:
    """Match detections to ground truths, closest pairs first, within ``max_dist`` meters."""
    if not max_dist > 0:
        raise DomainError("max_dist must be positive")
    cand = []
    for gi, g in enumerate(gts):
        for di, det in enumerate(dets):
            dist = ground_distance(g, det.box)
            if dist <= max_dist:
                cand.append((dist, gi, di))
    cand.sort()
    used_g, used_d, pairs = set(), set(), []
    for dist, gi, di in cand:
        if gi in used_g or di in used_d:
            continue
        used_g.add(gi)
        used_d.add(di)
        pairs.append((gi, di, dist))
    pairs.sort(key=lambda p: p[0])
    return MatchReport(tuple(pairs), len(gts), len(dets))
