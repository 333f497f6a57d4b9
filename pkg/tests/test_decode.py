import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persbev.decode import Detection, Peak, decode_boxes, extract_peaks, match_and_score
from persbev.errors import ConfigError, DomainError
from persbev.geometry import WorldPoint, default_grid
from persbev.targets import N_ATTRS, Box3D, encode_targets


def box(x, z, yaw=0.0, y=0.5):
    return Box3D(WorldPoint(x, y, z), (4.0, 1.8, 1.5), yaw)


def test_isolated_peak():
    hm = np.zeros((1, 5, 6))
    hm[0, 2, 3] = 0.9
    assert extract_peaks(hm, threshold=0.5) == [Peak((2, 3), 0, 0.9)]


def test_plateau_keeps_lowest_cell():
    hm = np.zeros((1, 5, 6))
    hm[0, 2, 3] = hm[0, 2, 4] = 0.8
    hm[0, 4, 0] = hm[0, 3, 1] = 0.6
    peaks = extract_peaks(hm, threshold=0.5)
    assert [p.cell for p in peaks] == [(2, 3), (3, 1)]


def test_threshold_and_kmax():
    hm = np.full((1, 4, 4), 0.2)
    assert extract_peaks(hm, threshold=0.3) == []
    hm = np.zeros((2, 9, 9))
    for i, (w, d) in enumerate([(1, 1), (4, 4), (7, 7)]):
        hm[i % 2, w, d] = 0.5 + 0.1 * i
    peaks = extract_peaks(hm, k_max=2, threshold=0.3)
    assert [(p.cell, p.class_id) for p in peaks] == [((7, 7), 0), ((4, 4), 1)]
    with pytest.raises(ConfigError):
        extract_peaks(hm, threshold=1.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_transform_preserves_peaks(seed):
    rng = np.random.default_rng(seed)
    hm = rng.random((2, 12, 10))
    a = extract_peaks(hm, threshold=0.3)
    b = extract_peaks(hm**0.5, threshold=0.3**0.5)
    assert [(p.cell, p.class_id) for p in a] == [(p.cell, p.class_id) for p in b]


def test_zero_offsets_give_anchor():
    g = default_grid()
    attrs = np.zeros((N_ATTRS, 44, 56))
    attrs[6:8, 10, 20] = (0.0, 1.0)
    (det,), dropped = decode_boxes([Peak((10, 20), 0, 0.9)], attrs, g)
    x, z = g.ground_anchors()[10, 20]
    assert (det.box.center.x, det.box.center.z) == (x, z)
    assert det.box.size == (1.0, 1.0, 1.0)
    assert dropped == 0 and det.score == 0.9


def test_unnormalized_sin_cos():
    g = default_grid()
    attrs = np.zeros((N_ATTRS, 44, 56))
    attrs[6:8, 22, 5] = (0.6, 0.6)
    (det,), _ = decode_boxes([Peak((22, 5), 0, 1.0)], attrs, g)
    ray = math.atan2(det.box.center.x, det.box.center.z)
    assert det.box.yaw == pytest.approx(math.pi / 4 + ray, abs=1e-12)


def test_nonfinite_attrs_dropped():
    g = default_grid()
    attrs = np.zeros((N_ATTRS, 44, 56))
    attrs[7] = 1.0
    attrs[2, 3, 3] = np.nan
    dets, dropped = decode_boxes([Peak((3, 3), 0, 1.0), Peak((4, 4), 0, 1.0)], attrs, g)
    assert dropped == 1 and len(dets) == 1


def test_direction_class_flips_yaw():
    g = default_grid()
    b = box(1.0, 20.0, yaw=2.8)
    t = encode_targets([b], g)
    attrs = t.attrs.copy()
    (_, w, d), = t.assigned
    attrs[6:8, w, d] *= -1  # head predicts the opposite heading
    (det,), _ = decode_boxes([Peak((w, d), 0, 1.0)], attrs, g, t.dir_class)
    assert det.box.yaw == pytest.approx(b.yaw, abs=1e-9)


def test_roundtrip_targets_as_predictions(rng):
    g = default_grid()
    boxes = [box(z * rng.uniform(-0.5, 0.5), z, rng.uniform(-math.pi, math.pi)) for z in (8.3, 21.7, 47.2)]
    t = encode_targets(boxes, g)
    dets, _ = decode_boxes(extract_peaks(t.heatmap), t.attrs, g, t.dir_class)
    rep = match_and_score(boxes, dets)
    assert rep.n_matched == 3 and rep.mean_error < 1e-9
    for gi, di, _ in rep.pairs:
        assert abs(math.remainder(dets[di].box.yaw - boxes[gi].yaw, 2 * math.pi)) < 1e-9
        np.testing.assert_allclose(dets[di].box.size, boxes[gi].size, rtol=1e-12)


def det_at(x, z):
    return Detection(box(x, z), 1.0, (0, 0), 0)


def test_match_examples():
    gts = [box(0.0, 10.0), box(3.0, 20.0)]
    r = match_and_score(gts, [det_at(0.0, 10.0), det_at(3.0, 20.0)])
    assert r.n_matched == 2 and r.mean_error == 0.0 and r.precision == 1.0 and r.recall == 1.0
    r = match_and_score([box(0.0, 10.0)], [det_at(0.3, 10.0)], max_dist=2.0)
    assert r.n_matched == 1 and r.mean_error == pytest.approx(0.3)
    r = match_and_score([box(0.0, 10.0)], [det_at(2.5, 10.0)], max_dist=2.0)
    assert r.n_matched == 0 and r.unmatched_gt == 1 and r.unmatched_det == 1
    assert math.isnan(r.mean_error)
    with pytest.raises(DomainError):
        match_and_score([], [], max_dist=0)


def test_match_greedy_each_gt_once():
    gts = [box(0.0, 10.0), box(1.0, 10.0)]
    dets = [det_at(0.9, 10.0)]
    r = match_and_score(gts, dets)
    assert r.pairs == ((1, 0, pytest.approx(0.1)),)
