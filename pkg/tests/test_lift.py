import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persbev.errors import ConfigError, DomainError, ShapeError
from persbev.lift import (
    DepthDistribution,
    FeatureMap,
    Frustum3DFeature,
    collapse_height,
    feature_depth,
    make_depth_mode,
    outer_product_lift,
    softmax_depth,
)


def test_softmax_uniform():
    d = softmax_depth(np.zeros((4, 2, 3)))
    assert d.data.dtype == np.float32
    np.testing.assert_array_equal(d.data, 0.25)


def test_softmax_hand_values():
    logits = np.zeros((2, 1, 1))
    logits[0] = math.log(3)
    np.testing.assert_allclose(softmax_depth(logits).data[:, 0, 0], [0.75, 0.25], rtol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-100, 100))
def test_softmax_shift_invariant(seed, c):
    logits = np.random.default_rng(seed).normal(size=(5, 2, 3)) * 4
    a = softmax_depth(logits).data
    b = softmax_depth(logits + c).data
    np.testing.assert_allclose(a, b, atol=1e-6)
    np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-6)


def test_softmax_rejects_nonfinite():
    bad = np.zeros((3, 1, 1))
    bad[1] = np.nan
    with pytest.raises(DomainError):
        softmax_depth(bad)


def test_uniform_one_is_exactly_one():
    d = make_depth_mode("uniform_one", shape=(7, 3, 5))
    assert np.all(d.data == 1.0)


def test_static_random_seeded():
    a = make_depth_mode("static_random", seed=7, shape=(6, 4, 5)).data
    b = make_depth_mode("static_random", seed=7, shape=(6, 4, 5)).data
    assert a.tobytes() == b.tobytes()
    np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-6)
    assert not np.array_equal(a, make_depth_mode("static_random", seed=8, shape=(6, 4, 5)).data)


def test_onehot_oracle_bin(pgrid):
    gt = np.full((pgrid.feat_h, pgrid.feat_w), 10.4)
    gt[0, 0] = 1.0
    gt[0, 1] = np.inf
    d = make_depth_mode("onehot_oracle", gt_depth=gt, grid=pgrid)
    assert d.data[8, 3, 3] == 1.0
    assert d.data[:, 3, 3].sum() == 1.0
    assert not d.valid[0, 0] and not d.valid[0, 1] and d.valid[1, 1]


def test_depth_mode_errors(pgrid):
    with pytest.raises(ConfigError):
        make_depth_mode("onehot_oracle")
    with pytest.raises(ConfigError):
        make_depth_mode("bogus", shape=(1, 1, 1))
    with pytest.raises(ShapeError):
        make_depth_mode("uniform_one", shape=(2, 2))


def test_lift_scalar():
    f = FeatureMap(np.array([[[2.0]]], dtype=np.float32))
    d = DepthDistribution(np.array([0.25, 0.75], dtype=np.float32).reshape(2, 1, 1))
    np.testing.assert_allclose(outer_product_lift(f, d).data.reshape(2), [0.5, 1.5])


def test_lift_matches_loop_oracle(rng):
    C, D, H, W = 3, 4, 2, 5
    f = rng.normal(size=(C, H, W)).astype(np.float32)
    d = rng.random((D, H, W)).astype(np.float32)
    out = outer_product_lift(FeatureMap(f), DepthDistribution(d)).data
    ref = np.empty((C, D, H, W))
    for c in range(C):
        for k in range(D):
            for h in range(H):
                for w in range(W):
                    ref[c, k, h, w] = float(f[c, h, w]) * float(d[k, h, w])
    np.testing.assert_allclose(out, ref, rtol=1e-6)


def test_lift_shape_mismatch():
    with pytest.raises(ShapeError):
        outer_product_lift(FeatureMap(np.ones((1, 2, 3))), DepthDistribution(np.ones((2, 3, 2))))


def test_collapse_sum():
    f3d = Frustum3DFeature(np.array([1.0, 3.0], dtype=np.float32).reshape(1, 1, 2, 1))
    assert collapse_height(f3d).data.item() == 4.0
    assert collapse_height(f3d, [1, 1]).data.item() == 4.0
    assert collapse_height(f3d, [0, 1]).data.item() == 3.0
    with pytest.raises(ShapeError):
        collapse_height(f3d, [1, 1, 1])


def test_collapse_matches_loop_oracle(rng):
    data = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
    wts = rng.random(4)
    out = collapse_height(Frustum3DFeature(data), wts).data
    ref = np.zeros((2, 3, 5))
    for h in range(4):
        ref += data[:, :, h, :] * np.float32(wts[h])
    np.testing.assert_allclose(out, ref, rtol=1e-5)


def test_uniform_one_slices_identical(rng):
    f = FeatureMap(rng.normal(size=(4, 3, 6)).astype(np.float32))
    d = make_depth_mode("uniform_one", shape=(9, 3, 6))
    bev = collapse_height(outer_product_lift(f, d)).data
    assert np.all(bev == bev[:, :1])


def test_feature_depth_block_min():
    m = np.arange(16, dtype=float).reshape(4, 4)
    m[0, 1] = np.inf
    np.testing.assert_array_equal(feature_depth(m, 2), [[0, 2], [8, 10]])
    with pytest.raises(ShapeError):
        feature_depth(np.ones((3, 4)), 2)
