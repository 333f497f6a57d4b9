import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from persbev.errors import ConfigError, ShapeError
from persbev.geometry import CameraIntrinsics, make_frustum_grid
from persbev.lift import Frustum3DFeature
from persbev.sampling import (
    gather_voxels,
    build_voxel_grid,
    grid_sample,
    memory_footprint,
    memory_report,
    perspective_invalid_fraction,
    plan_grid_sample,
    sampling_census,
    voxel_pool,
)


def aligned_case():
    """Frustum whose 4x2x1 anchors coincide with the centers of a 4x1x2 voxel grid."""
    intr = CameraIntrinsics(10.0, 10.0, 4.0, 2.0, 8, 4)
    grid = make_frustum_grid(intr, stride=2, depth_bins=1, depth_min=4.5, depth_max=5.5)
    spec = build_voxel_grid((-2, 2), (4.5, 5.5), (-1, 1), (1.0, 1.0, 1.0))
    return grid, spec


def small_case():
    intr = CameraIntrinsics.centered(40.0, 64, 32)
    grid = make_frustum_grid(intr, stride=8, depth_bins=6, depth_min=2.0, depth_max=14.0)
    spec = build_voxel_grid((-6, 6), (1, 15), (-2, 2), (0.7, 0.9, 1.0))
    return grid, spec


def random_f3d(grid, rng, C=3):
    W, H, D = grid.shape
    return Frustum3DFeature(rng.normal(size=(C, D, H, W)).astype(np.float32))


def test_default_voxel_dims(pspec):
    assert pspec.dims == (125, 87, 12)
    assert build_voxel_grid((0, 1), (0, 1), (0, 1), (1, 1, 1)).dims == (1, 1, 1)
    assert build_voxel_grid((0, 10), (0, 10), (0, 10), (3, 3, 3)).dims == (3, 3, 3)


def test_voxel_grid_errors():
    with pytest.raises(ConfigError):
        build_voxel_grid((0, 1), (0, 1), (0, 1), (0, 1, 1))
    with pytest.raises(ConfigError):
        build_voxel_grid((0, 1), (0, 1), (0, 1), (-1, 1, 1))
    with pytest.raises(ConfigError):
        build_voxel_grid((1, 0), (0, 1), (0, 1), (1, 1, 1))


def test_aligned_grid_sample_is_permutation(rng):
    grid, spec = aligned_case()
    assert spec.dims == (4, 1, 2)
    f3d = random_f3d(grid, rng, C=2)
    plan = plan_grid_sample(grid, spec, "nearest")
    assert plan.valid.all()
    idx = plan.index[:, 0]
    assert sorted(idx.tolist()) == list(range(8))
    out = grid_sample(f3d, grid, spec, "nearest")
    src = f3d.data.reshape(2, -1)
    np.testing.assert_array_equal(np.sort(src[:, idx], axis=1), np.sort(src, axis=1))
    np.testing.assert_allclose(out.data, f3d.data[:, 0].sum(axis=1)[:, :, None], rtol=1e-6)


def test_delta_response():
    grid, spec = small_case()
    W, H, D = grid.shape
    data = np.zeros((1, D, H, W), np.float32)
    data[0, 2, 1, 3] = 5.0
    plan = plan_grid_sample(grid, spec, "nearest")
    vox = gather_voxels(Frustum3DFeature(data), plan, fill=-1.0)[0]
    hit = np.zeros(spec.n_voxels, bool)
    hit[np.flatnonzero(plan.valid)[plan.index[:, 0] == (2 * H + 1) * W + 3]] = True
    assert hit.any()
    assert np.all(vox[hit] == 5.0)
    assert np.all(vox[plan.valid & ~hit] == 0.0)
    assert np.all(vox[~plan.valid] == -1.0)


def brute_force_nearest(f3d, grid, spec, fill):
    C = f3d.data.shape[0]
    nx, nz, ny = spec.dims
    xc, zc, yc = spec.axis_centers()
    out = np.full((C, nx, nz, ny), fill, np.float64)
    valid = np.zeros((nx, nz, ny), bool)
    k_ = grid.intr
    for i in range(nx):
        for j in range(nz):
            for l in range(ny):
                x, y, z = xc[i], yc[l], zc[j]
                u = k_.fx * x / z + k_.cx
                v = k_.fy * y / z + k_.cy
                if not (0 <= u < k_.image_w and 0 <= v < k_.image_h and grid.depth_min <= z <= grid.depth_max):
                    continue
                k = min(int(math.floor((z - grid.depth_min) / grid.bin_width)), grid.depth_bins - 1)
                out[:, i, j, l] = f3d.data[:, k, int(v // grid.stride), int(u // grid.stride)]
                valid[i, j, l] = True
    return out, valid


def test_grid_sample_nearest_matches_brute_force(rng):
    grid, spec = small_case()
    f3d = random_f3d(grid, rng)
    ref, valid = brute_force_nearest(f3d, grid, spec, fill=7.0)
    out = grid_sample(f3d, grid, spec, "nearest", fill=7.0)
    np.testing.assert_array_equal(out.voxel_mask, valid)
    expected = np.where(valid[None], ref, 0).sum(axis=-1)
    expected[:, ~valid.any(axis=-1)] = 7.0
    np.testing.assert_allclose(out.data, expected, rtol=1e-5, atol=1e-5)


def test_grid_sample_trilinear_matches_map_coordinates(rng):
    grid, spec = small_case()
    f3d = random_f3d(grid, rng, C=2)
    out = grid_sample(f3d, grid, spec, "trilinear")
    pts = spec.centers()
    ref = np.zeros(out.data.shape)
    k_ = grid.intr
    for idx in np.ndindex(*spec.dims):
        if not out.voxel_mask[idx]:
            continue
        x, y, z = pts[idx]
        u, v = k_.fx * x / z + k_.cx, k_.fy * y / z + k_.cy
        w, h, k = grid.to_cell_coords(u, v, z)
        for c in range(2):
            ref[c, idx[0], idx[1]] += ndimage.map_coordinates(
                f3d.data[c].astype(np.float64), [[k], [h], [w]], order=1, mode="nearest"
            )[0]
    np.testing.assert_allclose(out.data, ref, rtol=1e-5, atol=1e-5)


def test_grid_sample_shape_mismatch(rng):
    grid, spec = small_case()
    with pytest.raises(ShapeError):
        grid_sample(Frustum3DFeature(np.zeros((1, 2, 3, 4), np.float32)), grid, spec)
    with pytest.raises(ConfigError):
        plan_grid_sample(grid, spec, "cubic")


def test_voxel_pool_single_bin(rng):
    grid, _ = small_case()
    spec = build_voxel_grid((-100, 100), (0, 100), (-100, 100), (200, 100, 200))
    f3d = random_f3d(grid, rng, C=2)
    out = voxel_pool(f3d, grid, spec)
    np.testing.assert_allclose(out.data[:, 0, 0], f3d.data.reshape(2, -1).sum(axis=1), rtol=1e-5)


def test_voxel_pool_equals_nearest_on_aligned_grid(rng):
    grid, spec = aligned_case()
    f3d = random_f3d(grid, rng)
    a = voxel_pool(f3d, grid, spec)
    b = grid_sample(f3d, grid, spec, "nearest")
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(a.voxel_mask, b.voxel_mask)


def test_voxel_pool_boundary_goes_to_lower_index():
    grid, _ = aligned_case()
    # anchors at x = -1.5, -0.5, 0.5, 1.5 now sit on voxel faces
    spec = build_voxel_grid((-1.5, 2.5), (4.5, 5.5), (-1, 1), (1.0, 1.0, 1.0))
    W, H, D = grid.shape
    data = np.zeros((1, D, H, W), np.float32)
    data[0, 0, 0, 2] = 1.0  # anchor x = 0.5, between cells 1 and 2
    out = voxel_pool(Frustum3DFeature(data), grid, spec)
    assert out.data[0, :, 0].tolist() == [0.0, 1.0, 0.0, 0.0]
    # x = -1.5 is the outer face: kept, in cell 0
    data[:] = 0
    data[0, 0, 0, 0] = 1.0
    assert voxel_pool(Frustum3DFeature(data), grid, spec).data[0, 0, 0] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 2.0), st.floats(0.3, 2.0))
def test_voxel_pool_conserves_mass(seed, sx, sz):
    grid, _ = small_case()
    spec = build_voxel_grid((-6, 6), (1, 15), (-2, 2), (sx, sz, 1.0))
    rng = np.random.default_rng(seed)
    f3d = random_f3d(grid, rng, C=1)
    out = voxel_pool(f3d, grid, spec)
    idx, inside = spec.bin_points(np.transpose(grid.world_anchors, (2, 1, 0, 3)))
    expected = f3d.data[0][inside].astype(np.float64).sum()
    assert out.data.sum(dtype=np.float64) == pytest.approx(expected, rel=1e-4, abs=1e-4)


def test_sampling_deterministic(rng):
    grid, spec = small_case()
    f3d = random_f3d(grid, rng)
    a, b = voxel_pool(f3d, grid, spec), voxel_pool(f3d, grid, spec)
    assert a.data.tobytes() == b.data.tobytes()
    c, d = grid_sample(f3d, grid, spec, "trilinear"), grid_sample(f3d, grid, spec, "trilinear")
    assert c.data.tobytes() == d.data.tobytes()


def test_census_near_far_direction(pgrid, pspec):
    c = sampling_census(pgrid, pspec)
    near, far = c.records[0], c.records[3]
    assert near.under_sampled_fraction > far.under_sampled_fraction
    assert far.duplication_factor > near.duplication_factor
    assert sum(r.n_voxels for r in c.records) == pspec.n_voxels
    assert sum(r.n_sources for r in c.records) == 44 * 16 * 56
    assert c.n_references == pspec.n_voxels - c.n_invalid


def test_census_invalid_counts_frozen(pgrid, pspec):
    # frozen from the per-voxel loop in brute_force_nearest at the default config
    c = sampling_census(pgrid, pspec)
    assert [r.n_invalid for r in c.records] == [30119, 21317, 13728, 6264]
    assert [r.n_voxels for r in c.records] == [33000, 33000, 33000, 31500]
    assert c.n_invalid == 71428


def test_census_aligned_bijection():
    grid, spec = aligned_case()
    c = sampling_census(grid, spec)
    assert c.under_sampled_fraction == 0.0
    assert c.duplication_factor == 1.0
    for r in c.records:
        if r.n_sources:
            assert r.under_sampled_fraction == 0.0 and r.duplication_factor == 1.0


def test_census_reference_count_doubles(pgrid):
    a = build_voxel_grid((-1, 1), (10, 20), (-1, 1), (0.5, 0.5, 0.5))
    b = build_voxel_grid((-1, 1), (10, 20), (-1, 1), (0.25, 0.5, 0.5))
    ca, cb = sampling_census(pgrid, a), sampling_census(pgrid, b)
    assert ca.n_invalid == 0
    assert cb.n_references == 2 * ca.n_references


def test_fov_waste(pgrid, pspec):
    assert sampling_census(pgrid, pspec).invalid_cell_fraction > 0.2
    assert perspective_invalid_fraction(pgrid) == 0.0


def test_memory_footprint():
    assert memory_footprint((64, 125, 87, 12)) == 33_408_000
    assert memory_footprint((64, 56, 16, 44)) == 10_092_544
    assert memory_footprint((64, 0, 3)) == 0
    with pytest.raises(OverflowError):
        memory_footprint((2**32, 2**32))
    with pytest.raises(ConfigError):
        memory_footprint((3, -1))


def test_memory_report(pgrid, pspec):
    r = memory_report(pgrid, pspec, 64)
    assert r["frustum_bytes"] == 10_092_544 < r["voxel_bytes"] == 33_408_000
    assert r["persp_bev_bytes"] == 4 * 64 * 56 * 44
    assert 0 < r["invalid_waste_bytes"] < r["voxel_bytes"]
