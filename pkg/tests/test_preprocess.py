import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unrest.preprocess import (
    PreprocessConfig,
    PreprocessError,
    apply_delay_correction,
    build_missing_mask,
    disk,
    normalize,
    preprocess_pipeline,
    region_fill,
)
from unrest.raster import Interferogram

# ---------------------------------------------------------------------------
# brute-force oracles (direct set arithmetic / dense solves)


def brute_dilate(mask, radius):
    h, w = mask.shape
    out = np.zeros_like(mask)
    offsets = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in offsets:
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w:
                    out[yy, xx] = True
    return out


def brute_erode(mask, radius):
    # out-of-grid neighbors count as present (matches closing semantics)
    h, w = mask.shape
    out = np.zeros_like(mask)
    offsets = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]
    for y in range(h):
        for x in range(w):
            ok = True
            for dy, dx in offsets:
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and not mask[yy, xx]:
                    ok = False
                    break
            out[y, x] = ok
    return out


def brute_mask(missing, dilation_radius, closing_radius):
    dilated = brute_dilate(missing, dilation_radius)
    return brute_erode(brute_dilate(dilated, closing_radius), closing_radius)


def dense_laplace_solve(grid, mask):
    """Direct dense solve of the 5-point stencil for interior masks."""
    h, w = grid.shape
    rows, cols = np.nonzero(mask)
    n = len(rows)
    index = {(r, c): i for i, (r, c) in enumerate(zip(rows, cols))}
    A = np.zeros((n, n))
    b = np.zeros(n)
    for i, (r, c) in enumerate(zip(rows, cols)):
        neighbors = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
        inside = [(rr, cc) for rr, cc in neighbors if 0 <= rr < h and 0 <= cc < w]
        A[i, i] = len(inside)
        for rr, cc in inside:
            if (rr, cc) in index:
                A[i, index[(rr, cc)]] = -1.0
            else:
                b[i] += grid[rr, cc]
    return np.linalg.solve(A, b)


def ifg_with_mask(values, mask):
    return Interferogram.from_parts(np.asarray(values, float), np.asarray(mask, bool))


# ---------------------------------------------------------------------------


class TestDisk:
    def test_radius_zero_is_single_pixel(self):
        assert disk(0).shape == (1, 1) and disk(0)[0, 0]

    def test_radius_two_matches_definition(self):
        d = disk(2)
        yy, xx = np.mgrid[-2:3, -2:3]
        assert np.array_equal(d, yy * yy + xx * xx <= 4)


class TestBuildMissingMask:
    def test_all_false_stays_all_false(self):
        ifg = Interferogram.from_values(np.zeros((8, 8)))
        cfg = PreprocessConfig()
        assert not build_missing_mask(ifg, cfg).any()

    def test_single_center_pixel_matches_oracle(self):
        missing = np.zeros((21, 21), bool)
        missing[10, 10] = True
        ifg = ifg_with_mask(np.zeros((21, 21)), missing)
        cfg = PreprocessConfig(dilation_radius=2, closing_radius=5)
        got = build_missing_mask(ifg, cfg)
        assert np.array_equal(got, brute_mask(missing, 2, 5))

    def test_two_pixels_bridge_matches_oracle(self):
        missing = np.zeros((21, 21), bool)
        missing[10, 9] = True
        missing[10, 12] = True  # 3 apart, radius-2 disks overlap
        ifg = ifg_with_mask(np.zeros((21, 21)), missing)
        cfg = PreprocessConfig(dilation_radius=2, closing_radius=5)
        got = build_missing_mask(ifg, cfg)
        expected = brute_mask(missing, 2, 5)
        assert np.array_equal(got, expected)
        # the dilated disks merged into one blob
        assert expected[10, 10] and expected[10, 11]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_random_masks_match_oracle(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        missing = rng.random((15, 15)) < 0.1
        ifg = ifg_with_mask(np.zeros((15, 15)), missing)
        cfg = PreprocessConfig(dilation_radius=1, closing_radius=2)
        got = build_missing_mask(ifg, cfg)
        assert np.array_equal(got, brute_mask(missing, 1, 2))

    def test_monotone_in_input_mask(self):
        rng = np.random.Generator(np.random.Philox(11))
        small = rng.random((20, 20)) < 0.05
        extra = rng.random((20, 20)) < 0.05
        big = small | extra
        cfg = PreprocessConfig(dilation_radius=2, closing_radius=3)
        mask_small = build_missing_mask(ifg_with_mask(np.zeros((20, 20)), small), cfg)
        mask_big = build_missing_mask(ifg_with_mask(np.zeros((20, 20)), big), cfg)
        assert (mask_big | mask_small).sum() == mask_big.sum()  # small subset of big

    def test_output_contains_input(self):
        rng = np.random.Generator(np.random.Philox(12))
        missing = rng.random((20, 20)) < 0.1
        cfg = PreprocessConfig()
        out = build_missing_mask(ifg_with_mask(np.zeros((20, 20)), missing), cfg)
        assert (out | missing).sum() == out.sum()


class TestRegionFill:
    def test_empty_mask_identity(self):
        values = np.arange(16.0).reshape(4, 4)
        ifg = Interferogram.from_values(values)
        out = region_fill(ifg, np.zeros((4, 4), bool))
        assert np.array_equal(out, values)

    def test_affine_plane_recovered(self):
        yy, xx = np.mgrid[0:15, 0:15].astype(float)
        plane = 2 * yy - 3 * xx + 1
        mask = np.zeros((15, 15), bool)
        mask[5:10, 5:10] = True
        out = region_fill(Interferogram.from_values(plane), mask)
        assert np.abs(out - plane).max() <= 1e-6
        # unmasked pixels bit-identical
        assert np.array_equal(out[~mask], plane[~mask])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_dense_direct_solve(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        grid = rng.normal(scale=10, size=(9, 9))
        mask = np.zeros((9, 9), bool)
        mask[3:6, 3:6] = True
        ifg = Interferogram.from_values(grid)
        out = region_fill(ifg, mask)
        expected = dense_laplace_solve(grid, mask)
        assert np.abs(out[mask] - expected).max() <= 1e-6

    def test_mask_touching_border(self):
        rng = np.random.Generator(np.random.Philox(3))
        grid = rng.normal(size=(10, 10))
        mask = np.zeros((10, 10), bool)
        mask[0:3, 0:3] = True  # corner block, reduced stencil at the border
        out = region_fill(Interferogram.from_values(grid), mask)
        expected = dense_laplace_solve(grid, mask)
        assert np.abs(out[mask] - expected).max() <= 1e-6

    def test_fill_covers_input_missing(self):
        values = np.ones((6, 6))
        missing = np.zeros((6, 6), bool)
        missing[2, 2] = True
        ifg = Interferogram.from_parts(values, missing)
        out = region_fill(ifg, missing)
        assert not np.isnan(out).any()
        assert out[2, 2] == pytest.approx(1.0)

    def test_mask_must_cover_missing(self):
        ifg = Interferogram.from_parts(np.ones((4, 4)), np.eye(4, dtype=bool))
        with pytest.raises(ValueError):
            region_fill(ifg, np.zeros((4, 4), bool))

    def test_fully_masked_errors(self):
        ifg = Interferogram.from_values(np.ones((4, 4)))
        with pytest.raises(PreprocessError):
            region_fill(ifg, np.ones((4, 4), bool))

    def test_degenerate_nearest_fill(self):
        from unrest.preprocess import _nearest_known_values

        # nearest known pixel, row-major tie-break: (0,1) and (1,0) tie for (1,1)
        known_rows = np.array([0, 1])
        known_cols = np.array([1, 0])
        vals = np.array([5.0, 9.0])
        out = _nearest_known_values(known_rows, known_cols, vals, np.array([1]), np.array([1]))
        assert out[0] == 5.0  # (0,1) wins row-major over (1,0)


class TestNormalize:
    def test_constant_grid_maps_to_zero(self):
        assert np.array_equal(normalize(np.full((4, 4), 7.0)), np.zeros((4, 4)))

    def test_clamp_at_limit(self):
        grid = np.array([[45.0, -45.0, 0.0, 0.0]])  # zero mean
        out = normalize(grid, PreprocessConfig(clamp_limit=30.0))
        assert out[0, 0] == 1.0 and out[0, 1] == -1.0

    def test_linear_scaling(self):
        grid = np.array([[15.0, -15.0]])  # zero mean
        out = normalize(grid, PreprocessConfig(clamp_limit=30.0))
        assert out[0, 0] == pytest.approx(0.5)

    @given(st.integers(0, 2**32 - 1), st.floats(-100, 100))
    @settings(max_examples=50)
    def test_range_and_shift_invariance(self, seed, shift):
        rng = np.random.Generator(np.random.Philox(seed))
        grid = rng.normal(scale=40, size=(6, 6))
        out = normalize(grid)
        assert (out >= -1).all() and (out <= 1).all()
        shifted = normalize(grid + shift)
        assert np.abs(out - shifted).max() < 1e-9

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            normalize(np.array([[np.nan, 1.0]]))


class TestDelayCorrection:
    def test_zero_delay_identity(self):
        ifg = Interferogram.from_values(np.arange(4.0).reshape(2, 2))
        out = apply_delay_correction(ifg, np.zeros((2, 2)))
        assert np.array_equal(out.values, ifg.values)

    def test_subtraction(self):
        ifg = Interferogram.from_values(np.full((3, 3), 5.0))
        out = apply_delay_correction(ifg, np.full((3, 3), 2.0))
        assert np.array_equal(out.values, np.full((3, 3), 3.0))

    def test_inverse_property(self):
        rng = np.random.Generator(np.random.Philox(9))
        values = rng.normal(scale=20, size=(8, 8))
        delay = rng.normal(scale=5, size=(8, 8))
        ifg = Interferogram.from_values(values)
        back = apply_delay_correction(apply_delay_correction(ifg, delay), -delay)
        assert np.abs(back.values - ifg.values).max() <= 1e-9

    def test_mask_unchanged(self):
        ifg = Interferogram.from_parts(np.ones((2, 2)), [[True, False], [False, False]])
        out = apply_delay_correction(ifg, np.ones((2, 2)))
        assert np.array_equal(out.missing, ifg.missing)

    def test_shape_mismatch(self):
        ifg = Interferogram.from_values(np.ones((2, 2)))
        with pytest.raises(ValueError):
            apply_delay_correction(ifg, np.ones((3, 3)))


class TestPipeline:
    def test_dense_input_is_scaled_only(self):
        rng = np.random.Generator(np.random.Philox(21))
        grid = rng.uniform(-20, 20, size=(12, 12))
        grid -= grid.mean()
        out = preprocess_pipeline(Interferogram.from_values(grid.astype(np.float32)))
        assert np.abs(out - np.asarray(grid, np.float32).astype(float) / 30.0).max() < 1e-7

    def test_output_dense_in_range(self):
        rng = np.random.Generator(np.random.Philox(22))
        values = rng.normal(scale=20, size=(24, 24))
        missing = rng.random((24, 24)) < 0.1
        ifg = Interferogram.from_parts(values, missing)
        out = preprocess_pipeline(ifg, cfg=PreprocessConfig(dilation_radius=1, closing_radius=1))
        assert not np.isnan(out).any()
        assert (out >= -1).all() and (out <= 1).all()

    def test_plane_recovery_end_to_end(self):
        yy, xx = np.mgrid[0:20, 0:20].astype(float)
        plane = 0.8 * yy - 0.5 * xx
        plane -= plane.mean()
        missing = np.zeros((20, 20), bool)
        missing[8:12, 8:12] = True
        ifg = Interferogram.from_parts(plane, missing)
        cfg = PreprocessConfig(dilation_radius=1, closing_radius=1)
        out = preprocess_pipeline(ifg, cfg=cfg)
        # missing values never entered; the fill recovers the plane
        expected = (plane - plane.mean()) / 30.0
        assert np.abs(out - expected).max() <= 1e-5

    def test_holes_mode_zero_fills(self):
        values = np.full((8, 8), 10.0)
        missing = np.zeros((8, 8), bool)
        missing[4, 4] = True
        ifg = Interferogram.from_parts(values, missing)
        out = preprocess_pipeline(ifg, cfg=PreprocessConfig(input_format="holes"))
        assert out[4, 4] == 0.0
        assert out[0, 0] == 0.0  # constant valid pixels center to zero

    def test_wrapped_mode_range(self):
        rng = np.random.Generator(np.random.Philox(23))
        ifg = Interferogram.from_values(rng.normal(scale=10, size=(8, 8)))
        out = preprocess_pipeline(ifg, cfg=PreprocessConfig(input_format="wrapped"))
        # wrapped values lie in [-pi, pi); after mean removal at most 2*pi wide
        assert np.abs(out).max() <= 2 * np.pi / 30.0 + 1e-12

    def test_determinism(self):
        rng = np.random.Generator(np.random.Philox(24))
        values = rng.normal(scale=15, size=(16, 16))
        missing = rng.random((16, 16)) < 0.15
        ifg = Interferogram.from_parts(values, missing)
        cfg = PreprocessConfig(dilation_radius=1, closing_radius=2)
        a = preprocess_pipeline(ifg, cfg=cfg)
        b = preprocess_pipeline(ifg, cfg=cfg)
        assert np.array_equal(a, b)
