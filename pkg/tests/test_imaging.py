import numpy as np
import pytest

from forgekit.errors import DataError, DegenerateGeometryError, DimensionError
from forgekit.imaging import (DeformParams, blend, convex_hull_mask, deform_mask,
                              load_image, load_landmarks, save_image,
                              save_landmarks, validate_landmarks)
from forgekit.rng import generator_from_seed
from forgekit.toydata import face_landmarks, texture_image

from conftest import point_in_convex_polygon


class TestBlend:
    def test_mask_of_ones_returns_foreground(self, rng):
        fg = rng.random((6, 7, 3))
        bg = rng.random((6, 7, 3))
        assert np.array_equal(blend(fg, bg, np.ones((6, 7))), fg)

    def test_mask_of_zeros_returns_background(self, rng):
        fg = rng.random((6, 7, 3))
        bg = rng.random((6, 7, 3))
        assert np.array_equal(blend(fg, bg, np.zeros((6, 7))), bg)

    def test_half_mask_midpoint(self):
        fg = np.ones((4, 4, 3))
        bg = np.zeros((4, 4, 3))
        out = blend(fg, bg, np.full((4, 4), 0.5))
        assert np.allclose(out, 0.5, atol=0)

    def test_linear_in_mask(self, rng):
        fg = rng.random((8, 8, 3))
        bg = rng.random((8, 8, 3))
        m1 = rng.random((8, 8))
        m2 = rng.random((8, 8))
        for alpha in (0.0, 0.3, 0.77, 1.0):
            mixed = blend(fg, bg, alpha * m1 + (1 - alpha) * m2)
            direct = alpha * blend(fg, bg, m1) + (1 - alpha) * blend(fg, bg, m2)
            assert np.max(np.abs(mixed - direct)) < 1e-12

    def test_self_blend_is_identity(self, rng):
        x = rng.random((5, 9, 3))
        m = rng.random((5, 9))
        assert np.max(np.abs(blend(x, x, m) - x)) < 1e-12

    def test_shape_mismatch_raises(self, rng):
        with pytest.raises(DimensionError):
            blend(rng.random((4, 4, 3)), rng.random((4, 5, 3)), np.ones((4, 4)))
        with pytest.raises(DimensionError):
            blend(rng.random((4, 4, 3)), rng.random((4, 4, 3)), np.ones((5, 4)))


class TestConvexHullMask:
    def test_triangle_matches_point_in_polygon_scan(self):
        tri = [(0, 0), (0, 4), (4, 0)]
        mask = convex_hull_mask(tri, 5, 5)
        for i in range(5):
            for j in range(5):
                expected = point_in_convex_polygon(j, i, tri)
                assert mask[i, j] == (1.0 if expected else 0.0), (i, j)

    def test_landmarks_inside_own_hull(self, rng):
        # integer landmarks sit exactly on pixel centers, so the inclusive
        # rasterization must contain every generator
        pts = np.round(face_landmarks(64, rng))
        mask = convex_hull_mask(pts, 64, 64)
        for x, y in pts:
            assert mask[int(y), int(x)] == 1.0

    def test_collinear_points_raise(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull_mask([(0, 0), (1, 1), (2, 2)], 4, 4)

    def test_too_few_points_raise(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull_mask([(0, 0), (3, 1)], 4, 4)

    def test_permutation_invariant(self, rng):
        pts = rng.uniform(2, 30, size=(12, 2))
        base = convex_hull_mask(pts, 32, 32)
        for _ in range(5):
            perm = rng.permutation(12)
            assert np.array_equal(convex_hull_mask(pts[perm], 32, 32), base)


class TestDeformMask:
    def test_identity_params(self, rng):
        mask = convex_hull_mask(rng.uniform(5, 25, size=(10, 2)), 32, 32)
        out = deform_mask(mask, DeformParams.identity(), rng)
        assert np.array_equal(out, mask)

    def test_blur_creates_soft_values(self, rng):
        mask = convex_hull_mask(rng.uniform(5, 25, size=(10, 2)), 32, 32)
        out = deform_mask(mask, DeformParams(0.0, 0.0, 0.0, blur_radius=1.5), rng)
        assert np.any((out > 0.0) & (out < 1.0))

    def test_same_seed_bit_identical(self, rng):
        mask = convex_hull_mask(rng.uniform(5, 25, size=(10, 2)), 32, 32)
        params = DeformParams()
        a = deform_mask(mask, params, generator_from_seed(99))
        b = deform_mask(mask, params, generator_from_seed(99))
        assert np.array_equal(a, b)

    def test_range_stays_in_unit_interval(self, rng):
        mask = convex_hull_mask(rng.uniform(5, 55, size=(20, 2)), 64, 64)
        for seed in range(10):
            params = DeformParams(affine_jitter=rng.uniform(0, 0.1),
                                  elastic_amp=rng.uniform(0, 6),
                                  elastic_sigma=rng.uniform(1, 10),
                                  blur_radius=rng.uniform(0, 4))
            out = deform_mask(mask, params, generator_from_seed(seed))
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestIO:
    def test_png_roundtrip_8bit(self, tmp_path, rng):
        img = np.round(rng.random((16, 16, 3)) * 255) / 255
        path = tmp_path / "img.png"
        save_image(path, img)
        back = load_image(path)
        assert np.array_equal(back, img)

    def test_landmarks_json_roundtrip(self, tmp_path, rng):
        pts = face_landmarks(64, rng)
        path = tmp_path / "lm.json"
        save_landmarks(path, pts)
        assert np.allclose(load_landmarks(path), pts)

    def test_landmarks_csv_roundtrip(self, tmp_path, rng):
        pts = face_landmarks(64, rng)
        path = tmp_path / "lm.csv"
        save_landmarks(path, pts)
        assert np.allclose(load_landmarks(path), pts, atol=1e-5)

    def test_wrong_landmark_count_raises(self, tmp_path):
        path = tmp_path / "lm.json"
        path.write_text("[[1.0, 2.0], [3.0, 4.0]]")
        with pytest.raises(DataError):
            load_landmarks(path)

    def test_bounds_validation(self, rng):
        pts = face_landmarks(64, rng)
        pts[0] = (999.0, 3.0)
        with pytest.raises(DataError):
            validate_landmarks(pts, 64, 64)

    def test_texture_image_in_range(self, rng):
        img = texture_image(48, rng)
        assert img.shape == (48, 48, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0
