import math

import numpy as np
import pytest

from seqvos.errors import ConfigurationError, DataError
from seqvos.mask_ops import (
    DistanceClassMap,
    DistanceConfig,
    boundary_pixels,
    decode_to_binary,
    encode_distance_classes,
    merge_objects,
    quantize,
    signed_distance,
)

from oracles import brute_boundary, brute_encode, random_mask


class TestBoundary:
    def test_empty_mask(self):
        assert boundary_pixels(np.zeros((5, 5), bool)) == set()

    def test_single_center_pixel(self):
        m = np.zeros((3, 3), bool)
        m[1, 1] = True
        assert boundary_pixels(m) == {(1, 1)}

    def test_solid_square_perimeter(self):
        m = np.zeros((5, 5), bool)
        m[1:4, 1:4] = True
        expected = {(r, c) for r in range(1, 4) for c in range(1, 4)} - {(2, 2)}
        assert boundary_pixels(m) == expected

    def test_all_true_has_no_boundary(self):
        # image border does not count as background
        assert boundary_pixels(np.ones((4, 6), bool)) == set()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            m = random_mask(rng, max_size=20)
            assert boundary_pixels(m) == brute_boundary(m)


class TestSignedDistance:
    def test_all_background(self):
        f = signed_distance(np.zeros((4, 4), bool), 20)
        assert (f == -20).all()

    def test_all_foreground(self):
        f = signed_distance(np.ones((4, 4), bool), 20)
        assert (f == 20).all()

    def test_single_center_pixel(self):
        m = np.zeros((7, 7), bool)
        m[3, 3] = True
        f = signed_distance(m, 3)
        assert f[3, 3] == 0.0 and not np.signbit(f[3, 3])
        assert f[3, 4] == -1.0
        assert f[2, 2] == pytest.approx(-math.sqrt(2))
        assert f[0, 0] == -3.0  # clipped

    def test_truncation_and_sign(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m = random_mask(rng, max_size=24)
            f = signed_distance(m, 5)
            assert np.abs(f).max() <= 5
            assert (np.signbit(f) == ~m).all()

    def test_bad_radius(self):
        with pytest.raises(ConfigurationError):
            signed_distance(np.zeros((3, 3), bool), 0)


class TestQuantize:
    @pytest.mark.parametrize("border,bin_size,classes",
                             [(20, 1, 42), (20, 10, 6), (10, 1, 22)])
    def test_class_counts(self, border, bin_size, classes):
        assert DistanceConfig(border, bin_size).class_count == classes

    def test_saturation_classes(self):
        cfg = DistanceConfig(20, 10)
        low = quantize(np.full((3, 3), -20.0), cfg)
        high = quantize(np.full((3, 3), 20.0), cfg)
        assert (low.values == 0).all()
        assert (high.values == 2 * cfg.num_bins + 1).all()

    def test_mismatched_radius(self):
        with pytest.raises(ConfigurationError):
            quantize(np.full((2, 2), 30.0), DistanceConfig(20, 1))

    def test_monotone_in_signed_distance(self):
        rng = np.random.default_rng(7)
        cfg = DistanceConfig(8, 3)
        for _ in range(20):
            m = random_mask(rng, max_size=32)
            f = signed_distance(m, 8)
            cls = quantize(f, cfg).values
            order = np.argsort(f, axis=None)
            assert (np.diff(cls.ravel()[order]) >= 0).all()

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            DistanceConfig(0, 1)
        with pytest.raises(ConfigurationError):
            DistanceConfig(5, 6)


class TestEncodeDecode:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        cfgs = [DistanceConfig(20, 1), DistanceConfig(20, 10), DistanceConfig(10, 1),
                DistanceConfig(3, 2)]
        for i in range(100):
            m = random_mask(rng)
            cfg = cfgs[i % len(cfgs)]
            assert (decode_to_binary(encode_distance_classes(m, cfg)) == m).all()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for i in range(25):
            m = random_mask(rng, max_size=32)
            for border, bin_size in ((20, 1), (20, 10), (10, 1)):
                got = encode_distance_classes(m, DistanceConfig(border, bin_size))
                want = brute_encode(m, border, bin_size)
                np.testing.assert_array_equal(got.values, want)

    def test_small_object_has_no_saturated_inside_class(self):
        # object diameter below the border size: every inside pixel is
        # within R of the contour, so the saturated inside class is absent
        m = np.zeros((64, 64), bool)
        m[30:36, 30:36] = True
        cfg = DistanceConfig(20, 1)
        cls = encode_distance_classes(m, cfg).values
        assert not (cls == cfg.class_count - 1).any()

    def test_flip_equivariance(self):
        rng = np.random.default_rng(5)
        cfg = DistanceConfig(6, 2)
        for _ in range(20):
            m = random_mask(rng, max_size=24)
            a = encode_distance_classes(m[:, ::-1], cfg).values
            b = encode_distance_classes(m, cfg).values[:, ::-1]
            np.testing.assert_array_equal(a, b)

    def test_decode_rejects_out_of_range(self):
        cfg = DistanceConfig(4, 2)
        with pytest.raises(DataError):
            DistanceClassMap(np.full((2, 2), cfg.class_count), cfg)

    def test_all_class_zero_decodes_to_background(self):
        cfg = DistanceConfig(4, 2)
        m = decode_to_binary(DistanceClassMap(np.zeros((3, 3), np.int64), cfg))
        assert not m.any()

    def test_single_pixel_example_round_trip(self):
        m = np.zeros((7, 7), bool)
        m[3, 3] = True
        cfg = DistanceConfig(3, 1)
        assert (decode_to_binary(encode_distance_classes(m, cfg)) == m).all()


class TestMergeObjects:
    def test_single_confident_map(self):
        out = merge_objects([np.full((3, 3), 0.9)])
        assert (out == 1).all()

    def test_highest_probability_wins(self):
        a = np.full((2, 2), 0.6)
        b = np.full((2, 2), 0.8)
        assert (merge_objects([a, b]) == 2).all()

    def test_below_threshold_is_background(self):
        out = merge_objects([np.full((2, 2), 0.4), np.full((2, 2), 0.4)])
        assert (out == 0).all()

    def test_tie_breaks_to_lowest_index(self):
        out = merge_objects([np.full((2, 2), 0.7), np.full((2, 2), 0.7)])
        assert (out == 1).all()

    def test_threshold_boundary_inclusive(self):
        assert (merge_objects([np.full((1, 1), 0.5)]) == 1).all()

    def test_relabeling_permutes_labels(self):
        rng = np.random.default_rng(9)
        maps = [rng.random((8, 8)) for _ in range(3)]
        base = merge_objects(maps)
        perm = [2, 0, 1]  # maps[perm[i]] becomes object i+1
        permuted = merge_objects([maps[p] for p in perm])
        inverse = np.zeros(4, dtype=int)
        for new_idx, old_idx in enumerate(perm, start=1):
            inverse[old_idx + 1] = new_idx
        # ties between equal maps never happen with continuous random draws
        np.testing.assert_array_equal(permuted, inverse[base])

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            merge_objects([np.zeros((2, 2)), np.zeros((3, 3))])

    def test_empty_list(self):
        assert (merge_objects([], shape=(2, 2)) == 0).all()
        with pytest.raises(DataError):
            merge_objects([])
