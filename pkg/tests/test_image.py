import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixent.image import (
    GrayImage,
    PGMError,
    TooFewLevels,
    UnsupportedFormat,
    compression_stats,
    empirical_entropy,
    entropy_curve,
    find_minima,
    quantize,
    read_pgm,
    ssim,
    write_pgm,
)

images = arrays(np.uint8, st.tuples(st.integers(8, 16), st.integers(8, 16)))


def two_valued(h=32, w=32):
    px = np.full((h, w), 50, np.uint8)
    px[:, w // 2 :] = 200
    return GrayImage(px)


def ssim_direct(a, b):
    """Textbook SSIM, one window at a time."""
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    x, y = a.astype(float), b.astype(float)
    vals = []
    for i in range(x.shape[0] - 7):
        for j in range(x.shape[1] - 7):
            u, v = x[i : i + 8, j : j + 8], y[i : i + 8, j : j + 8]
            mu, mv = u.mean(), v.mean()
            su, sv = u.var(), v.var()
            cov = ((u - mu) * (v - mv)).mean()
            vals.append((2 * mu * mv + c1) * (2 * cov + c2) / ((mu**2 + mv**2 + c1) * (su + sv + c2)))
    return float(np.mean(vals))


class TestPGM:
    def test_ascii(self):
        img = read_pgm(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n")
        assert img.pixels.ravel().tolist() == [0, 255, 128, 64]
        assert (img.width, img.height) == (2, 2)

    @given(images)
    def test_round_trip(self, px):
        img = GrayImage(px)
        assert read_pgm(write_pgm(img)) == img
        assert write_pgm(read_pgm(write_pgm(img))) == write_pgm(img)

    def test_p6_unsupported(self):
        with pytest.raises(UnsupportedFormat):
            read_pgm(b"P6\n1 1\n255\n\x00\x00\x00")

    def test_truncated(self):
        with pytest.raises(PGMError, match="truncated"):
            read_pgm(b"P5\n4 4\n255\n" + bytes(10))

    def test_maxval_too_large(self):
        with pytest.raises(PGMError, match="maxval"):
            read_pgm(b"P5\n1 1\n65535\n\x00\x00")

    def test_malformed_header(self):
        with pytest.raises(PGMError):
            read_pgm(b"P5\n4 x\n255\n")

    def test_value_above_maxval(self):
        with pytest.raises(PGMError):
            read_pgm(b"P2\n1 1\n15\n20\n")


class TestSSIM:
    def test_identical(self):
        img = two_valued()
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_computation(self, rng):
        a = rng.integers(0, 256, size=(12, 10)).astype(np.uint8)
        b = np.clip(a.astype(int) + rng.integers(-30, 30, size=a.shape), 0, 255).astype(np.uint8)
        assert ssim(GrayImage(a), GrayImage(b)) == pytest.approx(ssim_direct(a, b), abs=1e-10)

    def test_inverted_checkerboard(self):
        px = np.kron((np.indices((4, 4)).sum(axis=0) % 2) * 255, np.ones((2, 2))).astype(np.uint8)
        a, b = GrayImage(px), GrayImage(255 - px)
        assert ssim(a, b) == pytest.approx(ssim_direct(px, 255 - px), abs=1e-12)
        assert ssim(a, b) < 0.3

    @given(images, st.integers(0, 2**32 - 1))
    def test_symmetric_and_bounded(self, px, seed):
        other = np.random.default_rng(seed).integers(0, 256, size=px.shape).astype(np.uint8)
        a, b = GrayImage(px), GrayImage(other)
        s = ssim(a, b)
        assert abs(s - ssim(b, a)) <= 1e-12
        assert -1.0 <= s <= 1.0 + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim(GrayImage(np.zeros((8, 8))), GrayImage(np.zeros((8, 9))))


class TestCompression:
    def test_512_k16(self):
        img = GrayImage(np.zeros((512, 512), np.uint8))
        size_kb, cr = compression_stats(img, 16)
        # 512*512*4 + 16*8 bits
        assert size_kb == pytest.approx(1024.125)
        assert round(cr, 2) == 2.00

    def test_512_k6(self):
        img = GrayImage(np.zeros((512, 512), np.uint8))
        size_kb, cr = compression_stats(img, 6)
        assert size_kb == pytest.approx(768 + 48 / 1024)
        assert cr == pytest.approx(2.667, abs=1e-3)

    def test_k1_palette_only(self):
        img = GrayImage(np.zeros((4, 4), np.uint8))
        size_kb, cr = compression_stats(img, 1)
        assert size_kb == pytest.approx(8 / 1024)
        assert cr == pytest.approx(16.0)


class TestQuantize:
    def test_constant_k1(self):
        img = GrayImage(np.full((10, 10), 77, np.uint8))
        seg = quantize(img, 1)
        assert np.all(seg.labels == 0)
        assert seg.segmented == img
        assert seg.ssim_vs_original == pytest.approx(1.0)
        assert seg.empirical_entropy == 0.0

    def test_two_valued(self):
        seg = quantize(two_valued(), 2)
        assert sorted(seg.component_means) == pytest.approx([50, 200], abs=1)
        assert set(np.unique(seg.segmented.pixels)) == {50, 200}
        assert seg.empirical_entropy == pytest.approx(math.log(2))
        assert seg.ssim_vs_original == pytest.approx(1.0)
        assert seg.compression_rate > 0 and seg.labels.max() < 2

    def test_idempotent_labels(self, rng):
        px = np.concatenate([rng.normal(40, 5, 300), rng.normal(120, 8, 300), rng.normal(210, 6, 424)])
        img = GrayImage(np.clip(np.round(px), 0, 255).reshape(32, 32).astype(np.uint8))
        first = quantize(img, 3)
        second = quantize(first.segmented, 3)
        # same partition up to relabelling
        pairs = set(zip(first.labels.ravel().tolist(), second.labels.ravel().tolist()))
        assert len(pairs) == 3

    def test_too_many_components(self):
        with pytest.raises(TooFewLevels):
            quantize(two_valued(), 3)

    def test_empirical_entropy_uniform(self):
        img = GrayImage(np.arange(256, dtype=np.uint8).reshape(16, 16))
        assert empirical_entropy(img) == pytest.approx(math.log(256))


class TestCurve:
    def test_minima_definition(self):
        first, glob = find_minima([5.3, 5.2, 5.25, 5.1])
        assert (first + 1, glob + 1) == (2, 4)

    def test_minima_skip_gaps(self):
        assert find_minima([5.3, float("nan"), 5.2, 5.25]) == (2, 2)

    def test_constant_image_gaps(self):
        curve = entropy_curve(GrayImage(np.full((8, 8), 9, np.uint8)), 3)
        assert not math.isnan(curve.entropies[0])
        assert all(math.isnan(e) for e in curve.entropies[1:])
        assert set(curve.errors) == {2, 3}
        assert curve.global_min == 1
