import numpy as np
import pytest

from lesionmil.data import MaskSource, RegionMask
from lesionmil.errors import EmptyForeground, OracleMaskMissing
from lesionmil.segmenter import (
    Provider,
    SegmenterConfig,
    disk,
    postprocess_mask,
    produce_mask,
    segment,
)

from conftest import gray_image, make_image


def ellipse_scene(h=96, w=96, seed=3):
    """Dark ellipse on a light noisy ground plus its exact mask."""
    rng = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    mask = ((rows - h / 2) / 28.0) ** 2 + ((cols - w / 2) / 20.0) ** 2 <= 1.0
    canvas = np.where(mask, 160.0, 240.0) + rng.normal(0, 6, size=(h, w))
    pixels = np.clip(np.repeat(canvas[:, :, None], 3, axis=2), 0, 255)
    return make_image(pixels, "ellipse"), mask


def test_oracle_returns_supplied_mask_unchanged():
    mask = RegionMask(np.eye(8, dtype=bool))
    config = SegmenterConfig(provider=Provider.ORACLE)
    out = segment(gray_image(8, 8), config, oracle_mask=mask)
    assert out is mask


def test_oracle_missing_mask():
    config = SegmenterConfig(provider=Provider.ORACLE)
    with pytest.raises(OracleMaskMissing):
        segment(gray_image(8, 8), config)


def test_baseline_recovers_ellipse():
    image, truth = ellipse_scene()
    mask = produce_mask(image, SegmenterConfig(baseline_threshold=200))
    assert mask.source is MaskSource.BASELINE_SEGMENTER
    inter = np.count_nonzero(mask.pixels & truth)
    union = np.count_nonzero(mask.pixels | truth)
    assert inter / union > 0.9
    assert np.all(mask.pixels[truth])  # foreground covers the ellipse interior


def test_baseline_all_white_is_empty():
    with pytest.raises(EmptyForeground):
        segment(gray_image(16, 16, value=255), SegmenterConfig(baseline_threshold=200))


def test_postprocess_fills_interior_hole():
    fg = np.zeros((32, 32), dtype=bool)
    fg[4:28, 4:28] = True
    fg[12:16, 12:16] = False
    out = postprocess_mask(RegionMask(fg))
    expected = np.zeros((32, 32), dtype=bool)
    expected[4:28, 4:28] = True
    assert np.array_equal(out.pixels, expected)


def test_postprocess_keeps_largest_component_unchanged():
    fg = np.zeros((40, 40), dtype=bool)
    fg[2:12, 2:12] = True  # 100 pixels
    fg[20:28, 20:28] = True  # 64 pixels
    out = postprocess_mask(RegionMask(fg))
    expected = np.zeros((40, 40), dtype=bool)
    expected[2:12, 2:12] = True
    assert np.array_equal(out.pixels, expected)


def test_postprocess_identity_on_solid_component():
    fg = np.zeros((20, 20), dtype=bool)
    fg[5:15, 3:17] = True
    out = postprocess_mask(RegionMask(fg))
    assert np.array_equal(out.pixels, fg)


def test_postprocess_idempotent_and_never_shrinks_largest():
    from scipy import ndimage

    rng = np.random.default_rng(11)
    four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    for _ in range(20):
        fg = rng.random((48, 48)) < 0.45
        if not fg.any():
            continue
        once = postprocess_mask(RegionMask(fg))
        twice = postprocess_mask(once)
        assert np.array_equal(once.pixels, twice.pixels)
        labels, n = ndimage.label(fg, structure=four)
        largest = np.bincount(labels.ravel())[1:].max()
        assert once.foreground_count >= largest  # filling never removes pixels


def test_postprocess_tie_prefers_first_row_major():
    fg = np.zeros((16, 16), dtype=bool)
    fg[1:4, 10:13] = True  # 9 px, first pixel (1, 10)
    fg[8:11, 1:4] = True  # 9 px, first pixel (8, 1)
    out = postprocess_mask(RegionMask(fg))
    assert out.pixels[1, 10]
    assert not out.pixels[8, 1]


def test_postprocess_empty_raises():
    with pytest.raises(EmptyForeground):
        postprocess_mask(RegionMask(np.zeros((8, 8), dtype=bool)))


def test_disk_radius_zero_is_identity_element():
    assert disk(0).shape == (1, 1)
    d2 = disk(2)
    assert d2.shape == (5, 5)
    assert d2[2, 0] and d2[0, 2] and not d2[0, 0]
