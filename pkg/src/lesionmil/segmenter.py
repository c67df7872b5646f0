"""Region-mask production and post-processing.

The learned segmentation network is out of scope; masks come from one of two
pluggable providers instead:

* ``ORACLE``   - a mask file supplied alongside the image, returned unchanged;
* ``BASELINE`` - global intensity threshold followed by morphological closing.

Either way, :func:`postprocess_mask` reduces the raw mask to a single
connected region without interior holes. Components use 4-connectivity and
background holes use 8-connectivity, the standard complementary pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import LesionImage, MaskSource, RegionMask
from .errors import EmptyForeground, InvalidConfig, OracleMaskMissing

# 4-connected foreground structure; the full 3x3 block is its 8-connected dual.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_BLOCK = np.ones((3, 3), dtype=bool)


class Provider(enum.Enum):
    ORACLE = "oracle"
    BASELINE = "baseline"


@dataclass(frozen=True)
class SegmenterConfig:
    provider: Provider = Provider.BASELINE
    baseline_threshold: int = 200  # pixels strictly darker than this are foreground
    morphology_radius: int = 2

    def __post_init__(self):
        if not 0 <= self.baseline_threshold <= 255:
            raise InvalidConfig(
                f"baseline_threshold must be in [0, 255], got {self.baseline_threshold}"
            )
        if self.morphology_radius < 0:
            raise InvalidConfig(
                f"morphology_radius must be >= 0, got {self.morphology_radius}"
            )


def disk(radius: int) -> np.ndarray:
    """Boolean disk structuring element of the given pixel radius."""
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    y, x = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    return x * x + y * y <= radius * radius


def segment(
    image: LesionImage,
    config: SegmenterConfig,
    oracle_mask: RegionMask | None = None,
) -> RegionMask:
    """Produce the raw (pre-postprocessing) region mask for an image."""
    if config.provider is Provider.ORACLE:
        if oracle_mask is None:
            raise OracleMaskMissing(f"image {image.id!r}: no oracle mask supplied")
        return oracle_mask

    gray = image.pixels.mean(axis=2)
    fg = gray < config.baseline_threshold
    if not fg.any():
        raise EmptyForeground(
            f"image {image.id!r}: no pixel below threshold {config.baseline_threshold}"
        )
    if config.morphology_radius > 0:
        fg = ndimage.binary_closing(fg, structure=disk(config.morphology_radius))
        if not fg.any():
            raise EmptyForeground(f"image {image.id!r}: closing removed all foreground")
    return RegionMask(fg, MaskSource.BASELINE_SEGMENTER)


def postprocess_mask(mask: RegionMask) -> RegionMask:
    """Keep the largest 4-connected component and fill its enclosed holes.

    Ties on component size keep the component whose first pixel in row-major
    order comes earliest. Idempotent: a solid single component passes through
    unchanged.
    """
    fg = mask.pixels
    if not fg.any():
        raise EmptyForeground("mask has no foreground to post-process")

    labels, n = ndimage.label(fg, structure=_CROSS)
    if n == 1:
        kept = fg
    else:
        sizes = np.bincount(labels.ravel())[1:]  # skip background label 0
        best = np.max(sizes)
        candidates = np.flatnonzero(sizes == best) + 1
        if len(candidates) == 1:
            chosen = candidates[0]
        else:
            # row-major first-pixel position breaks ties deterministically
            flat = labels.ravel()
            chosen = min(candidates, key=lambda c: int(np.argmax(flat == c)))
        kept = labels == chosen

    filled = ndimage.binary_fill_holes(kept, structure=_BLOCK)
    return RegionMask(filled, mask.source)


def produce_mask(
    image: LesionImage,
    config: SegmenterConfig,
    oracle_mask: RegionMask | None = None,
) -> RegionMask:
    """Full mask pipeline: provider output, post-processed for baseline masks.

    Oracle masks are passed through unchanged; they are expected to already
    satisfy the single-component / no-hole invariant.
    """
    raw = segment(image, config, oracle_mask)
    if config.provider is Provider.ORACLE:
        return raw
    return postprocess_mask(raw)


def full_foreground_mask(image: LesionImage) -> RegionMask:
    """Whole-image mask used when segmentation is deliberately skipped."""
    h, w = image.shape
    return RegionMask(np.ones((h, w), dtype=bool), MaskSource.BASELINE_SEGMENTER)
