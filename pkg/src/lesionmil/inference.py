"""Sliding-window inference, the bag-level decision rule, and heatmaps.

A trained model is slid over the masked image on the same lattice the tiler
uses. The resulting probability matrix drives three consumers: the image
label (positive iff any window probability strictly exceeds the threshold),
a continuous image score (the maximum window probability, used for ROC), and
an RGBA heatmap where overlapping windows are fused per pixel and colored
from blue (0) to red (1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .classifier import ClassifierModel, predict_batch
from .data import BagLabel, LesionImage, RegionMask
from .errors import ArchitectureMismatch, InvalidConfig, ShapeMismatch
from .tiler import window_grid


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Grid of window probabilities; cells excluded by the mask are absent."""

    probs: np.ndarray  # (rows, cols) float64, NaN where absent
    present: np.ndarray  # (rows, cols) bool
    window_size: int
    stride: int

    def __post_init__(self):
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        present = np.ascontiguousarray(np.asarray(self.present, dtype=bool))
        if probs.shape != present.shape:
            raise ShapeMismatch(
                f"probs {probs.shape} vs presence {present.shape}"
            )
        probs.setflags(write=False)
        present.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "present", present)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def n_present(self) -> int:
        return int(np.count_nonzero(self.present))

    def origin(self, a: int, b: int) -> tuple[int, int]:
        return a * self.stride, b * self.stride

    def present_values(self) -> np.ndarray:
        return self.probs[self.present]


@dataclass(frozen=True)
class Heatmap:
    """RGBA overlay: blended colors where windows cover the mask, alpha 0
    elsewhere so the original image shows through."""

    pixels: np.ndarray  # (H, W, 4) uint8
    alpha: float


def slide_windows(
    model: ClassifierModel,
    image: LesionImage,
    mask: RegionMask,
    window_size: int | None = None,
    stride: int | None = None,
    inclusion_fraction: float = 0.5,
) -> ProbabilityMatrix:
    """Classify every mask-included window on the tiler lattice."""
    s = model.arch.input_size if window_size is None else window_size
    if s != model.arch.input_size:
        raise ArchitectureMismatch(
            f"window size {s} does not match model input {model.arch.input_size}"
        )
    if mask.shape != image.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs image {image.shape}")
    if s > min(image.shape):
        raise ShapeMismatch(
            f"window size {s} exceeds image of shape {image.shape}"
        )
    stride = max(1, s // 2) if stride is None else stride
    if not 1 <= stride <= s:
        raise InvalidConfig(f"stride must be in [1, window size], got {stride}")

    keep, rows, cols = window_grid(mask.pixels, s, stride, inclusion_fraction)
    probs = np.full((max(rows, 0), max(cols, 0)), np.nan)
    coords = np.argwhere(keep)
    if len(coords):
        windows = np.stack(
            [
                image.pixels[a * stride : a * stride + s, b * stride : b * stride + s]
                for a, b in coords
            ]
        )
        values = predict_batch(model, windows)
        probs[coords[:, 0], coords[:, 1]] = values
    return ProbabilityMatrix(probs, keep, s, stride)


def classify_image(matrix: ProbabilityMatrix, threshold: float = 0.5) -> BagLabel:
    """Positive iff any present window probability strictly exceeds the
    threshold; an all-absent matrix is negative."""
    values = matrix.present_values()
    if values.size and bool(np.any(values > threshold)):
        return BagLabel.POSITIVE
    return BagLabel.NEGATIVE


def image_score(matrix: ProbabilityMatrix) -> float:
    """Maximum present window probability; 0 when nothing was classified."""
    values = matrix.present_values()
    return float(values.max()) if values.size else 0.0


def _hue_to_rgb(hue_deg: np.ndarray) -> np.ndarray:
    """HSV -> RGB at full saturation and value, vectorized; returns floats
    in [0, 1] with shape hue.shape + (3,)."""
    h = np.asarray(hue_deg, dtype=np.float64) / 60.0
    c = 1.0
    x = c * (1.0 - np.abs(np.mod(h, 2.0) - 1.0))
    zeros = np.zeros_like(x)
    sector = np.floor(h).astype(int) % 6
    lut = [
        (c, x, zeros),
        (x, c, zeros),
        (zeros, c, x),
        (zeros, x, c),
        (x, zeros, c),
        (c, zeros, x),
    ]
    rgb = np.zeros(h.shape + (3,))
    for idx, (r, g, b) in enumerate(lut):
        pick = sector == idx
        rgb[pick, 0] = np.broadcast_to(r, h.shape)[pick]
        rgb[pick, 1] = np.broadcast_to(g, h.shape)[pick]
        rgb[pick, 2] = np.broadcast_to(b, h.shape)[pick]
    return rgb


def probability_to_rgb(p: np.ndarray) -> np.ndarray:
    """Blue (240 degrees) at p=0 linearly to red (0 degrees) at p=1."""
    return _hue_to_rgb(240.0 * (1.0 - np.asarray(p, dtype=np.float64)))


def render_heatmap(
    matrix: ProbabilityMatrix,
    image: LesionImage,
    mask: RegionMask,
    alpha: float = 0.4,
    fusion: str = "mean",
) -> Heatmap:
    """Fuse overlapping windows per pixel and blend the colormap onto the
    image. Pixels covered by no present window, or outside the mask, stay
    fully transparent."""
    if mask.shape != image.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs image {image.shape}")
    h, w = image.shape
    s, stride = matrix.window_size, matrix.stride
    rows, cols = matrix.shape
    if rows and cols:
        max_r, max_c = (rows - 1) * stride + s, (cols - 1) * stride + s
        if max_r > h or max_c > w:
            raise ShapeMismatch(
                f"matrix lattice {(max_r, max_c)} exceeds image {(h, w)}"
            )
    if not 0.0 <= alpha <= 1.0:
        raise InvalidConfig(f"alpha must be in [0, 1], got {alpha}")
    if fusion not in ("mean", "max"):
        raise InvalidConfig(f"fusion must be 'mean' or 'max', got {fusion!r}")

    acc = np.zeros((h, w))
    count = np.zeros((h, w), dtype=np.int32)
    for a, b in np.argwhere(matrix.present):
        r0, c0 = a * stride, b * stride
        p = matrix.probs[a, b]
        if fusion == "mean":
            acc[r0 : r0 + s, c0 : c0 + s] += p
        else:
            np.maximum(acc[r0 : r0 + s, c0 : c0 + s], p, out=acc[r0 : r0 + s, c0 : c0 + s])
        count[r0 : r0 + s, c0 : c0 + s] += 1

    covered = (count > 0) & mask.pixels
    per_pixel = np.zeros((h, w))
    if fusion == "mean":
        np.divide(acc, count, out=per_pixel, where=count > 0)
    else:
        per_pixel = acc

    color = np.round(probability_to_rgb(per_pixel) * 255.0)
    original = image.pixels.astype(np.float64)
    blended = np.round(alpha * color + (1.0 - alpha) * original)

    out = np.empty((h, w, 4), dtype=np.uint8)
    out[..., :3] = np.where(covered[..., None], blended, original).astype(np.uint8)
    out[..., 3] = np.where(covered, 255, 0).astype(np.uint8)
    return Heatmap(out, alpha)


def write_heatmap_png(heatmap: Heatmap, path: str | Path) -> None:
    Image.fromarray(heatmap.pixels, mode="RGBA").save(path)


def matrix_to_csv(matrix: ProbabilityMatrix, path: str | Path) -> None:
    """Dump present cells as (row, col, origin_r, origin_c, p)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "origin_r", "origin_c", "p"])
        for a, b in np.argwhere(matrix.present):
            r0, c0 = matrix.origin(int(a), int(b))
            writer.writerow([int(a), int(b), r0, c0, f"{matrix.probs[a, b]:.10f}"])
