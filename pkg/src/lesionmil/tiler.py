"""Partition masked images into overlapping tiles and extract box tiles.

Weak tiles come from a regular lattice with origins at multiples of the step
size; a lattice cell is kept when at least ``inclusion_fraction`` of its
footprint lies on mask foreground. Box-derived tiles carry trusted positive
labels and are appended after the weak tiles so that within a bag
``bag.tiles[k].tile_index == k``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import (
    Bag,
    BoxAnnotation,
    Provenance,
    Tile,
    TileLabel,
    TrainingCorpus,
    tile_label_for,
)
from .errors import BoxOutsideImage, InvalidConfig, NoTilesIncluded


@dataclass(frozen=True)
class TilerConfig:
    tile_size: int = 50
    step: int | None = None  # defaults to tile_size // 2
    inclusion_fraction: float = 0.5

    def __post_init__(self):
        if self.step is None:
            object.__setattr__(self, "step", max(1, self.tile_size // 2))
        if self.tile_size < 1:
            raise InvalidConfig(f"tile_size must be >= 1, got {self.tile_size}")
        if not 1 <= self.step <= self.tile_size:
            raise InvalidConfig(
                f"step must be in [1, tile_size], got step={self.step} "
                f"tile_size={self.tile_size}"
            )
        if not 0.0 < self.inclusion_fraction <= 1.0:
            raise InvalidConfig(
                f"inclusion_fraction must be in (0, 1], got {self.inclusion_fraction}"
            )


def window_grid(
    mask: np.ndarray, size: int, step: int, inclusion_fraction: float
) -> tuple[np.ndarray, int, int]:
    """Inclusion decisions for the lattice of size x size windows over a mask.

    Returns (keep, grid_rows, grid_cols) where keep[a, b] is True when the
    window with origin (a*step, b*step) has a foreground fraction of at least
    inclusion_fraction. Shared by the tiler and the sliding-window inference
    so that both walk the identical lattice.
    """
    h, w = mask.shape
    grid_rows = (h - size) // step + 1 if h >= size else 0
    grid_cols = (w - size) // step + 1 if w >= size else 0
    if grid_rows == 0 or grid_cols == 0:
        return np.zeros((max(grid_rows, 0), max(grid_cols, 0)), dtype=bool), grid_rows, grid_cols

    # Summed-area table: window sums in O(1) per lattice cell.
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask, axis=0), axis=1, out=integral[1:, 1:])
    r0 = np.arange(grid_rows) * step
    c0 = np.arange(grid_cols) * step
    sums = (
        integral[np.ix_(r0 + size, c0 + size)]
        - integral[np.ix_(r0, c0 + size)]
        - integral[np.ix_(r0 + size, c0)]
        + integral[np.ix_(r0, c0)]
    )
    keep = sums >= inclusion_fraction * size * size
    return keep, grid_rows, grid_cols


def partition_tiles(bag: Bag, config: TilerConfig) -> list[Tile]:
    """Lattice tiles of the bag that meet the mask inclusion criterion.

    Tile indices increase row-major over the kept lattice cells. Labels are
    the bag label (weak supervision); tile pixels are left untouched even
    where they extend past the mask.
    """
    if bag.mask is None:
        raise InvalidConfig(f"bag {bag.index} has no mask; segment it first")
    s, step = config.tile_size, config.step
    keep, _, _ = window_grid(bag.mask.pixels, s, step, config.inclusion_fraction)
    label = tile_label_for(bag.label)
    tiles = [
        Tile(bag.index, j, (int(a) * step, int(b) * step), s, label, Provenance.WEAK)
        for j, (a, b) in enumerate(np.argwhere(keep))
    ]
    if not tiles:
        raise NoTilesIncluded(
            f"bag {bag.index}: no {s}x{s} tile reaches foreground fraction "
            f"{config.inclusion_fraction}"
        )
    return tiles


def reinforced_tiles_from_boxes(
    boxes: tuple[BoxAnnotation, ...],
    bag_index: int,
    image_shape: tuple[int, int],
    tile_size: int,
    start_index: int = 0,
) -> list[Tile]:
    """One trusted positive tile per box, clamped to stay inside the image."""
    h, w = image_shape
    tiles = []
    for offset, box in enumerate(boxes):
        if not box.inside(h, w):
            raise BoxOutsideImage(
                f"bag {bag_index}: box {box} outside image of shape {(h, w)}"
            )
        r = min(max(box.row, 0), h - tile_size)
        c = min(max(box.col, 0), w - tile_size)
        tiles.append(
            Tile(
                bag_index,
                start_index + offset,
                (r, c),
                tile_size,
                TileLabel.POSITIVE,
                Provenance.REINFORCED,
            )
        )
    return tiles


def extract_reinforced_tiles(
    bag: Bag, config: TilerConfig, start_index: int = 0
) -> list[Tile]:
    if config.tile_size > min(bag.image.shape):
        raise BoxOutsideImage(
            f"bag {bag.index}: tile size {config.tile_size} exceeds image {bag.image.shape}"
        )
    return reinforced_tiles_from_boxes(
        bag.boxes, bag.index, bag.image.shape, config.tile_size, start_index
    )


def tile_bag(bag: Bag, config: TilerConfig, use_boxes: bool = True) -> Bag:
    """Return the bag with its full tile list: weak lattice tiles first,
    then box-derived tiles with consecutive indices."""
    weak = partition_tiles(bag, config)
    reinforced = (
        extract_reinforced_tiles(bag, config, start_index=len(weak))
        if use_boxes
        else []
    )
    return replace(bag, tiles=tuple(weak) + tuple(reinforced))


def tile_corpus(
    corpus: TrainingCorpus, config: TilerConfig, use_boxes: bool = True
) -> TrainingCorpus:
    return TrainingCorpus(
        tuple(tile_bag(bag, config, use_boxes) for bag in corpus.bags),
        corpus.rows,
    )
