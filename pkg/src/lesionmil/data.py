"""Core domain types: images, masks, boxes, tiles, bags, and the corpus.

All types are immutable after construction (frozen dataclasses; arrays are
marked read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeMismatch


class BagLabel(enum.Enum):
    POSITIVE = "pos"
    NEGATIVE = "neg"


class MaskSource(enum.Enum):
    ORACLE_FILE = "oracle_file"
    BASELINE_SEGMENTER = "baseline_segmenter"


class TileLabel(enum.Enum):
    POSITIVE = 1
    NEGATIVE = 0
    UNKNOWN = -1


class Provenance(enum.Enum):
    WEAK = "weak"
    REINFORCED = "reinforced"


def tile_label_for(bag_label: BagLabel) -> TileLabel:
    return TileLabel.POSITIVE if bag_label is BagLabel.POSITIVE else TileLabel.NEGATIVE


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LesionImage:
    """An RGB image patch plus its physical pixel spacing (metadata only)."""

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    spacing: float = 0.25  # micrometers per pixel

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeMismatch(
                f"image {self.id!r}: expected (H, W, 3) pixels, got {px.shape}"
            )
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class RegionMask:
    """Binary region-of-interest mask paired with one image."""

    pixels: np.ndarray  # (H, W) bool
    source: MaskSource = MaskSource.ORACLE_FILE

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2:
            raise ShapeMismatch(f"mask must be 2-D, got shape {px.shape}")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.pixels))


@dataclass(frozen=True)
class BoxAnnotation:
    """Axis-aligned box marking one annotated lesion site (top-left corner)."""

    row: int
    col: int
    height: int = 50
    width: int = 50

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"box must have positive extent, got {self}")

    def inside(self, height: int, width: int) -> bool:
        return (
            self.row >= 0
            and self.col >= 0
            and self.row + self.height <= height
            and self.col + self.width <= width
        )


@dataclass(frozen=True)
class Tile:
    """A square sub-image reference: the MIL instance unit.

    Tiles do not hold pixel data; use :func:`tile_pixels` to view the pixels
    of the owning bag's image.
    """

    bag_index: int
    tile_index: int
    origin: tuple[int, int]  # (row, col) of the top-left corner
    size: int
    label: TileLabel
    provenance: Provenance

    def __post_init__(self):
        if self.provenance is Provenance.REINFORCED and self.label is TileLabel.UNKNOWN:
            raise ValueError("reinforced tiles must carry a definite label")
        if self.size < 1:
            raise ValueError(f"tile size must be >= 1, got {self.size}")

    @property
    def key(self) -> tuple[int, int, Provenance]:
        return (self.bag_index, self.tile_index, self.provenance)


def tile_pixels(image: LesionImage, tile: Tile) -> np.ndarray:
    """Read-only (size, size, 3) view of the tile footprint."""
    r, c = tile.origin
    s = tile.size
    h, w = image.shape
    if r < 0 or c < 0 or r + s > h or c + s > w:
        raise ShapeMismatch(
            f"tile at {tile.origin} size {s} exceeds image {image.shape}"
        )
    return image.pixels[r : r + s, c : c + s]


@dataclass(frozen=True)
class Bag:
    """One image with its mask, bag-level label, boxes, and instance tiles."""

    index: int
    image: LesionImage
    mask: RegionMask | None
    label: BagLabel
    boxes: tuple[BoxAnnotation, ...] = ()
    tiles: tuple[Tile, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "tiles", tuple(self.tiles))
        if self.label is BagLabel.NEGATIVE and self.boxes:
            raise ValueError(f"bag {self.index}: negative bags cannot carry boxes")
        if self.mask is not None and self.mask.shape != self.image.shape:
            raise ShapeMismatch(
                f"bag {self.index}: mask {self.mask.shape} vs image {self.image.shape}"
            )
        for pos, tile in enumerate(self.tiles):
            if tile.bag_index != self.index:
                raise ValueError(
                    f"bag {self.index}: tile {pos} references bag {tile.bag_index}"
                )

    @property
    def reinforced_tiles(self) -> tuple[Tile, ...]:
        return tuple(t for t in self.tiles if t.provenance is Provenance.REINFORCED)

    @property
    def weak_tiles(self) -> tuple[Tile, ...]:
        return tuple(t for t in self.tiles if t.provenance is Provenance.WEAK)


@dataclass(frozen=True)
class ManifestRow:
    """One manifest record; retained on the corpus so it can be re-saved."""

    id: str
    image_path: str
    mask_path: str  # empty string when the manifest supplies no mask
    label: BagLabel
    boxes: tuple[BoxAnnotation, ...] = ()


@dataclass(frozen=True)
class Partitions:
    """The training corpus split by annotation scale."""

    weak_negative: tuple[Tile, ...]
    weak_positive: tuple[Tile, ...]
    reinforced: tuple[Tile, ...]

    @property
    def all_tiles(self) -> tuple[Tile, ...]:
        return self.weak_negative + self.weak_positive + self.reinforced


@dataclass(frozen=True)
class TrainingCorpus:
    """An ordered collection of bags plus the manifest rows they came from."""

    bags: tuple[Bag, ...]
    rows: tuple[ManifestRow, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        object.__setattr__(self, "rows", tuple(self.rows))
        for pos, bag in enumerate(self.bags):
            if bag.index != pos:
                raise ValueError(f"bag at position {pos} has index {bag.index}")

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def n_positive(self) -> int:
        return sum(1 for b in self.bags if b.label is BagLabel.POSITIVE)

    @property
    def n_negative(self) -> int:
        return sum(1 for b in self.bags if b.label is BagLabel.NEGATIVE)

    def partitions(self) -> Partitions:
        weak_neg, weak_pos, reinforced = [], [], []
        for bag in self.bags:
            for tile in bag.tiles:
                if tile.provenance is Provenance.REINFORCED:
                    reinforced.append(tile)
                elif bag.label is BagLabel.POSITIVE:
                    weak_pos.append(tile)
                else:
                    weak_neg.append(tile)
        return Partitions(tuple(weak_neg), tuple(weak_pos), tuple(reinforced))

    def check_invariants(self) -> None:
        """Raise ValueError if any corpus invariant is violated."""
        parts = self.partitions()
        keys = [t.key for t in parts.all_tiles]
        if len(keys) != len(set(keys)):
            raise ValueError("partitions are not disjoint by (bag, tile, provenance)")
        for tile in parts.reinforced:
            if self.bags[tile.bag_index].label is not BagLabel.POSITIVE:
                raise ValueError(
                    f"reinforced tile {tile.key} comes from a non-positive bag"
                )


# --- PNG persistence -------------------------------------------------------

def read_image_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image_png(path: str | Path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path)


def read_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)
