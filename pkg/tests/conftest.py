import numpy as np
import pytest

from lesionmil.data import (
    Bag,
    BagLabel,
    BoxAnnotation,
    LesionImage,
    MaskSource,
    RegionMask,
    write_image_png,
    write_mask_png,
)
from lesionmil.manifest import save_manifest
from lesionmil.data import ManifestRow


def make_image(pixels, image_id="img"):
    return LesionImage(image_id, np.asarray(pixels, dtype=np.uint8))


def gray_image(h, w, value=200, image_id="img"):
    return make_image(np.full((h, w, 3), value, dtype=np.uint8), image_id)


def full_mask(h, w, source=MaskSource.ORACLE_FILE):
    return RegionMask(np.ones((h, w), dtype=bool), source)


def make_bag(index=0, label=BagLabel.POSITIVE, h=64, w=64, boxes=(), tiles=(),
             image=None, mask=None):
    image = image if image is not None else gray_image(h, w, image_id=f"bag{index}")
    mask = mask if mask is not None else full_mask(*image.shape)
    return Bag(index, image, mask, label, tuple(boxes), tuple(tiles))


@pytest.fixture
def tiny_dataset(tmp_path):
    """Four-bag dataset on disk: two positives with boxes, two negatives."""
    rng = np.random.default_rng(0)
    rows = []
    for i in range(4):
        positive = i < 2
        name = f"{'pos' if positive else 'neg'}_{i}"
        pixels = rng.integers(150, 250, size=(64, 64, 3), dtype=np.uint8)
        mask = np.zeros((64, 64), dtype=bool)
        mask[8:56, 8:56] = True
        (tmp_path / "images").mkdir(exist_ok=True)
        (tmp_path / "masks").mkdir(exist_ok=True)
        write_image_png(tmp_path / "images" / f"{name}.png", pixels)
        write_mask_png(tmp_path / "masks" / f"{name}.png", mask)
        boxes = (BoxAnnotation(20, 20, 16, 16), BoxAnnotation(30, 36, 16, 16)) if positive else ()
        rows.append(
            ManifestRow(
                name,
                f"images/{name}.png",
                f"masks/{name}.png",
                BagLabel.POSITIVE if positive else BagLabel.NEGATIVE,
                boxes,
            )
        )
    manifest = tmp_path / "manifest.csv"
    save_manifest(rows, manifest)
    return manifest
