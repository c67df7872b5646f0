"""Seeded generator of synthetic lesion images with ground-truth masks.

Each image holds one textured dark ellipse ("blob") on a light noisy
background. Positive images additionally carry a handful of spike motifs:
short combs of alternating dark/light strokes crossing the blob boundary,
each recorded as a box annotation. Negative and positive images are drawn
from identical blob/noise/clutter distributions, so the motifs are the only
statistical difference between the classes.

Background clutter (faint comb fragments well away from the blob) appears in
both classes alike; it never overlaps any mask-included tile, so it only
matters when segmentation is deliberately skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    BagLabel,
    BoxAnnotation,
    ManifestRow,
    read_mask_png,
    write_image_png,
    write_mask_png,
)
from .errors import InvalidConfig, IoFailure, MalformedManifest, MissingFile
from .manifest import parse_manifest, save_manifest


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_pos: int = 10
    n_neg: int = 10
    image_size: int = 128
    blob_radius: tuple[float, float] = (0.30, 0.42)  # fraction of image size
    spikes_per_positive: tuple[int, int] = (3, 8)
    motif_size: tuple[int, int] = (12, 16)
    noise_std: float = 8.0
    box_size: int = 16
    clutter_per_image: tuple[int, int] = (6, 12)
    distractors_per_image: tuple[int, int] = (5, 12)
    background_level: float = 235.0
    blob_level: float = 172.0
    spike_dark: float = 104.0
    spike_light: float = 240.0
    distractor_level: float = 124.0

    def __post_init__(self):
        if self.n_pos < 0 or self.n_neg < 0:
            raise InvalidConfig("image counts must be >= 0")
        if self.motif_size[1] > self.box_size:
            raise InvalidConfig(
                f"motif size {self.motif_size[1]} exceeds box size {self.box_size}"
            )
        if self.box_size > self.image_size // 4:
            raise InvalidConfig(
                f"box size {self.box_size} exceeds image_size/4 = {self.image_size // 4}"
            )
        if not 0.0 < self.blob_radius[0] <= self.blob_radius[1] < 0.5:
            raise InvalidConfig(f"blob radius range {self.blob_radius} out of range")
        if self.noise_std < 0:
            raise InvalidConfig("noise_std must be >= 0")


@dataclass(frozen=True)
class DatasetSummary:
    n_pos: int
    n_neg: int
    n_boxes: int
    mean_blob_area: float


def _paint_segment(canvas: np.ndarray, p0: np.ndarray, p1: np.ndarray, value: float) -> None:
    """Rasterize a thin stroke by stamping 2x2 blocks along the segment."""
    h, w = canvas.shape[:2]
    length = float(np.hypot(*(p1 - p0)))
    steps = max(2, int(np.ceil(length * 2)))
    for t in np.linspace(0.0, 1.0, steps):
        r, c = np.round(p0 + t * (p1 - p0)).astype(int)
        r0, r1 = max(r, 0), min(r + 2, h)
        c0, c1 = max(c, 0), min(c + 2, w)
        if r0 < r1 and c0 < c1:
            canvas[r0:r1, c0:c1] = value


def _paint_comb(
    canvas: np.ndarray,
    center: np.ndarray,
    normal: np.ndarray,
    tangent: np.ndarray,
    n_strokes: int,
    length: float,
    dark: float,
    light: float,
    spacing: float = 2.6,
) -> None:
    """Alternating dark/light strokes along the normal, offset tangentially."""
    half = length / 2.0
    for idx in range(n_strokes):
        offset = (idx - (n_strokes - 1) / 2.0) * spacing
        base = center + offset * tangent
        value = dark if idx % 2 == 0 else light
        _paint_segment(canvas, base - half * normal, base + half * normal, value)


def _synthesize(
    rng: np.random.Generator, cfg: GenConfig, positive: bool
) -> tuple[np.ndarray, np.ndarray, tuple[BoxAnnotation, ...]]:
    size = cfg.image_size
    jitter = 0.035 * size
    center = size / 2.0 + rng.uniform(-jitter, jitter, size=2)
    radii = rng.uniform(cfg.blob_radius[0], cfg.blob_radius[1], size=2) * size
    theta = rng.uniform(0.0, np.pi)

    # gently lumpy outline: a low-order angular modulation of the radius,
    # identically distributed in both classes (total amplitude <= 8%)
    wobble_amp = rng.uniform(0.01, 0.04, size=2)
    wobble_k = rng.integers(3, 8, size=2)
    wobble_phase = rng.uniform(0.0, 2.0 * np.pi, size=2)

    def wobble_at(phi):
        return 1.0 + sum(
            wobble_amp[i] * np.sin(wobble_k[i] * phi + wobble_phase[i])
            for i in range(2)
        )

    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    dr, dc = rows - center[0], cols - center[1]
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    u = dr * cos_t + dc * sin_t
    v = -dr * sin_t + dc * cos_t
    phi_grid = np.arctan2(v / radii[1], u / radii[0])
    rho2 = (u / radii[0]) ** 2 + (v / radii[1]) ** 2
    mask = rho2 <= wobble_at(phi_grid) ** 2

    # low-frequency texture shared by blob and background
    coarse = rng.normal(0.0, 1.0, size=(size // 8 + 2, size // 8 + 2))
    texture = np.kron(coarse, np.ones((8, 8)))[:size, :size] * 7.0

    canvas = np.where(mask, cfg.blob_level, cfg.background_level) + texture

    # Clutter combs, identically distributed in both classes. Kept at least
    # ~11px clear of the mask so no mask-included tile can reach them.
    clear = 20.0
    n_clutter = int(rng.integers(cfg.clutter_per_image[0], cfg.clutter_per_image[1] + 1))
    placed = 0
    tries = 0
    while placed < n_clutter and tries < 200:
        tries += 1
        point = rng.uniform(10, size - 10, size=2)
        pr, pc = point - center
        pu = pr * cos_t + pc * sin_t
        pv = -pr * sin_t + pc * cos_t
        margin = 1.0 + clear / float(min(radii))
        if (pu / radii[0]) ** 2 + (pv / radii[1]) ** 2 < margin**2:
            continue
        angle = rng.uniform(0.0, np.pi)
        direction = np.array([np.cos(angle), np.sin(angle)])
        tangent = np.array([-direction[1], direction[0]])
        n_strokes = int(rng.integers(2, 5))
        length = rng.uniform(8.0, cfg.motif_size[1] - 2.0)
        _paint_comb(
            canvas, point, direction, tangent, n_strokes, length,
            cfg.spike_dark, cfg.spike_light,
        )
        placed += 1

    # Interior distractor combs, identically distributed in both classes.
    # Most are short and sparse-toothed; a couple are closer to the spike
    # geometry (three tight strokes, milder contrast), so the learner has to
    # combine comb texture with boundary context to score well.
    n_distract = int(
        rng.integers(cfg.distractors_per_image[0], cfg.distractors_per_image[1] + 1)
    )
    n_hard = int(rng.integers(1, 3))
    placed = 0
    tries = 0
    while placed < n_distract + n_hard and tries < 300:
        tries += 1
        hard = placed >= n_distract
        point = rng.uniform(0, size, size=2)
        pr, pc = point - center
        pu = pr * cos_t + pc * sin_t
        pv = -pr * sin_t + pc * cos_t
        rho = np.sqrt((pu / radii[0]) ** 2 + (pv / radii[1]) ** 2)
        if rho > (0.55 if hard else 0.70):
            continue
        angle = rng.uniform(0.0, np.pi)
        direction = np.array([np.cos(angle), np.sin(angle)])
        tangent = np.array([-direction[1], direction[0]])
        if hard:
            length = rng.uniform(8.0, 10.0)
            _paint_comb(
                canvas, point, direction, tangent, 3, length,
                118.0, cfg.spike_light,
            )
        else:
            n_strokes = int(rng.integers(2, 4))
            length = rng.uniform(5.0, 9.0)
            _paint_comb(
                canvas, point, direction, tangent, n_strokes, length,
                cfg.distractor_level, cfg.spike_light, spacing=3.4,
            )
        placed += 1

    boxes: list[BoxAnnotation] = []
    if positive:
        n_spikes = int(rng.integers(cfg.spikes_per_positive[0], cfg.spikes_per_positive[1] + 1))
        phis = rng.uniform(0.0, 2.0 * np.pi, size=n_spikes)
        for phi in phis:
            motif = int(rng.integers(cfg.motif_size[0], cfg.motif_size[1] + 1))
            w = float(wobble_at(phi))
            local = np.array([w * radii[0] * np.cos(phi), w * radii[1] * np.sin(phi)])
            boundary = center + np.array(
                [local[0] * cos_t - local[1] * sin_t, local[0] * sin_t + local[1] * cos_t]
            )
            # outward normal of the implicit ellipse, rotated back to image axes
            grad_local = np.array([local[0] / radii[0] ** 2, local[1] / radii[1] ** 2])
            grad = np.array(
                [
                    grad_local[0] * cos_t - grad_local[1] * sin_t,
                    grad_local[0] * sin_t + grad_local[1] * cos_t,
                ]
            )
            normal = grad / np.linalg.norm(grad)
            tangent = np.array([-normal[1], normal[0]])
            n_strokes = int(rng.integers(3, 6))
            _paint_comb(
                canvas, boundary, normal, tangent, n_strokes, float(motif - 2),
                cfg.spike_dark, cfg.spike_light,
            )
            top = int(np.clip(round(boundary[0]) - cfg.box_size // 2, 0, size - cfg.box_size))
            left = int(np.clip(round(boundary[1]) - cfg.box_size // 2, 0, size - cfg.box_size))
            boxes.append(BoxAnnotation(top, left, cfg.box_size, cfg.box_size))

    # light purple-ish tint inside the blob, then per-channel pixel noise
    image = np.repeat(canvas[:, :, None], 3, axis=2)
    tint = np.array([4.0, -6.0, 7.0])
    image += mask[:, :, None] * tint[None, None, :]
    image += rng.normal(0.0, cfg.noise_std, size=image.shape)
    return np.clip(image, 0, 255).astype(np.uint8), mask, tuple(boxes)


def generate(config: GenConfig, out_dir: str | Path) -> Path:
    """Write images, masks, and the manifest; returns the manifest path.

    Per-image RNG streams are derived from (seed, image ordinal), so output
    is byte-for-byte reproducible and independent of generation order.
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directories in {out_dir}: {exc}") from exc

    rows: list[ManifestRow] = []
    total = config.n_pos + config.n_neg
    for ordinal in range(total):
        positive = ordinal < config.n_pos
        label = BagLabel.POSITIVE if positive else BagLabel.NEGATIVE
        name = f"{'pos' if positive else 'neg'}_{ordinal:04d}"
        rng = np.random.default_rng([config.seed, ordinal])
        image, mask, boxes = _synthesize(rng, config, positive)
        image_rel = f"images/{name}.png"
        mask_rel = f"masks/{name}.png"
        try:
            write_image_png(out_dir / image_rel, image)
            write_mask_png(out_dir / mask_rel, mask)
        except OSError as exc:
            raise IoFailure(f"cannot write {name} under {out_dir}: {exc}") from exc
        rows.append(ManifestRow(name, image_rel, mask_rel, label, boxes))

    manifest_path = out_dir / "manifest.csv"
    save_manifest(rows, manifest_path)
    return manifest_path


def describe(manifest_path: str | Path) -> DatasetSummary:
    """Exact class, box, and mask-area statistics for a generated dataset."""
    manifest_path = Path(manifest_path)
    rows = parse_manifest(manifest_path)
    base = manifest_path.parent
    n_pos = sum(1 for r in rows if r.label is BagLabel.POSITIVE)
    n_boxes = sum(len(r.boxes) for r in rows)
    areas = []
    for row in rows:
        if not row.mask_path:
            continue
        mask_file = base / row.mask_path
        if not mask_file.exists():
            raise MissingFile(f"mask {mask_file} named by manifest does not exist")
        areas.append(int(np.count_nonzero(read_mask_png(mask_file))))
    if rows and not areas:
        raise MalformedManifest(f"{manifest_path}: no mask paths to summarize")
    mean_area = float(np.mean(areas)) if areas else 0.0
    return DatasetSummary(n_pos, len(rows) - n_pos, n_boxes, mean_area)
