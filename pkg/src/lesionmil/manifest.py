"""Dataset manifest persistence and the metrics-report JSON format.

A manifest is a CSV file with one row per bag::

    id,image_path,mask_path,label,boxes

``mask_path`` may be empty (the baseline segmenter then produces the mask),
``label`` is ``pos`` or ``neg``, and ``boxes`` is a semicolon-separated list
of ``row,col,height,width`` quadruples (empty for negative bags). Paths are
relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .data import (
    Bag,
    BagLabel,
    BoxAnnotation,
    LesionImage,
    ManifestRow,
    MaskSource,
    RegionMask,
    TrainingCorpus,
    read_image_png,
    read_mask_png,
)
from .errors import IoFailure, MalformedManifest, MissingFile, ShapeMismatch
from .metrics import ConfusionCounts, MetricsReport, RocCurve
from .segmenter import SegmenterConfig, full_foreground_mask, produce_mask
from .tiler import reinforced_tiles_from_boxes

MANIFEST_HEADER = ["id", "image_path", "mask_path", "label", "boxes"]


def _parse_boxes(text: str, line: int) -> tuple[BoxAnnotation, ...]:
    text = text.strip()
    if not text:
        return ()
    boxes = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 4:
            raise MalformedManifest(
                f"line {line}: box {chunk!r} is not 'row,col,height,width'"
            )
        try:
            r, c, bh, bw = (int(p.strip()) for p in parts)
        except ValueError:
            raise MalformedManifest(
                f"line {line}: box {chunk!r} has non-integer fields"
            ) from None
        if bh < 1 or bw < 1:
            raise MalformedManifest(f"line {line}: box {chunk!r} has empty extent")
        boxes.append(BoxAnnotation(r, c, bh, bw))
    return tuple(boxes)


def _format_boxes(boxes: tuple[BoxAnnotation, ...]) -> str:
    return ";".join(f"{b.row},{b.col},{b.height},{b.width}" for b in boxes)


def parse_manifest(path: str | Path) -> list[ManifestRow]:
    """Read and validate manifest rows without touching image files."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest {path} does not exist")
    rows: list[ManifestRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if line == 1 and [f.strip() for f in record] == MANIFEST_HEADER:
                continue
            if len(record) != len(MANIFEST_HEADER):
                raise MalformedManifest(
                    f"line {line}: expected {len(MANIFEST_HEADER)} fields, "
                    f"got {len(record)}"
                )
            bag_id, image_path, mask_path, label_text, boxes_text = (
                f.strip() for f in record
            )
            if not bag_id:
                raise MalformedManifest(f"line {line}: empty id")
            if not image_path:
                raise MalformedManifest(f"line {line}: empty image path")
            try:
                label = BagLabel(label_text)
            except ValueError:
                raise MalformedManifest(
                    f"line {line}: label must be 'pos' or 'neg', got {label_text!r}"
                ) from None
            boxes = _parse_boxes(boxes_text, line)
            if label is BagLabel.NEGATIVE and boxes:
                raise MalformedManifest(
                    f"line {line}: negative bag {bag_id!r} carries boxes"
                )
            rows.append(ManifestRow(bag_id, image_path, mask_path, label, boxes))
    return rows


def save_manifest(rows: list[ManifestRow] | tuple[ManifestRow, ...], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.id,
                    row.image_path,
                    row.mask_path,
                    row.label.value,
                    _format_boxes(row.boxes),
                ]
            )


def load_corpus(
    manifest_path: str | Path,
    tile_size: int = 50,
    segmenter_config: SegmenterConfig | None = None,
    ignore_masks: bool = False,
) -> TrainingCorpus:
    """Load every bag named by the manifest, in manifest order.

    Rows without a mask path get a mask from the baseline segmenter
    (``segmenter_config`` controls it); with ``ignore_masks`` every bag gets
    a whole-image mask instead and mask files are not read at all. Each box
    becomes a trusted positive tile immediately so the reinforced set exists
    before the weak tiling step runs.
    """
    manifest_path = Path(manifest_path)
    rows = parse_manifest(manifest_path)
    base = manifest_path.parent
    if segmenter_config is None:
        segmenter_config = SegmenterConfig()

    bags = []
    for index, row in enumerate(rows):
        line = index + 2  # data rows start after the header line
        image_file = base / row.image_path
        if not image_file.exists():
            raise MissingFile(f"line {line}: image {image_file} does not exist")
        image = LesionImage(row.id, read_image_png(image_file))
        h, w = image.shape

        if ignore_masks:
            mask = full_foreground_mask(image)
        elif row.mask_path:
            mask_file = base / row.mask_path
            if not mask_file.exists():
                raise MissingFile(f"line {line}: mask {mask_file} does not exist")
            mask_pixels = read_mask_png(mask_file)
            if mask_pixels.shape != image.shape:
                raise ShapeMismatch(
                    f"line {line}: mask {mask_pixels.shape} vs image {image.shape}"
                )
            mask = RegionMask(mask_pixels, MaskSource.ORACLE_FILE)
        else:
            mask = produce_mask(image, segmenter_config)

        for box in row.boxes:
            if not box.inside(h, w):
                raise MalformedManifest(
                    f"line {line}: box {box} exceeds image bounds {(h, w)}"
                )
        if tile_size > min(h, w):
            raise MalformedManifest(
                f"line {line}: image {(h, w)} smaller than tile size {tile_size}"
            )
        tiles = reinforced_tiles_from_boxes(row.boxes, index, (h, w), tile_size)
        bags.append(Bag(index, image, mask, row.label, row.boxes, tuple(tiles)))

    corpus = TrainingCorpus(tuple(bags), tuple(rows))
    corpus.check_invariants()
    return corpus


# --- metrics-report JSON ----------------------------------------------------

def save_report(report: MetricsReport, path: str | Path) -> None:
    """Serialize the report; every numeric field must be finite."""
    doc = {
        "tp": report.counts.tp,
        "fp": report.counts.fp,
        "fn": report.counts.fn,
        "tn": report.counts.tn,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "accuracy": report.accuracy,
        "auc": report.roc.auc if report.roc is not None else None,
        "roc": [list(pt) for pt in report.roc.points] if report.roc is not None else None,
    }
    for key, value in doc.items():
        if isinstance(value, float) and not math.isfinite(value):
            raise IoFailure(f"report field {key!r} is not finite: {value}")
    if doc["roc"] is not None and not np.all(np.isfinite(doc["roc"])):
        raise IoFailure("ROC points contain non-finite values")
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from exc


def load_report(path: str | Path) -> MetricsReport:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read report from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"report {path} is not valid JSON: {exc}") from exc
    counts = ConfusionCounts(doc["tp"], doc["fp"], doc["fn"], doc["tn"])
    roc = None
    if doc.get("roc") is not None:
        roc = RocCurve(tuple((p[0], p[1]) for p in doc["roc"]), doc["auc"])
    degenerate = []
    if counts.tp + counts.fp == 0:
        degenerate.append("precision")
    if counts.tp + counts.fn == 0:
        degenerate.append("recall")
    if doc["precision"] + doc["recall"] == 0.0:
        degenerate.append("f1")
    if counts.total == 0:
        degenerate.append("accuracy")
    return MetricsReport(
        counts,
        doc["precision"],
        doc["recall"],
        doc["f1"],
        doc["accuracy"],
        roc,
        tuple(degenerate),
    )
