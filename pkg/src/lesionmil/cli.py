"""Command-line pipeline: gen, segment, train, eval, viz.

Progress goes to standard error; artifacts go only to the named output
files. Any domain error exits nonzero after printing a single
machine-parseable line of the form ``error: <Kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .classifier import TrainConfig, load_model, save_model
from .config import parse_config_file, resolve
from .data import (
    LesionImage,
    ManifestRow,
    MaskSource,
    RegionMask,
    read_image_png,
    read_mask_png,
    write_mask_png,
)
from .errors import LesionMilError
from .inference import (
    classify_image,
    image_score,
    matrix_to_csv,
    render_heatmap,
    slide_windows,
    write_heatmap_png,
)
from .manifest import load_corpus, parse_manifest, save_manifest, save_report
from .metrics import confusion, derive_metrics, roc_auc
from .nn import Architecture
from .segmenter import Provider, SegmenterConfig, full_foreground_mask, produce_mask
from .synth import GenConfig, generate
from .tiler import TilerConfig, tile_corpus
from .trainer import SelectionConfig, train


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _file_config(args) -> dict:
    return parse_config_file(args.config) if args.config else {}


def cmd_gen(args) -> int:
    cfg_file = _file_config(args)
    gen_config = GenConfig(
        seed=resolve("seed", args.seed, cfg_file, 0),
        n_pos=resolve("n_pos", args.n_pos, cfg_file, 10),
        n_neg=resolve("n_neg", args.n_neg, cfg_file, 10),
        image_size=resolve("image_size", args.image_size, cfg_file, 128),
        box_size=resolve("box_size", args.box_size, cfg_file, 16),
        noise_std=resolve("noise_std", args.noise_std, cfg_file, 8.0),
    )
    manifest_path = generate(gen_config, args.out)
    _log(
        f"generated {gen_config.n_pos} positive / {gen_config.n_neg} negative "
        f"images under {args.out}"
    )
    _log(f"manifest: {manifest_path}")
    return 0


def cmd_segment(args) -> int:
    cfg_file = _file_config(args)
    seg_config = SegmenterConfig(
        provider=Provider.BASELINE,
        baseline_threshold=resolve("baseline_threshold", args.threshold, cfg_file, 200),
        morphology_radius=resolve("morphology_radius", args.radius, cfg_file, 2),
    )
    manifest_path = Path(args.manifest)
    rows = parse_manifest(manifest_path)
    base = manifest_path.parent
    masks_dir = Path(args.masks_dir) if args.masks_dir else base / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)

    produced = 0
    new_rows = []
    for row in rows:
        if row.mask_path:
            new_rows.append(row)
            continue
        image = LesionImage(row.id, read_image_png(base / row.image_path))
        mask = produce_mask(image, seg_config)
        mask_file = masks_dir / f"{row.id}.png"
        write_mask_png(mask_file, mask.pixels)
        rel = mask_file.relative_to(base) if mask_file.is_relative_to(base) else mask_file
        new_rows.append(
            ManifestRow(row.id, row.image_path, str(rel), row.label, row.boxes)
        )
        produced += 1

    out_manifest = Path(args.out_manifest) if args.out_manifest else manifest_path
    save_manifest(new_rows, out_manifest)
    _log(f"segmented {produced} images; manifest: {out_manifest}")
    return 0


def _load_tiled_corpus(manifest, tile_size, step, inclusion, no_mask, use_boxes):
    corpus = load_corpus(manifest, tile_size=tile_size, ignore_masks=no_mask)
    tiler_config = TilerConfig(tile_size, step, inclusion)
    return tile_corpus(corpus, tiler_config, use_boxes=use_boxes), tiler_config


def cmd_train(args) -> int:
    cfg_file = _file_config(args)
    tile_size = resolve("tile_size", args.tile_size, cfg_file, 50)
    step = resolve("step", args.step, cfg_file, None)
    inclusion = resolve("inclusion_fraction", args.inclusion_fraction, cfg_file, 0.5)
    no_mask = args.no_mask or cfg_file.get("no_mask", False)
    no_reinforced = args.no_reinforced or cfg_file.get("no_reinforced", False)
    accumulate = args.accumulate or cfg_file.get("accumulate", False)
    channels = resolve("conv_channels", None, cfg_file, (8, 16))

    train_config = TrainConfig(
        epochs=resolve("epochs", args.epochs, cfg_file, 30),
        batch_size=resolve("batch_size", args.batch, cfg_file, 8),
        learning_rate=resolve("learning_rate", args.lr, cfg_file, 1e-3),
        lr_decay=resolve("lr_decay", args.lr_decay, cfg_file, 0.3),
        decay_epochs=resolve(
            "decay_epochs",
            tuple(args.decay_epochs) if args.decay_epochs else None,
            cfg_file,
            (15, 25),
        ),
        seed=resolve("seed", args.seed, cfg_file, 0),
    )
    selection_config = SelectionConfig(
        pos_per_bag=resolve("pos_per_bag", args.pos_per_bag, cfg_file, 1),
        neg_per_bag=resolve("neg_per_bag", args.neg_per_bag, cfg_file, 5),
    )

    corpus, _ = _load_tiled_corpus(
        args.manifest, tile_size, step, inclusion, no_mask, use_boxes=not no_reinforced
    )
    _log(
        f"loaded {len(corpus)} bags ({corpus.n_positive} positive); "
        f"{sum(len(b.tiles) for b in corpus.bags)} tiles"
    )

    hook = None
    dump_writer = None
    dump_handle = None
    if args.dump_iterations:
        dump_handle = open(args.dump_iterations, "w", newline="")
        dump_writer = csv.writer(dump_handle, lineterminator="\n")
        dump_writer.writerow(["iteration", "bag_index", "tile_index", "provenance", "label"])

        def hook(k, temp):
            for tile, label in temp.entries:
                dump_writer.writerow(
                    [k, tile.bag_index, tile.tile_index, tile.provenance.value, label]
                )

    try:
        arch = Architecture(input_size=tile_size, conv_channels=tuple(channels))
        model, history = train(
            corpus,
            train_config,
            selection_config,
            architecture=arch,
            accumulate=accumulate,
            iteration_hook=hook,
        )
    finally:
        if dump_handle is not None:
            dump_handle.close()

    for k, (lo, acc, n) in enumerate(
        zip(history.losses, history.accuracies, history.set_sizes), start=1
    ):
        _log(f"epoch {k:3d}  loss {lo:.4f}  acc {acc:.4f}  |D| {n}")

    save_model(model, args.out)
    _log(f"checkpoint: {args.out}")
    if args.history:
        history.to_csv(args.history)
        _log(f"history: {args.history}")
    return 0


def _mask_for(row, base, image, no_mask, seg_config):
    if no_mask:
        return full_foreground_mask(image)
    if row.mask_path:
        pixels = read_mask_png(base / row.mask_path)
        return RegionMask(pixels, MaskSource.ORACLE_FILE)
    return produce_mask(image, seg_config)


def cmd_eval(args) -> int:
    cfg_file = _file_config(args)
    threshold = resolve("threshold", args.threshold, cfg_file, 0.5)
    stride = resolve("stride", args.stride, cfg_file, None)
    inclusion = resolve("inclusion_fraction", args.inclusion_fraction, cfg_file, 0.5)
    window_size = resolve("tile_size", args.window_size, cfg_file, None)
    no_mask = args.no_mask or cfg_file.get("no_mask", False)

    model = load_model(args.checkpoint)
    manifest_path = Path(args.manifest)
    rows = parse_manifest(manifest_path)
    base = manifest_path.parent
    seg_config = SegmenterConfig()

    predictions, truths, scores = [], [], []
    for row in rows:
        image = LesionImage(row.id, read_image_png(base / row.image_path))
        mask = _mask_for(row, base, image, no_mask, seg_config)
        matrix = slide_windows(
            model, image, mask, window_size=window_size,
            stride=stride, inclusion_fraction=inclusion,
        )
        predictions.append(classify_image(matrix, threshold))
        scores.append(image_score(matrix))
        truths.append(row.label)

    counts = confusion(predictions, truths)
    roc = roc_auc(scores, truths)
    report = derive_metrics(counts, roc)
    save_report(report, args.report)
    _log(
        f"evaluated {len(rows)} images: precision {report.precision:.4f} "
        f"recall {report.recall:.4f} f1 {report.f1:.4f} "
        f"accuracy {report.accuracy:.4f} auc {roc.auc:.4f}"
    )
    _log(f"report: {args.report}")
    if args.roc_csv:
        with open(args.roc_csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr", "threshold"])
            for (fpr, tpr), thr in zip(roc.points, roc.thresholds):
                writer.writerow([f"{fpr:.10f}", f"{tpr:.10f}", repr(thr)])
        _log(f"roc: {args.roc_csv}")
    return 0


def cmd_viz(args) -> int:
    cfg_file = _file_config(args)
    alpha = resolve("alpha", args.alpha, cfg_file, 0.4)
    stride = resolve("stride", args.stride, cfg_file, None)
    fusion = resolve("fusion", args.fusion, cfg_file, "mean")
    inclusion = resolve("inclusion_fraction", args.inclusion_fraction, cfg_file, 0.5)

    model = load_model(args.checkpoint)
    image = LesionImage(Path(args.image).stem, read_image_png(args.image))
    if args.no_mask:
        mask = full_foreground_mask(image)
    elif args.mask:
        mask = RegionMask(read_mask_png(args.mask), MaskSource.ORACLE_FILE)
    else:
        mask = produce_mask(image, SegmenterConfig())

    matrix = slide_windows(
        model, image, mask, stride=stride, inclusion_fraction=inclusion
    )
    heatmap = render_heatmap(matrix, image, mask, alpha=alpha, fusion=fusion)
    write_heatmap_png(heatmap, args.out)
    label = classify_image(matrix)
    _log(
        f"{image.id}: {label.value} (score {image_score(matrix):.4f}, "
        f"{matrix.n_present} windows)"
    )
    _log(f"heatmap: {args.out}")
    if args.matrix_csv:
        matrix_to_csv(matrix, args.matrix_csv)
        _log(f"matrix: {args.matrix_csv}")
    return 0


def _int_pair(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionmil",
        description="Weakly-supervised lesion classification and localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--n-pos", type=int, default=None)
    gen.add_argument("--n-neg", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--image-size", type=int, default=None)
    gen.add_argument("--box-size", type=int, default=None)
    gen.add_argument("--noise-std", type=float, default=None)
    gen.add_argument("--config", default=None, help="key = value config file")
    gen.set_defaults(func=cmd_gen)

    seg = sub.add_parser("segment", help="produce masks for rows lacking one")
    seg.add_argument("manifest")
    seg.add_argument("--masks-dir", default=None)
    seg.add_argument("--out-manifest", default=None, help="default: rewrite in place")
    seg.add_argument("--threshold", type=int, default=None, help="intensity threshold")
    seg.add_argument("--radius", type=int, default=None, help="closing radius")
    seg.add_argument("--config", default=None)
    seg.set_defaults(func=cmd_segment)

    tr = sub.add_parser("train", help="run the alternating MIL training loop")
    tr.add_argument("manifest")
    tr.add_argument("--out", default="model.ckpt", help="checkpoint path")
    tr.add_argument("--history", default=None, help="per-epoch CSV path")
    tr.add_argument("--dump-iterations", default=None, help="per-iteration set CSV")
    tr.add_argument("--tile-size", type=int, default=None)
    tr.add_argument("--step", type=int, default=None)
    tr.add_argument("--inclusion-fraction", type=float, default=None)
    tr.add_argument("--pos-per-bag", type=int, default=None)
    tr.add_argument("--neg-per-bag", type=int, default=None)
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--batch", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--lr-decay", type=float, default=None)
    tr.add_argument("--decay-epochs", type=_int_pair, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument(
        "--no-reinforced",
        action="store_true",
        help="ignore box annotations (image-level labels only)",
    )
    tr.add_argument(
        "--no-mask", action="store_true", help="skip segmentation; tile whole images"
    )
    tr.add_argument(
        "--accumulate",
        action="store_true",
        help="carry selected tiles across iterations instead of rebuilding",
    )
    tr.add_argument("--config", default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="classify a test manifest and write a report")
    ev.add_argument("manifest")
    ev.add_argument("checkpoint")
    ev.add_argument("--report", default="report.json")
    ev.add_argument("--roc-csv", default=None)
    ev.add_argument("--threshold", type=float, default=None)
    ev.add_argument("--stride", type=int, default=None)
    ev.add_argument(
        "--window-size", type=int, default=None,
        help="must match the checkpoint input size; defaults to it",
    )
    ev.add_argument("--inclusion-fraction", type=float, default=None)
    ev.add_argument("--no-mask", action="store_true")
    ev.add_argument("--config", default=None)
    ev.set_defaults(func=cmd_eval)

    vz = sub.add_parser("viz", help="render a probability heatmap for one image")
    vz.add_argument("image")
    vz.add_argument("checkpoint")
    vz.add_argument("--out", default="heatmap.png")
    vz.add_argument("--mask", default=None, help="oracle mask PNG")
    vz.add_argument("--no-mask", action="store_true")
    vz.add_argument("--alpha", type=float, default=None)
    vz.add_argument("--stride", type=int, default=None)
    vz.add_argument("--inclusion-fraction", type=float, default=None)
    vz.add_argument("--fusion", choices=["mean", "max"], default=None)
    vz.add_argument("--matrix-csv", default=None)
    vz.add_argument("--config", default=None)
    vz.set_defaults(func=cmd_viz)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LesionMilError as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
