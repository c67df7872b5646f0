import csv
import json

import numpy as np
import pytest
from PIL import Image

from lesionmil.classifier import init_model, load_model, save_model
from lesionmil.cli import main
from lesionmil.data import read_mask_png
from lesionmil.manifest import parse_manifest
from lesionmil.metrics import dice
from lesionmil.nn import Architecture
from lesionmil.data import ManifestRow
from lesionmil.manifest import save_manifest


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    rc = main(
        ["gen", "--out", str(root), "--n-pos", "6", "--n-neg", "6",
         "--seed", "5", "--image-size", "96"]
    )
    assert rc == 0
    return root / "manifest.csv"


def test_gen_writes_dataset(dataset):
    rows = parse_manifest(dataset)
    assert len(rows) == 12
    assert sum(1 for r in rows if r.boxes) == 6


def test_segment_fills_missing_masks(dataset, tmp_path):
    rows = parse_manifest(dataset)
    stripped = [
        ManifestRow(r.id, str(dataset.parent / r.image_path), "", r.label, r.boxes)
        for r in rows[:4]
    ]
    manifest = tmp_path / "nomasks.csv"
    save_manifest(stripped, manifest)
    rc = main(["segment", str(manifest), "--out-manifest", str(tmp_path / "seg.csv")])
    assert rc == 0
    segmented = parse_manifest(tmp_path / "seg.csv")
    assert all(r.mask_path for r in segmented)
    for row, original in zip(segmented, rows[:4]):
        produced = read_mask_png(tmp_path / row.mask_path)
        truth = read_mask_png(dataset.parent / original.mask_path)
        assert dice(produced, truth) > 0.9


def test_train_zero_epochs_equals_init(dataset, tmp_path):
    out = tmp_path / "zero.ckpt"
    rc = main(
        ["train", str(dataset), "--out", str(out), "--tile-size", "16",
         "--epochs", "0", "--seed", "9"]
    )
    assert rc == 0
    loaded = load_model(out)
    fresh = init_model(9, Architecture(input_size=16))
    assert np.array_equal(
        loaded.params.astype(np.float32), fresh.params.astype(np.float32)
    )


def test_train_eval_viz_pipeline(dataset, tmp_path):
    ckpt = tmp_path / "model.ckpt"
    history = tmp_path / "history.csv"
    rc = main(
        ["train", str(dataset), "--out", str(ckpt), "--history", str(history),
         "--tile-size", "16", "--epochs", "2", "--seed", "1"]
    )
    assert rc == 0
    with open(history) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert {"epoch", "loss", "accuracy", "set_size"} <= set(rows[0])

    report_path = tmp_path / "report.json"
    roc_path = tmp_path / "roc.csv"
    rc = main(
        ["eval", str(dataset), str(ckpt), "--report", str(report_path),
         "--roc-csv", str(roc_path)]
    )
    assert rc == 0
    doc = json.loads(report_path.read_text())
    assert doc["tp"] + doc["fp"] + doc["fn"] + doc["tn"] == 12
    with open(roc_path) as fh:
        roc_rows = list(csv.DictReader(fh))
    assert roc_rows[0]["fpr"] == "0.0000000000"

    row = parse_manifest(dataset)[0]
    heat_path = tmp_path / "heat.png"
    rc = main(
        ["viz", str(dataset.parent / row.image_path), str(ckpt),
         "--mask", str(dataset.parent / row.mask_path),
         "--out", str(heat_path), "--matrix-csv", str(tmp_path / "matrix.csv")]
    )
    assert rc == 0
    with Image.open(heat_path) as im:
        assert im.mode == "RGBA"
        assert im.size == (96, 96)
    assert (tmp_path / "matrix.csv").exists()


def test_eval_architecture_mismatch_exit_code(dataset, tmp_path, capsys):
    ckpt = tmp_path / "wrong.ckpt"
    save_model(init_model(0, Architecture(input_size=50)), ckpt)
    rc = main(["eval", str(dataset), str(ckpt), "--window-size", "16",
               "--report", str(tmp_path / "r.json")])
    assert rc != 0
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ArchitectureMismatch:")
    assert "\n" not in err


def test_missing_manifest_single_line_error(tmp_path, capsys):
    rc = main(["train", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.ckpt")])
    assert rc != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: MissingFile:")
    assert "\n" not in err


def test_config_file_unknown_key(dataset, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("tile_size = 16\nbogus_key = 3\n")
    rc = main(["train", str(dataset), "--out", str(tmp_path / "m.ckpt"),
               "--config", str(cfg)])
    assert rc != 0
    assert "bogus_key" in capsys.readouterr().err


def test_config_file_flag_override(dataset, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# run settings\ntile_size = 16\nepochs = 0\nseed = 4\n")
    out = tmp_path / "m.ckpt"
    rc = main(["train", str(dataset), "--out", str(out), "--config", str(cfg),
               "--seed", "12"])
    assert rc == 0
    assert load_model(out).rng_seed == 12  # flag beat the file value


def test_no_reinforced_keeps_weak_inventory(dataset, tmp_path):
    """Ablation flag drops only the box tiles; the weak lattice must match."""
    from lesionmil.manifest import load_corpus
    from lesionmil.tiler import TilerConfig, tile_corpus

    base = load_corpus(dataset, tile_size=16)
    with_boxes = tile_corpus(base, TilerConfig(16, 8), use_boxes=True)
    without = tile_corpus(base, TilerConfig(16, 8), use_boxes=False)
    for a, b in zip(with_boxes.bags, without.bags):
        assert a.weak_tiles == b.weak_tiles
        assert b.reinforced_tiles == ()
