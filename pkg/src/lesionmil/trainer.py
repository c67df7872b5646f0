"""The alternating MIL training loop.

Each iteration sweeps the current model over every bag, selects the
highest-probability tiles per bag (one per positive bag, several per negative
bag by default), merges them with the trusted box-derived tiles, and runs one
training epoch on that temporary set. The temporary set is rebuilt from
scratch every iteration unless ``accumulate`` is requested.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .classifier import (
    AdamState,
    BagPrediction,
    ClassifierModel,
    TrainConfig,
    init_model,
    predict_batch,
    train_epoch,
)
from .data import Bag, BagLabel, Tile, TrainingCorpus, tile_pixels
from .errors import AlignmentMismatch, DegenerateCorpus, InvalidConfig
from .nn import Architecture


@dataclass(frozen=True)
class SelectionConfig:
    pos_per_bag: int = 1
    neg_per_bag: int = 5

    def __post_init__(self):
        if self.pos_per_bag < 1 or self.neg_per_bag < 1:
            raise InvalidConfig(
                f"selection quotas must be >= 1, got {self.pos_per_bag}:{self.neg_per_bag}"
            )


@dataclass(frozen=True)
class TemporarySet:
    """Instance-labeled training set for one iteration of the loop."""

    iteration: int
    entries: tuple[tuple[Tile, int], ...]

    def __post_init__(self):
        if self.iteration < 1:
            raise InvalidConfig(f"iteration index must be >= 1, got {self.iteration}")
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class TrainingHistory:
    """Per-iteration mean loss, accuracy on the temporary set, and its size."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    set_sizes: list[int] = field(default_factory=list)

    def append(self, loss: float, accuracy: float, set_size: int) -> None:
        self.losses.append(loss)
        self.accuracies.append(accuracy)
        self.set_sizes.append(set_size)

    def __len__(self) -> int:
        return len(self.losses)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss", "accuracy", "set_size"])
            for k, (lo, acc, n) in enumerate(
                zip(self.losses, self.accuracies, self.set_sizes), start=1
            ):
                writer.writerow([k, f"{lo:.10f}", f"{acc:.10f}", n])


def select_instances(
    predictions: list[BagPrediction],
    bags: tuple[Bag, ...] | list[Bag],
    config: SelectionConfig,
) -> list[tuple[Tile, int]]:
    """Top-probability tiles per bag with their pseudo-labels.

    Positive bags contribute their ``pos_per_bag`` highest-probability tiles
    labeled 1; negative bags their ``neg_per_bag`` highest labeled 0. Bags
    smaller than the quota contribute everything they have. Probability ties
    resolve to the smaller tile position.
    """
    if len(predictions) != len(bags):
        raise AlignmentMismatch(
            f"{len(predictions)} predictions for {len(bags)} bags"
        )
    selected: list[tuple[Tile, int]] = []
    for pred, bag in zip(predictions, bags):
        if pred.bag_index != bag.index:
            raise AlignmentMismatch(
                f"prediction for bag {pred.bag_index} paired with bag {bag.index}"
            )
        if len(pred.probs) != len(bag.tiles):
            raise AlignmentMismatch(
                f"bag {bag.index}: {len(pred.probs)} probabilities for "
                f"{len(bag.tiles)} tiles"
            )
        positive = bag.label is BagLabel.POSITIVE
        quota = config.pos_per_bag if positive else config.neg_per_bag
        # descending probability, ascending position on ties
        order = np.lexsort((np.arange(len(pred.probs)), -pred.probs))
        for j in order[:quota]:
            selected.append((bag.tiles[int(j)], 1 if positive else 0))
    return selected


def build_temporary_set(
    selected: list[tuple[Tile, int]],
    reinforced: tuple[Tile, ...] | list[Tile],
    k: int,
) -> TemporarySet:
    """Selected tiles plus every trusted box tile labeled 1, deduplicated on
    (bag, tile, provenance); trusted entries win any collision."""
    merged: dict[tuple, tuple[Tile, int]] = {}
    for tile, label in selected:
        merged[tile.key] = (tile, label)
    for tile in reinforced:
        merged[tile.key] = (tile, 1)
    return TemporarySet(k, tuple(merged.values()))


def _bag_tile_stack(bag: Bag) -> np.ndarray:
    return np.stack([tile_pixels(bag.image, t) for t in bag.tiles])


def train(
    corpus: TrainingCorpus,
    train_config: TrainConfig,
    selection_config: SelectionConfig,
    epochs: int | None = None,
    architecture: Architecture | None = None,
    accumulate: bool = False,
    iteration_hook: Callable[[int, TemporarySet], None] | None = None,
) -> tuple[ClassifierModel, TrainingHistory]:
    """Run the full alternating loop and return the final model and history.

    Deterministic for a fixed ``train_config.seed``. ``iteration_hook``, when
    given, observes every temporary set as it is built (useful for audits).
    """
    bags = corpus.bags
    if corpus.n_positive == 0 or corpus.n_negative == 0:
        raise DegenerateCorpus(
            f"need both classes: {corpus.n_positive} positive / "
            f"{corpus.n_negative} negative bags"
        )
    if any(not bag.tiles for bag in bags):
        raise DegenerateCorpus("some bags have no tiles; run the tiler first")
    sizes = {t.size for b in bags for t in b.tiles}
    if len(sizes) != 1:
        raise InvalidConfig(f"mixed tile sizes in corpus: {sorted(sizes)}")
    tile_size = sizes.pop()
    for bag in bags:
        for pos, tile in enumerate(bag.tiles):
            if tile.tile_index != pos:
                raise InvalidConfig(
                    f"bag {bag.index}: tile at position {pos} has index "
                    f"{tile.tile_index}; retile the corpus"
                )

    if architecture is None:
        architecture = Architecture(input_size=tile_size)
    model = init_model(train_config.seed, architecture)
    history = TrainingHistory()
    n_epochs = train_config.epochs if epochs is None else epochs
    if n_epochs == 0:
        return model, history

    reinforced = corpus.partitions().reinforced
    # one pixel cache for the whole corpus; bag i owns rows starts[i]:starts[i+1]
    stacks = [_bag_tile_stack(bag) for bag in bags]
    starts = np.concatenate([[0], np.cumsum([len(s) for s in stacks])])
    all_tiles = np.concatenate(stacks)
    del stacks
    adam = AdamState.fresh(architecture.n_params)
    carried: dict[tuple, tuple[Tile, int]] = {}

    for k in range(1, n_epochs + 1):
        sweep = predict_batch(model, all_tiles)
        predictions = [
            BagPrediction(bag.index, sweep[starts[i] : starts[i + 1]])
            for i, bag in enumerate(bags)
        ]
        selected = select_instances(predictions, bags, selection_config)
        if accumulate:
            for tile, label in selected:
                carried[tile.key] = (tile, label)
            for tile in reinforced:
                carried[tile.key] = (tile, 1)
            temp = TemporarySet(k, tuple(carried.values()))
        else:
            temp = build_temporary_set(selected, reinforced, k)
        if iteration_hook is not None:
            iteration_hook(k, temp)

        rows = [starts[t.bag_index] + t.tile_index for t, _ in temp.entries]
        x = all_tiles[np.asarray(rows)]
        y = np.array([label for _, label in temp.entries], dtype=np.float64)
        model, mean_loss = train_epoch(model, (x, y), train_config, epoch=k, state=adam)

        train_probs = predict_batch(model, x)
        accuracy = float(np.mean((train_probs > 0.5).astype(np.float64) == y))
        history.append(mean_loss, accuracy, len(temp))

    return model, history
