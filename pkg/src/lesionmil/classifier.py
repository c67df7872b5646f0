"""Trainable instance-level classifier: tile pixels -> positive probability.

The model is the compact network from :mod:`lesionmil.nn`; this module adds
normalization, bag-level prediction, the Adam training step, and the binary
checkpoint format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import Bag, tile_pixels
from .errors import (
    ArchitectureMismatch,
    CorruptCheckpoint,
    EmptyBag,
    EmptyTrainingSet,
    InvalidConfig,
    VersionMismatch,
)
from .nn import Architecture, cross_entropy, sigmoid

CHECKPOINT_MAGIC = b"MILC"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sBq5iq")  # magic, version, seed, arch ints, n_params

# Per-call prediction block: big enough to amortize call overhead, small
# enough that the im2col buffers stay cache-resident.
_PREDICT_CHUNK = 256
_SHUFFLE_SALT = 0x5EED


@dataclass(frozen=True)
class ClassifierModel:
    arch: Architecture
    params: np.ndarray  # flat float64
    rng_seed: int

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (self.arch.n_params,):
            raise ArchitectureMismatch(
                f"architecture wants {self.arch.n_params} parameters, got {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidConfig("model parameters must be finite")
        p = np.ascontiguousarray(p)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    lr_decay: float = 0.3
    decay_epochs: tuple[int, ...] = (15, 25)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(self.decay_epochs))
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise InvalidConfig(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise InvalidConfig(f"lr_decay must be in (0, 1], got {self.lr_decay}")

    def learning_rate_at(self, epoch: int) -> float:
        drops = sum(1 for e in self.decay_epochs if epoch >= e)
        return self.learning_rate * self.lr_decay**drops


@dataclass
class AdamState:
    """First/second moment accumulators; shared across epochs by the caller."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


@dataclass(frozen=True)
class BagPrediction:
    """Per-tile positive probabilities for one bag, aligned with tile order."""

    bag_index: int
    probs: np.ndarray
    argmax_index: int = field(default=-1)

    def __post_init__(self):
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if self.argmax_index < 0:
            object.__setattr__(self, "argmax_index", int(np.argmax(probs)))


def init_model(seed: int, arch: Architecture) -> ClassifierModel:
    """Deterministic fan-in uniform initialization with zero biases."""
    return ClassifierModel(arch, nn.init_params(arch, seed), seed)


def normalize_tiles(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit intensities to [0, 1]; pass floats through unchanged."""
    arr = np.asarray(pixels)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def predict_batch(model: ClassifierModel, tiles: np.ndarray) -> np.ndarray:
    """Positive probabilities for a (B, s, s, 3) stack of tiles."""
    tiles = np.asarray(tiles)
    if tiles.ndim == 3:
        tiles = tiles[None]
    out = np.empty(tiles.shape[0])
    for lo in range(0, tiles.shape[0], _PREDICT_CHUNK):
        chunk = normalize_tiles(tiles[lo : lo + _PREDICT_CHUNK])
        out[lo : lo + chunk.shape[0]] = sigmoid(
            nn.forward_logits(model.arch, model.params, chunk)
        )
    return out


def predict(model: ClassifierModel, tile: np.ndarray) -> float:
    return float(predict_batch(model, tile)[0])


def predict_bag(model: ClassifierModel, bag: Bag) -> BagPrediction:
    """Probability vector over the bag's tiles; argmax ties go to the
    smallest tile position."""
    if not bag.tiles:
        raise EmptyBag(f"bag {bag.index} has no tiles")
    stack = np.stack([tile_pixels(bag.image, t) for t in bag.tiles])
    return BagPrediction(bag.index, predict_batch(model, stack))


def loss(y_hat, y) -> np.ndarray | float:
    """Binary cross-entropy; scalar in, scalar out."""
    values = cross_entropy(y_hat, y)
    return float(values) if np.isscalar(y_hat) or np.ndim(y_hat) == 0 else values


def _as_arrays(labeled_tiles) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(labeled_tiles, tuple) and len(labeled_tiles) == 2:
        x, y = labeled_tiles
        return np.asarray(x), np.asarray(y, dtype=np.float64)
    pairs = list(labeled_tiles)
    if not pairs:
        raise EmptyTrainingSet("no labeled tiles to train on")
    x = np.stack([p for p, _ in pairs])
    y = np.asarray([lab for _, lab in pairs], dtype=np.float64)
    return x, y


def train_epoch(
    model: ClassifierModel,
    labeled_tiles,
    config: TrainConfig,
    epoch: int = 1,
    state: AdamState | None = None,
) -> tuple[ClassifierModel, float]:
    """One shuffled pass of Adam mini-batch updates.

    ``labeled_tiles`` is either a list of (pixels, label) pairs or a
    pre-stacked ``(X, y)`` tuple. The shuffle order is derived from
    (config.seed, epoch) only, so repeated runs are identical. Returns the
    updated model and the mean per-example loss observed during the pass.
    """
    x, y = _as_arrays(labeled_tiles)
    n = x.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no labeled tiles to train on")

    if state is None:
        state = AdamState.fresh(model.arch.n_params)
    params = model.params.copy()
    order = np.random.default_rng([config.seed, _SHUFFLE_SALT, epoch]).permutation(n)
    lr = config.learning_rate_at(epoch)

    total = 0.0
    for lo in range(0, n, config.batch_size):
        idx = order[lo : lo + config.batch_size]
        bx = normalize_tiles(x[idx])
        by = y[idx]
        batch_loss, grad = nn.loss_and_grad(model.arch, params, bx, by)
        total += batch_loss * len(idx)

        state.t += 1
        state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
        state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
        m_hat = state.m / (1.0 - config.beta1**state.t)
        v_hat = state.v / (1.0 - config.beta2**state.t)
        params -= lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)

    updated = ClassifierModel(model.arch, params, model.rng_seed)
    return updated, total / n


# --- checkpoint persistence -------------------------------------------------

def save_model(model: ClassifierModel, path: str | Path) -> None:
    """Write the checkpoint: header plus little-endian float32 parameters."""
    arch = model.arch
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.rng_seed,
        arch.input_size,
        arch.in_channels,
        arch.conv_channels[0],
        arch.conv_channels[1],
        arch.kernel,
        arch.n_params,
    )
    payload = model.params.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_model(path: str | Path) -> ClassifierModel:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CorruptCheckpoint(f"{path}: file shorter than header")
    magic, version, seed, size, in_c, c1, c2, kernel, n_params = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    arch = Architecture(size, in_c, (c1, c2), kernel)
    if n_params != arch.n_params:
        raise CorruptCheckpoint(
            f"{path}: header claims {n_params} parameters, architecture "
            f"needs {arch.n_params}"
        )
    expected = _HEADER.size + 4 * n_params
    if len(blob) != expected:
        raise CorruptCheckpoint(
            f"{path}: expected {expected} bytes, found {len(blob)}"
        )
    params = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return ClassifierModel(arch, params, seed)
