"""Flat key = value run configuration files.

One ``key = value`` pair per line, ``#`` starts a comment. Every key must be
registered below; unknown keys are rejected before any work starts. Values
from the file sit between built-in defaults and explicit CLI flags: flags win.
"""

from __future__ import annotations

from pathlib import Path

from .errors import InvalidConfig


def _int(text: str) -> int:
    return int(text, 10)


def _float(text: str) -> float:
    return float(text)


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part.strip()) for part in text.split(","))


def _choice(*options: str):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {options}")
        return text

    return parse


def _flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be a boolean (true/false)")


# key -> parser; covers every module-level knob the CLI exposes
KEY_PARSERS = {
    "seed": _int,
    "tile_size": _int,
    "step": _int,
    "inclusion_fraction": _float,
    "epochs": _int,
    "batch_size": _int,
    "learning_rate": _float,
    "lr_decay": _float,
    "decay_epochs": _int_list,
    "conv_channels": _int_list,
    "pos_per_bag": _int,
    "neg_per_bag": _int,
    "threshold": _float,
    "alpha": _float,
    "stride": _int,
    "fusion": _choice("mean", "max"),
    "provider": _choice("oracle", "baseline"),
    "baseline_threshold": _int,
    "morphology_radius": _int,
    "n_pos": _int,
    "n_neg": _int,
    "image_size": _int,
    "box_size": _int,
    "noise_std": _float,
    "no_reinforced": _flag,
    "no_mask": _flag,
    "accumulate": _flag,
}


def parse_config_file(path: str | Path) -> dict:
    """Parse and validate a run-config file into typed values."""
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"config file {path} does not exist")
    values: dict = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{line_no}: expected 'key = value'")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key not in KEY_PARSERS:
            raise InvalidConfig(f"{path}:{line_no}: unknown key {key!r}")
        try:
            values[key] = KEY_PARSERS[key](text)
        except ValueError as exc:
            raise InvalidConfig(f"{path}:{line_no}: bad value for {key!r}: {exc}") from exc
    return values


def resolve(key: str, cli_value, file_values: dict, default):
    """CLI flag beats config file beats built-in default."""
    if cli_value is not None:
        return cli_value
    if key in file_values:
        return file_values[key]
    return default
