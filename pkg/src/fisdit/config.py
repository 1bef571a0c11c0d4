"""Resolve a JSON config file plus CLI overrides into model and sparsity configs."""

from __future__ import annotations

from typing import Optional, Tuple

from .errors import ConfigError
from .model import ToyDiTConfig
from .scheduler import SparsityConfig, load_config_file

INT_KEYS = (
    "stride_n",
    "blocks_total",
    "steps_total",
    "tail_steps",
    "frames",
    "model_dim",
    "heads",
    "ffn_expansion",
    "height",
    "width",
    "weight_seed",
)
KNOWN_KEYS = set(INT_KEYS) | {"sensitive_blocks", "interleave"}

DEFAULT_STRIDE = 3
DEFAULT_TAIL = 1


def default_sensitive(blocks_total: int):
    """Head block plus the last two blocks, mirroring the 40-block setting S={0, 38, 39}."""
    if blocks_total < 4:
        return []
    return [0, blocks_total - 2, blocks_total - 1]


def _check_types(raw: dict):
    for key, value in raw.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown configuration key")
        if key in INT_KEYS and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(key, f"must be an integer, got {value!r}")
        if key == "sensitive_blocks":
            if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
                raise ConfigError(key, f"must be an array of integers, got {value!r}")
        if key == "interleave" and not isinstance(value, bool):
            raise ConfigError(key, f"must be true or false, got {value!r}")


def resolve(raw: Optional[dict] = None, **overrides) -> Tuple[ToyDiTConfig, SparsityConfig]:
    """Merge defaults, ``raw`` (file contents) and non-None ``overrides``."""
    merged = dict(raw or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    _check_types(merged)

    model_keys = ("blocks_total", "model_dim", "heads", "ffn_expansion", "frames", "height", "width", "steps_total", "weight_seed")
    model = ToyDiTConfig(**{k: merged[k] for k in model_keys if k in merged})
    sensitive = merged.get("sensitive_blocks", default_sensitive(model.blocks_total))
    sparsity = SparsityConfig(
        stride_n=merged.get("stride_n", DEFAULT_STRIDE),
        blocks_total=model.blocks_total,
        steps_total=model.steps_total,
        sensitive_blocks=frozenset(sensitive),
        tail_steps=merged.get("tail_steps", min(DEFAULT_TAIL, model.steps_total)),
        interleave=merged.get("interleave", True),
    )
    if model.frames < 2:
        raise ConfigError("frames", f"must be >= 2, got {model.frames}")
    return model, sparsity


def resolve_file(path=None, **overrides):
    raw = load_config_file(path) if path else {}
    return resolve(raw, **overrides)
