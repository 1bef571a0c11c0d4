"""Interleaved anchor scheduling and the block/step sparsity gate."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import ConfigError
from .latent import FrameIndexSet


@dataclass(frozen=True)
class SparsityConfig:
    """Where and how densely frames are computed.

    ``interleave=False`` pins every block's offset to 0 (the fixed-anchor
    ablation); it is not part of the normal method.
    """

    stride_n: int
    blocks_total: int
    steps_total: int
    sensitive_blocks: frozenset = field(default_factory=frozenset)
    tail_steps: int = 1
    interleave: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sensitive_blocks", frozenset(int(b) for b in self.sensitive_blocks))
        if not isinstance(self.stride_n, int) or self.stride_n < 1:
            raise ConfigError("stride_n", f"must be an integer >= 1, got {self.stride_n!r}")
        if not isinstance(self.blocks_total, int) or self.blocks_total < 1:
            raise ConfigError("blocks_total", f"must be an integer >= 1, got {self.blocks_total!r}")
        if not isinstance(self.steps_total, int) or self.steps_total < 1:
            raise ConfigError("steps_total", f"must be an integer >= 1, got {self.steps_total!r}")
        bad = sorted(b for b in self.sensitive_blocks if not 0 <= b < self.blocks_total)
        if bad:
            raise ConfigError("sensitive_blocks", f"indices outside [0, {self.blocks_total - 1}]: {bad}")
        if not isinstance(self.tail_steps, int) or not 0 <= self.tail_steps <= self.steps_total:
            raise ConfigError("tail_steps", f"must be in [0, {self.steps_total}], got {self.tail_steps!r}")

    @property
    def middle_blocks(self) -> Tuple[int, ...]:
        return tuple(b for b in range(self.blocks_total) if b not in self.sensitive_blocks)

    @property
    def first_sparse_block(self) -> Optional[int]:
        mid = self.middle_blocks
        return mid[0] if mid else None

    @property
    def kappa(self) -> float:
        return 1.0 / self.stride_n

    def replace(self, **changes) -> "SparsityConfig":
        kw = dict(
            stride_n=self.stride_n,
            blocks_total=self.blocks_total,
            steps_total=self.steps_total,
            sensitive_blocks=self.sensitive_blocks,
            tail_steps=self.tail_steps,
            interleave=self.interleave,
        )
        kw.update(changes)
        return SparsityConfig(**kw)

    def to_dict(self) -> dict:
        return {
            "stride_n": self.stride_n,
            "kappa": self.kappa,
            "blocks_total": self.blocks_total,
            "steps_total": self.steps_total,
            "sensitive_blocks": sorted(self.sensitive_blocks),
            "tail_steps": self.tail_steps,
            "interleave": self.interleave,
        }


@dataclass(frozen=True)
class AnchorSchedule:
    frames_total: int
    entries: Dict[int, Tuple[int, FrameIndexSet]]

    def offset(self, block: int) -> int:
        return self.entries[block][0]

    def anchors(self, block: int) -> FrameIndexSet:
        return self.entries[block][1]

    def __contains__(self, block):
        return block in self.entries

    @property
    def blocks(self):
        return tuple(sorted(self.entries))


def anchor_offset(l: int, cfg: SparsityConfig) -> int:
    if not 0 <= l < cfg.blocks_total or l in cfg.sensitive_blocks:
        raise ValueError(f"block {l} is not a middle block")
    if not cfg.interleave:
        return 0
    return (l - cfg.first_sparse_block) % cfg.stride_n


def anchor_set(frames_total: int, n: int, r: int) -> FrameIndexSet:
    """Frames congruent to ``r`` mod ``n``, plus both boundary frames."""
    if frames_total < 2:
        raise ValueError(f"frames_total must be >= 2, got {frames_total}")
    if n < 1 or not 0 <= r < n:
        raise ValueError(f"need n >= 1 and 0 <= r < n, got n={n}, r={r}")
    picked = set(range(r, frames_total, n))
    picked.update((0, frames_total - 1))
    return FrameIndexSet(frames_total, tuple(sorted(picked)))


def build_schedule(frames_total: int, cfg: SparsityConfig) -> AnchorSchedule:
    if frames_total < 2:
        raise ConfigError("frames", f"must be >= 2, got {frames_total}")
    mid = cfg.middle_blocks
    if not mid:
        raise ConfigError("sensitive_blocks", "covers every block; no middle blocks left to sparsify")
    cache = {}
    entries = {}
    for l in mid:
        r = anchor_offset(l, cfg)
        if r not in cache:
            cache[r] = anchor_set(frames_total, cfg.stride_n, r)
        entries[l] = (r, cache[r])
    return AnchorSchedule(frames_total, entries)


def gate(l: int, t: int, cfg: SparsityConfig) -> bool:
    """True when block ``l`` at zero-based step ``t`` runs on anchor frames only."""
    if not 0 <= l < cfg.blocks_total:
        raise ValueError(f"block index {l} outside [0, {cfg.blocks_total - 1}]")
    if not 0 <= t < cfg.steps_total:
        raise ValueError(f"step index {t} outside [0, {cfg.steps_total - 1}]")
    return l not in cfg.sensitive_blocks and t < cfg.steps_total - cfg.tail_steps


def gated_pairs(cfg: SparsityConfig):
    return [
        (l, t)
        for t in range(cfg.steps_total)
        for l in range(cfg.blocks_total)
        if gate(l, t, cfg)
    ]


def parse_block_list(text: str):
    """Parse ``"0,38,39"`` or ``"0-5,51-53"`` into a sorted list of ints."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(part))
    return sorted(out)


def load_config_file(path) -> dict:
    """Read a JSON object from ``path``; key validation happens in :mod:`fisdit.config`."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<file>", f"{path} must hold a JSON object")
    return raw
