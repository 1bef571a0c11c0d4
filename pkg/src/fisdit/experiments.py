"""Seed sweeps comparing sparse variants against the dense oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .diagnostics import per_frame_error
from .model import ToyDiTConfig, analytic_flops, denoise, initial_noise
from .scheduler import SparsityConfig

INTERLEAVE_STRIDES = (3, 4, 5)
PROTECTION_VARIANTS = ("full", "no-block", "no-step", "neither")


@dataclass
class Cell:
    grid: str
    variant: str
    sparsity: SparsityConfig
    errors: List[float] = field(default_factory=list)
    sparse_madds: int = 0
    dense_madds: int = 0

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors))

    @property
    def speedup(self) -> float:
        return self.dense_madds / self.sparse_madds

    def row(self):
        s = self.sparsity
        return (
            self.grid,
            self.variant,
            s.stride_n,
            int(s.interleave),
            " ".join(str(b) for b in sorted(s.sensitive_blocks)),
            s.tail_steps,
            len(self.errors),
            self.mean_error,
            self.dense_madds,
            self.sparse_madds,
            self.speedup,
        )


CELL_COLUMNS = (
    "grid",
    "variant",
    "stride",
    "interleave",
    "sensitive",
    "tail",
    "seeds",
    "mean_error",
    "dense_madds",
    "sparse_madds",
    "speedup",
)


class SeedSweep:
    """Caches the dense run per seed so variants share one oracle."""

    def __init__(self, cfg: ToyDiTConfig, seeds: Sequence[int]):
        self.cfg = cfg
        self.seeds = list(seeds)
        self._dense: Dict[int, object] = {}

    def dense(self, seed):
        if seed not in self._dense:
            self._dense[seed] = denoise(initial_noise(self.cfg, seed), self.cfg)[0]
        return self._dense[seed]

    def evaluate(self, grid: str, variant: str, sparsity: SparsityConfig) -> Cell:
        dense_total, sparse_total = analytic_flops(self.cfg, sparsity)
        cell = Cell(grid, variant, sparsity, dense_madds=dense_total, sparse_madds=sparse_total)
        for seed in self.seeds:
            out, ledger = denoise(initial_noise(self.cfg, seed), self.cfg, sparsity)
            if ledger.counted_madds != sparse_total:
                raise AssertionError(
                    f"{grid}/{variant}: counted madds {ledger.counted_madds} != analytic {sparse_total}"
                )
            cell.errors.append(float(per_frame_error(self.dense(seed), out).mean()))
        return cell


def interleave_grid(sweep: SeedSweep, base: SparsityConfig, strides=INTERLEAVE_STRIDES) -> List[Cell]:
    cells = []
    for n in strides:
        for interleave in (True, False):
            variant = f"{'interleaved' if interleave else 'fixed'}-n{n}"
            cells.append(sweep.evaluate("interleave", variant, base.replace(stride_n=n, interleave=interleave)))
    return cells


def protection_variants(base: SparsityConfig) -> Dict[str, SparsityConfig]:
    return {
        "full": base,
        "no-block": base.replace(sensitive_blocks=frozenset()),
        "no-step": base.replace(tail_steps=0),
        "neither": base.replace(sensitive_blocks=frozenset(), tail_steps=0),
    }


def protection_grid(sweep: SeedSweep, base: SparsityConfig) -> List[Cell]:
    return [sweep.evaluate("protection", name, sp) for name, sp in protection_variants(base).items()]


def interleave_checks(cells: List[Cell]) -> List[Tuple[str, bool, str]]:
    by = {c.variant: c for c in cells}
    out = []
    strides = sorted({c.sparsity.stride_n for c in cells})
    for n in strides:
        a, b = by[f"interleaved-n{n}"], by[f"fixed-n{n}"]
        out.append(
            (f"interleaved<=fixed n={n}", a.mean_error <= b.mean_error, f"{a.mean_error:.6f} vs {b.mean_error:.6f}")
        )
    inter = [by[f"interleaved-n{n}"] for n in strides]
    if len(inter) > 1:
        ok = all(x.sparse_madds > y.sparse_madds for x, y in zip(inter, inter[1:]))
        out.append(("sparse_madds decreasing in stride", ok, " > ".join(str(c.sparse_madds) for c in inter)))
    return out


def protection_checks(cells: List[Cell]) -> List[Tuple[str, bool, str]]:
    by = {c.variant: c for c in cells}
    full = by["full"]
    out = []
    for name in ("no-block", "no-step", "neither"):
        c = by[name]
        out.append(
            (f"{name} speedup > full", c.speedup > full.speedup, f"{c.speedup:.3f} vs {full.speedup:.3f}")
        )
        out.append(
            (
                f"{name} error >= full",
                c.mean_error >= full.mean_error,
                f"{c.mean_error:.6f} vs {full.mean_error:.6f}",
            )
        )
    lowest = min(cells, key=lambda c: c.sparse_madds)
    out.append(("neither has minimum sparse_madds", lowest.variant == "neither", lowest.variant))
    return out
