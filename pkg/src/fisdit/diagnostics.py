"""Temporal-redundancy metrics over latent frames.

Magnitude maps collapse the channel axis to a per-location L2 norm. Adjacent
frame changes, their coefficient of variation and the sparse-vs-dense
per-frame error are all computed on those maps, in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from .errors import DiagnosticError, DivisionGuardError
from .latent import LatentSequence

FLATNESS_TOL = 0.05
CV_TOL = 0.05


@dataclass(frozen=True, eq=False)
class MagnitudeMap:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"magnitude map must be 2-d, got shape {v.shape}")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("magnitude map must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def magnitude_maps(x: LatentSequence) -> np.ndarray:
    """(F, H, W) channel norms of every frame."""
    return np.linalg.norm(x.data.astype(np.float64), axis=-1)


def magnitude_map(x_frame: LatentSequence) -> MagnitudeMap:
    if x_frame.frames != 1:
        raise ValueError(f"expected a single frame, got {x_frame.frames}")
    return MagnitudeMap(magnitude_maps(x_frame)[0])


def _frame_norms(maps: np.ndarray) -> np.ndarray:
    return np.linalg.norm(maps.reshape(maps.shape[0], -1), axis=1)


def adjacent_changes(x: LatentSequence) -> Tuple[np.ndarray, np.ndarray]:
    """Absolute and relative change between consecutive magnitude maps.

    ``rel[i] = ||V[i+1] - V[i]|| / ||V[i]||``. A zero-norm frame raises
    :class:`DivisionGuardError`; the absolute curve is attached to it as
    ``abs_changes``.
    """
    if x.frames < 2:
        raise ValueError(f"need at least 2 frames, got {x.frames}")
    maps = magnitude_maps(x)
    abs_changes = _frame_norms(np.diff(maps, axis=0))
    denom = _frame_norms(maps[:-1])
    zero = np.flatnonzero(denom == 0.0)
    if zero.size:
        err = DivisionGuardError(f"zero magnitude-map norm at frames {zero.tolist()}", zero)
        err.abs_changes = abs_changes
        raise err
    return abs_changes, abs_changes / denom


def coefficient_of_variation(curve) -> float:
    """sigma / mu with the population (1/len) variance. 0/0 is 0; x/0 is inf."""
    c = np.asarray(curve, dtype=np.float64)
    if c.ndim != 1 or c.size < 2:
        raise ValueError(f"curve must be 1-d with at least 2 values, got shape {c.shape}")
    mu = c.mean()
    sigma = math.sqrt(np.mean((c - mu) ** 2))
    if mu == 0.0:
        return 0.0 if sigma == 0.0 else math.inf
    return sigma / mu


def cv_stats(curves: Mapping[Tuple[int, int, int], np.ndarray]) -> Dict[Tuple[int, int], float]:
    """Mean CV over prompts (``p``) for every (block, step) cell, keyed by (b, s)."""
    per_cell: Dict[Tuple[int, int], list] = {}
    for (b, s, p) in sorted(curves):
        per_cell.setdefault((b, s), []).append(coefficient_of_variation(curves[(b, s, p)]))
    return {cell: float(np.mean(v)) for cell, v in per_cell.items()}


def per_frame_error(dense: LatentSequence, sparse: LatentSequence) -> np.ndarray:
    """``||V_sparse[i] - V_dense[i]|| / ||V_dense[i]||`` for every frame ``i``."""
    if dense.shape != sparse.shape:
        raise ValueError(f"shape mismatch: {dense.shape} vs {sparse.shape}")
    v = magnitude_maps(dense)
    v_hat = magnitude_maps(sparse)
    denom = _frame_norms(v)
    zero = np.flatnonzero(denom == 0.0)
    if zero.size:
        raise DivisionGuardError(f"dense output has zero magnitude at frames {zero.tolist()}", zero)
    return _frame_norms(v_hat - v) / denom


@dataclass
class DiagnosticsReport:
    rel_change_curves: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    cv_matrix: Dict[Tuple[int, int], float] = field(default_factory=dict)
    per_frame_errors: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def check(self, frames: int):
        for key, curve in self.rel_change_curves.items():
            if len(curve) != frames - 1 or (np.asarray(curve) < 0).any():
                raise DiagnosticError(f"bad relative-change curve at {key}")
        if any(v < 0 for v in self.cv_matrix.values()):
            raise DiagnosticError("negative CV")
        if self.per_frame_errors is not None and len(self.per_frame_errors) != frames:
            raise DiagnosticError("per-frame error vector length mismatch")


def synthetic_sequence(frames=16, height=8, width=8, channels=16, b_scale=1e-3, seed=0) -> LatentSequence:
    """``X_i = A + i * B`` with seeded Gaussian ``A`` and ``B = b_scale * N(0, 1)``."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((height, width, channels))
    b = b_scale * rng.standard_normal((height, width, channels))
    i = np.arange(frames, dtype=np.float64)[:, None, None, None]
    return LatentSequence((a + i * b).astype(np.float32))


def flatness_violations(curve, tol=FLATNESS_TOL):
    """Interior indices whose value strays more than ``tol * mean`` from the mean."""
    c = np.asarray(curve, dtype=np.float64)
    mu = c.mean()
    interior = np.arange(1, len(c) - 1)
    dev = np.abs(c[interior] - mu)
    return interior[dev > tol * mu].tolist() if mu > 0 else interior[dev > 0].tolist()


def synthetic_probe(frames=16, height=8, width=8, channels=16, b_scale=1e-3, seed=0) -> DiagnosticsReport:
    """Check that a frame-linear sequence yields a flat relative-change curve.

    Raises :class:`DiagnosticError` listing the offending indices when the
    interior of the curve deviates by 5% of its mean or more, or CV >= 0.05.
    """
    x = synthetic_sequence(frames, height, width, channels, b_scale, seed)
    abs_c, rel = adjacent_changes(x)
    cv = coefficient_of_variation(rel)
    bad = flatness_violations(rel)
    if bad:
        raise DiagnosticError(f"relative-change curve not flat at indices {bad}", bad)
    if not cv < CV_TOL:
        raise DiagnosticError(f"CV {cv:.6g} >= {CV_TOL}")
    return DiagnosticsReport(
        rel_change_curves={(0, 0, 0): rel},
        cv_matrix={(0, 0): cv},
        metadata={
            "source": "synthetic",
            "frames": frames,
            "b_scale": b_scale,
            "seed": seed,
            "abs_changes": abs_c.tolist(),
        },
    )


def probe_model(cfg, seeds: Iterable[int], sparsity=None) -> DiagnosticsReport:
    """Relative-change curves of post-block features at every (block, step), one run per seed.

    Seeds stand in for prompts when averaging CV.
    """
    from .model import denoise, initial_noise

    seeds = list(seeds)
    curves = {}
    for p, seed in enumerate(seeds):
        def probe(t, l, h, p=p):
            curves[(l, t, p)] = adjacent_changes(h)[1]

        denoise(initial_noise(cfg, seed), cfg, sparsity, probe=probe)
    return DiagnosticsReport(
        rel_change_curves=curves,
        cv_matrix=cv_stats(curves),
        metadata={"source": "toy_dit", "probe_point": "post-block", "prompts": "seeds", "seeds": seeds},
    )
