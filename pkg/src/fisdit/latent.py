"""Latent frame sequences and frame-axis gather / reconstruct operators."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation

LSQ_HEADER = struct.Struct("<4I")


@dataclass(frozen=True, eq=False)
class LatentSequence:
    """Video latent of shape (frames, height, width, channels), float32, row-major.

    The backing array is made read-only; operations return new sequences.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise ValueError(f"expected a 4-d (F, H, W, D) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("latent contains NaN or Inf")
        if arr is self.data and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, values, frames, height, width, channels):
        flat = np.asarray(values, dtype=np.float32).ravel()
        expected = frames * height * width * channels
        if flat.size != expected:
            raise ValueError(f"data length {flat.size} != F*H*W*D = {expected}")
        return cls(flat.reshape(frames, height, width, channels))

    @property
    def shape(self):
        return self.data.shape

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def frame(self, i: int) -> "LatentSequence":
        return LatentSequence(self.data[i : i + 1])

    def flat(self) -> np.ndarray:
        return self.data.ravel()

    def equals(self, other: "LatentSequence") -> bool:
        """Bitwise equality."""
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __repr__(self):
        return f"LatentSequence(F={self.frames}, H={self.height}, W={self.width}, D={self.channels})"


@dataclass(frozen=True)
class FrameIndexSet:
    frames_total: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if self.frames_total < 1:
            raise ValueError(f"frames_total must be >= 1, got {self.frames_total}")
        for a, b in zip(idx, idx[1:]):
            if b <= a:
                raise ValueError(f"indices must be strictly increasing, got {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.frames_total):
            raise ContractViolation(
                f"frame index out of range [0, {self.frames_total - 1}]: {idx}"
            )
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, frames_total: int) -> "FrameIndexSet":
        return cls(frames_total, tuple(range(frames_total)))

    @classmethod
    def of(cls, frames_total: int, indices: Iterable[int]) -> "FrameIndexSet":
        return cls(frames_total, tuple(sorted(set(int(i) for i in indices))))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, f):
        return f in self.indices

    def is_full(self) -> bool:
        return len(self.indices) == self.frames_total


def gather(x: LatentSequence, anchors: FrameIndexSet) -> LatentSequence:
    """Select the anchor frames of ``x``, preserving each frame's token grid."""
    if anchors.frames_total != x.frames:
        raise ContractViolation(
            f"anchor set built for {anchors.frames_total} frames, latent has {x.frames}"
        )
    if not anchors.indices:
        raise ValueError("empty anchor set")
    # take along the leading axis copies whole contiguous frame slices
    return LatentSequence(np.take(x.data, anchors.indices, axis=0))


def interpolation_weights(anchors: Sequence[int], frames_total: int):
    """Left/right anchor positions and float64 weights for every output frame.

    Returns ``(left, right, w_left, w_right)``, each of length ``frames_total``,
    where ``left``/``right`` index into ``anchors``. Anchor frames get weight 1
    on themselves.
    """
    a = np.asarray(anchors, dtype=np.int64)
    f = np.arange(frames_total, dtype=np.int64)
    right = np.searchsorted(a, f, side="left")
    is_anchor = (right < len(a)) & (a[np.minimum(right, len(a) - 1)] == f)
    left = np.where(is_anchor, right, right - 1)
    fa = a[left].astype(np.float64)
    fb = a[right].astype(np.float64)
    span = np.where(is_anchor, 1.0, fb - fa)
    w_left = np.where(is_anchor, 1.0, (fb - f) / span)
    w_right = np.where(is_anchor, 0.0, (f - fa) / span)
    return left, right, w_left, w_right


def reconstruct(y_anc: LatentSequence, anchors: FrameIndexSet, frames_total: int) -> LatentSequence:
    """Rebuild the full frame sequence from anchor outputs by local linear interpolation.

    Anchor frames are copied exactly. A skipped frame ``u`` between neighbouring
    anchors ``a < u < b`` becomes ``(b-u)/(b-a) * y[a] + (u-a)/(b-a) * y[b]``.
    Both boundary frames must be anchors; there is no extrapolation.
    """
    if anchors.frames_total != frames_total:
        raise ContractViolation(
            f"anchor set built for {anchors.frames_total} frames, asked for {frames_total}"
        )
    if y_anc.frames != len(anchors):
        raise ContractViolation(f"y_anc has {y_anc.frames} frames, anchor set has {len(anchors)}")
    if not anchors.indices or anchors.indices[0] != 0 or anchors.indices[-1] != frames_total - 1:
        raise ValueError(
            f"anchor set must contain boundary frames 0 and {frames_total - 1}: {anchors.indices}"
        )
    if anchors.is_full():
        return LatentSequence(y_anc.data.copy())

    left, right, w_left, w_right = interpolation_weights(anchors.indices, frames_total)
    pos = {f: j for j, f in enumerate(anchors.indices)}
    out = np.empty((frames_total,) + y_anc.shape[1:], dtype=np.float32)
    src = y_anc.data
    for f in range(frames_total):
        j = pos.get(f)
        if j is not None:
            out[f] = src[j]
        else:
            blend = w_left[f] * src[left[f]].astype(np.float64) + w_right[f] * src[right[f]].astype(
                np.float64
            )
            out[f] = blend.astype(np.float32)
    return LatentSequence(out)


def frame_l2_distance(a: LatentSequence, b: LatentSequence) -> float:
    """Euclidean norm of ``a - b`` over the whole tensor."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def save_lsq(x: LatentSequence, path) -> None:
    """Write ``x`` as a ``.lsq`` dump: four little-endian u32 (F, H, W, D) then f32 LE data."""
    Path(path).write_bytes(lsq_bytes(x))


def lsq_bytes(x: LatentSequence) -> bytes:
    return LSQ_HEADER.pack(*x.shape) + x.data.astype("<f4").tobytes(order="C")


def load_lsq(path) -> LatentSequence:
    raw = Path(path).read_bytes()
    if len(raw) < LSQ_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    f, h, w, d = LSQ_HEADER.unpack_from(raw)
    body = raw[LSQ_HEADER.size :]
    if len(body) != 4 * f * h * w * d:
        raise ValueError(f"{path}: expected {4 * f * h * w * d} payload bytes, found {len(body)}")
    return LatentSequence(np.frombuffer(body, dtype="<f4").reshape(f, h, w, d))
