"""Miniature video DiT, gated sparse executor, Euler sampler and madd ledger.

Every matmul goes through :func:`_mm`, which adds its exact multiply-add count
to the active tally. Softmax, layer norm and GELU are not counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ContractViolation
from .latent import FrameIndexSet, LatentSequence, gather, reconstruct
from .scheduler import AnchorSchedule, SparsityConfig, build_schedule, gate

LN_EPS = 1e-6
TIME_SCALE = 1000.0


@dataclass(frozen=True)
class ToyDiTConfig:
    blocks_total: int = 12
    model_dim: int = 64
    heads: int = 4
    ffn_expansion: int = 4
    frames: int = 16
    height: int = 8
    width: int = 8
    steps_total: int = 4
    weight_seed: int = 0

    def __post_init__(self):
        for key in ("blocks_total", "model_dim", "heads", "ffn_expansion", "frames", "height", "width", "steps_total"):
            value = getattr(self, key)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(key, f"must be an integer >= 1, got {value!r}")
        if self.model_dim % self.heads:
            raise ConfigError("heads", f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if not isinstance(self.weight_seed, int) or not 0 <= self.weight_seed < 2**64:
            raise ConfigError("weight_seed", f"must be an unsigned 64-bit integer, got {self.weight_seed!r}")

    @property
    def tokens(self) -> int:
        return self.frames * self.height * self.width

    @property
    def latent_shape(self):
        return (self.frames, self.height, self.width, self.model_dim)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class BlockWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    w_1: np.ndarray
    w_2: np.ndarray
    attn_scale: np.ndarray
    attn_shift: np.ndarray
    ffn_scale: np.ndarray
    ffn_shift: np.ndarray
    heads: int


def block_weights(cfg: ToyDiTConfig, block: int) -> BlockWeights:
    """Weights for one block, drawn from a Philox stream keyed on (weight_seed, block).

    All entries are uniform in [-1/sqrt(D), 1/sqrt(D)].
    """
    d, hidden = cfg.model_dim, cfg.model_dim * cfg.ffn_expansion
    rng = np.random.Generator(np.random.Philox(key=[cfg.weight_seed, block]))
    bound = 1.0 / math.sqrt(d)

    def draw(*shape):
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    return BlockWeights(
        w_q=draw(d, d),
        w_k=draw(d, d),
        w_v=draw(d, d),
        w_o=draw(d, d),
        w_1=draw(d, hidden),
        w_2=draw(hidden, d),
        attn_scale=draw(d),
        attn_shift=draw(d),
        ffn_scale=draw(d),
        ffn_shift=draw(d),
        heads=cfg.heads,
    )


@lru_cache(maxsize=8)
def model_weights(cfg: ToyDiTConfig) -> Tuple[BlockWeights, ...]:
    return tuple(block_weights(cfg, l) for l in range(cfg.blocks_total))


def timestep_embedding(sigma: float, dim: int) -> np.ndarray:
    """Sinusoidal embedding of ``sigma * 1000``; first half sin, second half cos."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    angles = sigma * TIME_SCALE * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)])
    if dim % 2:
        emb = np.concatenate([emb, [0.0]])
    return emb.astype(np.float32)


def sigma_schedule(steps: int) -> np.ndarray:
    """Linear noise levels 1 -> 0, length ``steps + 1``."""
    return np.linspace(1.0, 0.0, steps + 1)


class MaddTally:
    def __init__(self):
        self.attn = 0
        self.ffn = 0


def _mm(a: np.ndarray, b: np.ndarray, tally: Optional[MaddTally], kind: str) -> np.ndarray:
    out = np.matmul(a, b)
    if tally is not None:
        m, k = a.shape[-2:]
        n = b.shape[-1]
        batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
        count = batch * m * k * n
        if kind == "attn":
            tally.attn += count
        else:
            tally.ffn += count
    return out


def _layer_norm(h: np.ndarray) -> np.ndarray:
    mean = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    return (h - mean) / np.sqrt(var + LN_EPS)


def _modulate(h, emb, scale, shift):
    return h * (1.0 + scale * emb) + shift * emb


def _gelu(h):
    return 0.5 * h * (1.0 + np.tanh(np.float32(math.sqrt(2.0 / math.pi)) * (h + np.float32(0.044715) * h**3)))


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    return s


def _check_inputs(x: LatentSequence, w: BlockWeights, t_embed) -> np.ndarray:
    d = w.w_q.shape[0]
    if x.channels != d:
        raise ValueError(f"latent has {x.channels} channels, block expects {d}")
    emb = np.asarray(t_embed, dtype=np.float32)
    if emb.shape != (d,):
        raise ValueError(f"conditioning vector must have shape ({d},), got {emb.shape}")
    return emb


def attention_branch(h: np.ndarray, w: BlockWeights, emb: np.ndarray, tally: Optional[MaddTally] = None) -> np.ndarray:
    """Residual update of the attention sub-module; ``h`` is (tokens, D)."""
    n_tok, d = h.shape
    heads, dh = w.heads, d // w.heads
    a = _modulate(_layer_norm(h), emb, w.attn_scale, w.attn_shift)
    q = _mm(a, w.w_q, tally, "attn").reshape(n_tok, heads, dh).transpose(1, 0, 2)
    k = _mm(a, w.w_k, tally, "attn").reshape(n_tok, heads, dh).transpose(1, 2, 0)
    v = _mm(a, w.w_v, tally, "attn").reshape(n_tok, heads, dh).transpose(1, 0, 2)
    scores = _mm(q, k, tally, "attn")
    scores *= np.float32(1.0 / math.sqrt(dh))
    probs = _softmax(scores)
    ctx = _mm(probs, v, tally, "attn").transpose(1, 0, 2).reshape(n_tok, d)
    return _mm(ctx, w.w_o, tally, "attn")


def ffn_branch(h: np.ndarray, w: BlockWeights, emb: np.ndarray, tally: Optional[MaddTally] = None) -> np.ndarray:
    f = _modulate(_layer_norm(h), emb, w.ffn_scale, w.ffn_shift)
    f = _gelu(_mm(f, w.w_1, tally, "ffn"))
    return _mm(f, w.w_2, tally, "ffn")


def block_forward(
    x: LatentSequence,
    w: BlockWeights,
    t_embed: np.ndarray,
    tally: Optional[MaddTally] = None,
) -> LatentSequence:
    """One DiT block over every token of ``x`` (full spatio-temporal attention + FFN)."""
    emb = _check_inputs(x, w, t_embed)
    h = x.data.reshape(-1, x.channels)
    h = h + attention_branch(h, w, emb, tally)
    h = h + ffn_branch(h, w, emb, tally)
    return LatentSequence(h.reshape(x.shape))


def _sparse_residual(h: LatentSequence, branch, anchors, w, emb, tally) -> LatentSequence:
    # gather -> sub-module on anchor tokens -> reconstruct the update -> residual add on all frames
    x_anc = gather(h, anchors)
    upd = branch(x_anc.data.reshape(-1, h.channels), w, emb, tally)
    upd = reconstruct(LatentSequence(upd.reshape(x_anc.shape)), anchors, h.frames)
    return LatentSequence(h.data + upd.data)


def sparse_block_forward(
    x: LatentSequence,
    anchors: FrameIndexSet,
    w: BlockWeights,
    t_embed: np.ndarray,
    tally: Optional[MaddTally] = None,
) -> LatentSequence:
    """Block ``w`` computed on anchor frames only, with each sub-module's update
    interpolated back to the full frame axis before its residual add."""
    emb = _check_inputs(x, w, t_embed)
    h = _sparse_residual(x, attention_branch, anchors, w, emb, tally)
    return _sparse_residual(h, ffn_branch, anchors, w, emb, tally)


@dataclass(frozen=True)
class LedgerRow:
    step: int
    block: int
    gated: bool
    token_count: int
    attn_madds: int
    ffn_madds: int

    @property
    def madds(self) -> int:
        return self.attn_madds + self.ffn_madds


@dataclass
class FlopsLedger:
    """Counted madds per (step, block), with closed-form totals for comparison.

    ``dense_madds`` is the full-frame cost of the configuration and
    ``sparse_madds`` is what the run actually executed; for a dense run the two
    coincide.
    """

    rows: List[LedgerRow] = field(default_factory=list)
    analytic_dense: int = 0
    analytic_sparse: int = 0

    def add(self, row: LedgerRow):
        self.rows.append(row)

    @property
    def counted_madds(self) -> int:
        return sum(r.madds for r in self.rows)

    @property
    def dense_madds(self) -> int:
        return self.analytic_dense

    @property
    def sparse_madds(self) -> int:
        return self.counted_madds

    @property
    def speedup(self) -> float:
        return self.dense_madds / self.sparse_madds

    def consistent(self) -> bool:
        return self.counted_madds == self.analytic_sparse


def gated_block_apply(
    x: LatentSequence,
    l: int,
    t: int,
    schedule: Optional[AnchorSchedule],
    cfg: SparsityConfig,
    w: BlockWeights,
    t_embed: np.ndarray,
    ledger: Optional[FlopsLedger] = None,
) -> LatentSequence:
    """Run block ``l`` at step ``t`` on anchor frames when gated, else on all frames."""
    tally = MaddTally()
    sparse = gate(l, t, cfg)
    if sparse:
        if schedule is None or l not in schedule:
            raise ContractViolation(f"gate is open for block {l} but the schedule has no entry for it")
        if schedule.frames_total != x.frames:
            raise ContractViolation(
                f"schedule built for {schedule.frames_total} frames, latent has {x.frames}"
            )
        anchors = schedule.anchors(l)
        out = sparse_block_forward(x, anchors, w, t_embed, tally)
        frames_run = len(anchors)
    else:
        out = block_forward(x, w, t_embed, tally)
        frames_run = x.frames
    if ledger is not None:
        ledger.add(LedgerRow(t, l, sparse, frames_run * x.height * x.width, tally.attn, tally.ffn))
    return out


def dense_config(cfg: ToyDiTConfig) -> SparsityConfig:
    """A sparsity config whose gate is closed everywhere."""
    return SparsityConfig(1, cfg.blocks_total, cfg.steps_total, frozenset(), cfg.steps_total)


def _check_compatible(cfg: ToyDiTConfig, sparsity: SparsityConfig):
    if sparsity.blocks_total != cfg.blocks_total:
        raise ConfigError(
            "blocks_total", f"sparsity config has {sparsity.blocks_total} blocks, model has {cfg.blocks_total}"
        )
    if sparsity.steps_total != cfg.steps_total:
        raise ConfigError(
            "steps_total", f"sparsity config has {sparsity.steps_total} steps, model has {cfg.steps_total}"
        )


def _schedule_or_none(frames: int, sparsity: SparsityConfig) -> Optional[AnchorSchedule]:
    if not sparsity.middle_blocks or sparsity.tail_steps == sparsity.steps_total:
        return None
    return build_schedule(frames, sparsity)


def denoise(
    init_noise: LatentSequence,
    cfg: ToyDiTConfig,
    sparsity: Optional[SparsityConfig] = None,
    probe: Optional[Callable[[int, int, LatentSequence], None]] = None,
) -> Tuple[LatentSequence, FlopsLedger]:
    """Euler sampling over a linear sigma schedule from 1 to 0.

    ``z <- z - (sigma_t - sigma_{t+1}) * model(z, t)`` where ``model`` chains
    all blocks through :func:`gated_block_apply`. ``sparsity=None`` runs dense.
    ``probe(step, block, output)`` sees every block output when given.
    """
    if init_noise.shape != cfg.latent_shape:
        raise ValueError(f"init noise shape {init_noise.shape} != model latent shape {cfg.latent_shape}")
    if sparsity is None:
        sparsity = dense_config(cfg)
    _check_compatible(cfg, sparsity)
    schedule = _schedule_or_none(cfg.frames, sparsity)
    weights = model_weights(cfg)
    dense_total, sparse_total = analytic_flops(cfg, sparsity)
    ledger = FlopsLedger(analytic_dense=dense_total, analytic_sparse=sparse_total)

    sigmas = sigma_schedule(cfg.steps_total)
    z = init_noise
    for t in range(cfg.steps_total):
        emb = timestep_embedding(float(sigmas[t]), cfg.model_dim)
        h = z
        for l in range(cfg.blocks_total):
            h = gated_block_apply(h, l, t, schedule, sparsity, weights[l], emb, ledger)
            if probe is not None:
                probe(t, l, h)
        dt = np.float32(sigmas[t] - sigmas[t + 1])
        z = LatentSequence(z.data - dt * h.data)
    return z, ledger


def initial_noise(cfg: ToyDiTConfig, seed: int) -> LatentSequence:
    """Standard normal starting latent from a Philox stream keyed on (seed, 2**32 + 1)."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 2**32 + 1]))
    return LatentSequence(rng.standard_normal(cfg.latent_shape, dtype=np.float32))


def anchor_count(frames_total: int, n: int, r: int) -> int:
    """|A| in closed form: congruence class size plus missing boundaries."""
    size = len(range(r, frames_total, n))
    size += r % n != 0
    size += (frames_total - 1 - r) % n != 0
    return size


def block_madds(tokens: int, cfg: ToyDiTConfig) -> Tuple[int, int]:
    """(attention, ffn) madds of one block over ``tokens`` tokens."""
    d = cfg.model_dim
    attn = 4 * tokens * d * d + 2 * tokens * tokens * d
    ffn = 2 * cfg.ffn_expansion * tokens * d * d
    return attn, ffn


def analytic_flops(cfg: ToyDiTConfig, sparsity: Optional[SparsityConfig] = None) -> Tuple[int, int]:
    """Closed-form (dense, sparse) madd totals for a full denoise run."""
    spatial = cfg.height * cfg.width
    full = sum(block_madds(cfg.tokens, cfg))
    dense = full * cfg.blocks_total * cfg.steps_total
    if sparsity is None:
        return dense, dense
    mid = [l for l in range(cfg.blocks_total) if l not in sparsity.sensitive_blocks]
    l0 = mid[0] if mid else 0
    sparse = 0
    for t in range(cfg.steps_total):
        for l in range(cfg.blocks_total):
            on = l in mid and t < cfg.steps_total - sparsity.tail_steps
            if on:
                r = (l - l0) % sparsity.stride_n if sparsity.interleave else 0
                sparse += sum(block_madds(anchor_count(cfg.frames, sparsity.stride_n, r) * spatial, cfg))
            else:
                sparse += full
    return dense, sparse
