"""Acceptance criteria. Each test records one PASS/FAIL line, shown at the end of the run."""

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fisdit.diagnostics import (
    adjacent_changes,
    coefficient_of_variation,
    cv_stats,
    magnitude_maps,
    per_frame_error,
    synthetic_probe,
)
from fisdit.experiments import SeedSweep, interleave_grid, protection_grid
from fisdit.latent import LatentSequence, gather, reconstruct
from fisdit.model import ToyDiTConfig, analytic_flops, denoise, initial_noise
from fisdit.scheduler import SparsityConfig, build_schedule, gated_pairs

DEFAULT = ToyDiTConfig()
DEFAULT_SPARSITY = SparsityConfig(3, 12, 4, frozenset({0, 10, 11}), 1)
SEEDS = range(10)


def record(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2} {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def sweep():
    return SeedSweep(DEFAULT, SEEDS)


def test_01_anchor_coverage():
    bad = []
    for n in range(2, 9):
        # two middle blocks per offset, so every window of n consecutive middle blocks is checked
        cfg = SparsityConfig(n, 2 * n + 2, 1, frozenset({0, 2 * n + 1}), 0)
        mid = cfg.middle_blocks
        for frames in range(n + 2, 65):
            sched = build_schedule(frames, cfg)
            for start in range(len(mid) - n + 1):
                counts = np.zeros(frames, int)
                for l in mid[start : start + n]:
                    counts[list(sched.anchors(l).indices)] += 1
                if not (counts[1:-1] == 1).all():
                    bad.append((n, frames, start))
    record(1, "anchor coverage exactly once", not bad, f"{len(bad)} violations")


def test_02_gate_tables():
    forty = SparsityConfig(3, 40, 4, frozenset({0, 38, 39}), 1)
    fifty_four = SparsityConfig(3, 54, 8, frozenset(range(6)) | {51, 52, 53}, 1)
    counts = (len(gated_pairs(forty)), len(gated_pairs(fifty_four)))
    record(2, "gate tables 111 / 315", counts == (111, 315), f"{counts}")


def test_03_dense_equivalence():
    noise = initial_noise(DEFAULT, 0)
    dense, _ = denoise(noise, DEFAULT)
    stride_one, _ = denoise(noise, DEFAULT, DEFAULT_SPARSITY.replace(stride_n=1))
    tail_all, _ = denoise(noise, DEFAULT, DEFAULT_SPARSITY.replace(tail_steps=DEFAULT.steps_total))
    diff = float(np.max(np.abs(stride_one.data - dense.data)))
    ok = diff <= 1e-6 and tail_all.equals(dense)
    record(3, "dense equivalence", ok, f"n=1 max|diff|={diff:.3g}, tail=T bitwise={tail_all.equals(dense)}")


def test_04_linear_exactness():
    rng = np.random.default_rng(0)
    worst = 0.0
    for frames in range(2, 41):
        a = rng.standard_normal((2, 2, 4))
        b = rng.standard_normal((2, 2, 4))
        x = LatentSequence(a + np.arange(frames)[:, None, None, None] * b)
        for n in range(1, 9):
            cfg = SparsityConfig(n, n + 2, 1, frozenset({0}), 0)
            sched = build_schedule(frames, cfg)
            for l in sched.blocks:
                anchors = sched.anchors(l)
                out = reconstruct(gather(x, anchors), anchors, frames)
                worst = max(worst, float(np.max(np.abs(out.data.astype(np.float64) - x.data))))
    record(4, "linear exactness", worst <= 1e-5, f"max|err|={worst:.3g}")


def test_05_ledger_exactness():
    noise = initial_noise(DEFAULT, 0)
    mismatches = []
    _, ledger = denoise(noise, DEFAULT)
    if ledger.counted_madds != analytic_flops(DEFAULT)[0]:
        mismatches.append("dense")
    for n in (2, 3, 4, 5):
        sp = DEFAULT_SPARSITY.replace(stride_n=n)
        _, ledger = denoise(noise, DEFAULT, sp)
        if ledger.counted_madds != analytic_flops(DEFAULT, sp)[1]:
            mismatches.append(f"n={n}")
    N, D, L = 1024, 64, 12
    closed = L * (12 * N * D * D + 2 * N * N * D)
    single = analytic_flops(ToyDiTConfig(steps_total=1))[0]
    ok = not mismatches and single == closed
    record(5, "ledger exactness", ok, f"mismatches={mismatches}, single-step {single} vs {closed}")


def test_06_speedup_monotonic():
    madds = [analytic_flops(DEFAULT, DEFAULT_SPARSITY.replace(stride_n=n))[1] for n in (2, 3, 4, 5)]
    ok = all(a > b for a, b in zip(madds, madds[1:]))
    record(6, "sparse_madds strictly decreasing in n", ok, " > ".join(map(str, madds)))


@pytest.mark.slow
def test_07_interleaving_benefit(sweep):
    cells = {c.variant: c for c in interleave_grid(sweep, DEFAULT_SPARSITY)}
    parts, ok = [], True
    for n in (3, 4, 5):
        a, b = cells[f"interleaved-n{n}"].mean_error, cells[f"fixed-n{n}"].mean_error
        ok &= a <= b
        parts.append(f"n={n} {a:.5f}<={b:.5f}")
    record(7, "interleaved error <= fixed", ok, ", ".join(parts))


@pytest.mark.slow
def test_08_protection_tradeoff(sweep):
    cells = {c.variant: c for c in protection_grid(sweep, DEFAULT_SPARSITY)}
    full = cells["full"]
    parts, ok = [], True
    for name in ("no-block", "no-step", "neither"):
        c = cells[name]
        faster = c.speedup > full.speedup
        no_better = c.mean_error >= full.mean_error
        ok &= faster and no_better
        parts.append(f"{name} speedup {c.speedup:.3f}>{full.speedup:.3f}={faster} error {c.mean_error:.5f}>={full.mean_error:.5f}={no_better}")
    record(8, "protection trade-off", ok, "; ".join(parts))


def _naive_maps(x):
    f_, h_, w_, d_ = x.shape
    return [
        [[math.sqrt(math.fsum(float(x.data[f, h, w, d]) ** 2 for d in range(d_))) for w in range(w_)] for h in range(h_)]
        for f in range(f_)
    ]


def _norm(m):
    return math.sqrt(math.fsum(v * v for row in m for v in row))


def _sub(a, b):
    return [[p - q for p, q in zip(ra, rb)] for ra, rb in zip(a, b)]


def _naive_cv(values):
    mu = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - mu) ** 2 for v in values) / len(values)) / mu


def _rel(a, b):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_09_diagnostics_correctness():
    worst = {}
    prompts = [LatentSequence(np.random.default_rng(s).standard_normal((6, 3, 4, 5))) for s in range(3)]
    curves, naive_cvs = {}, []
    for p, x in enumerate(prompts):
        maps = _naive_maps(x)
        worst["map"] = max(worst.get("map", 0), _rel(magnitude_maps(x), maps))
        n_abs = [_norm(_sub(maps[i + 1], maps[i])) for i in range(5)]
        n_rel = [n_abs[i] / _norm(maps[i]) for i in range(5)]
        abs_c, rel_c = adjacent_changes(x)
        worst["abs"] = max(worst.get("abs", 0), _rel(abs_c, n_abs))
        worst["rel"] = max(worst.get("rel", 0), _rel(rel_c, n_rel))
        worst["cv"] = max(worst.get("cv", 0), abs(coefficient_of_variation(rel_c) - _naive_cv(n_rel)) / _naive_cv(n_rel))
        curves[(0, 0, p)] = rel_c
        naive_cvs.append(_naive_cv(n_rel))
        for c in (0.1, 10.0):
            _, rel_s = adjacent_changes(LatentSequence(x.data * np.float32(c)))
            worst["scale"] = max(
                worst.get("scale", 0),
                _rel(rel_s, rel_c),
                abs(coefficient_of_variation(rel_s) / coefficient_of_variation(rel_c) - 1),
            )
    mean_cv = math.fsum(naive_cvs) / len(naive_cvs)
    worst["prompt-mean"] = abs(cv_stats(curves)[(0, 0)] - mean_cv) / mean_cv
    dense, sparse = prompts[0], prompts[1]
    dm, sm = _naive_maps(dense), _naive_maps(sparse)
    naive_err = [_norm(_sub(sm[f], dm[f])) / _norm(dm[f]) for f in range(6)]
    worst["per-frame"] = _rel(per_frame_error(dense, sparse), naive_err)
    ok = all(v <= 1e-6 for v in worst.values())
    record(9, "diagnostics vs brute force", ok, ", ".join(f"{k}={v:.2g}" for k, v in worst.items()))


def test_10_synthetic_flatness():
    report = synthetic_probe()
    rel = report.rel_change_curves[(0, 0, 0)]
    dev = float(np.max(np.abs(rel[1:-1] - rel.mean())) / rel.mean())
    cv = report.cv_matrix[(0, 0)]
    record(10, "synthetic flatness", dev < 0.05 and cv < 0.05, f"interior deviation {dev:.4f}, CV {cv:.4f}")
