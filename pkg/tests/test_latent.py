import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisdit.errors import ContractViolation
from fisdit.latent import (
    FrameIndexSet,
    LatentSequence,
    frame_l2_distance,
    gather,
    load_lsq,
    lsq_bytes,
    reconstruct,
    save_lsq,
)
from fisdit.scheduler import anchor_set


def frame_valued(frames, h=2, w=3, d=4):
    """Frame f filled with the value f."""
    data = np.broadcast_to(np.arange(frames, dtype=np.float32)[:, None, None, None], (frames, h, w, d))
    return LatentSequence(data.copy())


def seeded(shape, seed=0):
    return LatentSequence(np.random.default_rng(seed).standard_normal(shape).astype(np.float32))


def frame_linear(frames, h=2, w=2, d=3, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((h, w, d))
    b = rng.standard_normal((h, w, d))
    f = np.arange(frames, dtype=np.float64)[:, None, None, None]
    return LatentSequence((a + f * b).astype(np.float32))


class TestLatentSequence:
    def test_shape_and_length(self):
        x = LatentSequence.from_flat(np.arange(2 * 3 * 4 * 5), 2, 3, 4, 5)
        assert (x.frames, x.height, x.width, x.channels) == (2, 3, 4, 5)
        assert x.flat().size == 120
        assert x.data[1, 0, 0, 0] == 60  # row-major (frame, height, width, channel)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            LatentSequence.from_flat(np.zeros(7), 1, 2, 2, 2)

    def test_rejects_nonfinite(self):
        bad = np.zeros((1, 1, 1, 2), np.float32)
        bad[0, 0, 0, 1] = np.nan
        with pytest.raises(ValueError):
            LatentSequence(bad)

    def test_immutable_and_not_aliased(self):
        src = np.zeros((1, 1, 1, 2), np.float32)
        x = LatentSequence(src)
        src[0, 0, 0, 0] = 5.0
        assert x.data[0, 0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            x.data[0, 0, 0, 0] = 1.0

    def test_float32(self):
        assert LatentSequence(np.ones((1, 1, 1, 1))).data.dtype == np.float32


class TestFrameIndexSet:
    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            FrameIndexSet(5, (3, 1))

    def test_out_of_range(self):
        with pytest.raises(ContractViolation):
            FrameIndexSet(4, (0, 4))


class TestGather:
    def test_two_anchors(self):
        x = seeded((4, 2, 2, 3))
        y = gather(x, FrameIndexSet(4, (0, 3)))
        assert y.frames == 2
        assert np.array_equal(y.data[0], x.data[0])
        assert np.array_equal(y.data[1], x.data[3])

    def test_full_set_is_identity(self):
        x = seeded((5, 2, 3, 2))
        assert gather(x, FrameIndexSet.full(5)).equals(x)

    def test_brute_force_copy(self):
        x = frame_valued(8)
        anchors = FrameIndexSet(8, (0, 3, 6, 7))
        got = gather(x, anchors)
        # element-by-element copy oracle
        expected = np.empty((4,) + x.shape[1:], np.float32)
        for j, f in enumerate(anchors.indices):
            for h in range(x.height):
                for w in range(x.width):
                    for d in range(x.channels):
                        expected[j, h, w, d] = x.data[f, h, w, d]
        assert np.array_equal(got.data, expected)
        assert [got.data[j, 0, 0, 0] for j in range(4)] == [0, 3, 6, 7]

    def test_empty(self):
        with pytest.raises(ValueError):
            gather(seeded((3, 1, 1, 1)), FrameIndexSet(3, ()))

    def test_frame_count_mismatch(self):
        with pytest.raises(ContractViolation):
            gather(seeded((3, 1, 1, 1)), FrameIndexSet(4, (0, 3)))

    def test_output_contiguous(self):
        y = gather(seeded((6, 2, 2, 2)), FrameIndexSet(6, (0, 2, 5)))
        assert y.data.flags.c_contiguous


class TestReconstruct:
    def test_weights_two_thirds_one_third(self):
        # frames 3 and 4 sit between anchors 2 and 5
        anchors = FrameIndexSet(8, (0, 2, 5, 7))
        y = LatentSequence(np.array([0.0, 3.0, 6.0, 0.0], np.float32).reshape(4, 1, 1, 1))
        out = reconstruct(y, anchors, 8)
        assert out.data[3, 0, 0, 0] == pytest.approx(2 / 3 * 3.0 + 1 / 3 * 6.0)
        assert out.data[4, 0, 0, 0] == pytest.approx(1 / 3 * 3.0 + 2 / 3 * 6.0)

    def test_full_set_identity(self):
        y = seeded((5, 2, 2, 2))
        assert reconstruct(y, FrameIndexSet.full(5), 5).equals(y)

    def test_linear_frames_exact(self):
        base = np.random.default_rng(3).standard_normal((2, 2, 3)).astype(np.float32)
        anchors = FrameIndexSet(10, (0, 3, 6, 9))
        y = LatentSequence(np.stack([f * base for f in anchors.indices]))
        out = reconstruct(y, anchors, 10)
        expected = np.stack([f * base.astype(np.float64) for f in range(10)])
        assert np.max(np.abs(out.data - expected)) <= 1e-5

    def test_missing_boundary(self):
        with pytest.raises(ValueError):
            reconstruct(seeded((2, 1, 1, 1)), FrameIndexSet(5, (0, 2)), 5)
        with pytest.raises(ValueError):
            reconstruct(seeded((2, 1, 1, 1)), FrameIndexSet(5, (2, 4)), 5)

    def test_frame_count_mismatch(self):
        with pytest.raises(ContractViolation):
            reconstruct(seeded((3, 1, 1, 1)), FrameIndexSet(5, (0, 4)), 5)

    def test_single_frame(self):
        y = seeded((1, 2, 2, 2))
        assert reconstruct(y, FrameIndexSet(1, (0,)), 1).equals(y)

    def test_round_trip_full_set(self):
        x = seeded((7, 3, 2, 4), seed=9)
        full = FrameIndexSet.full(7)
        assert reconstruct(gather(x, full), full, 7).equals(x)


@settings(max_examples=60, deadline=None)
@given(
    frames=st.integers(2, 24),
    n=st.integers(1, 6),
    r_seed=st.integers(0, 100),
    seed=st.integers(0, 2**32 - 1),
)
def test_linear_exactness_property(frames, n, r_seed, seed):
    r = r_seed % n
    anchors = anchor_set(frames, n, r)
    x = frame_linear(frames, seed=seed)
    out = reconstruct(gather(x, anchors), anchors, frames)
    assert np.max(np.abs(out.data.astype(np.float64) - x.data)) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(frames=st.integers(2, 20), n=st.integers(2, 6), r_seed=st.integers(0, 100), seed=st.integers(0, 2**32 - 1))
def test_convexity_and_passthrough(frames, n, r_seed, seed):
    anchors = anchor_set(frames, n, r_seed % n)
    y = seeded((len(anchors), 2, 2, 2), seed=seed)
    out = reconstruct(y, anchors, frames)
    idx = anchors.indices
    for j, f in enumerate(idx):
        assert np.array_equal(out.data[f], y.data[j])
    for j in range(len(idx) - 1):
        lo = np.minimum(y.data[j], y.data[j + 1])
        hi = np.maximum(y.data[j], y.data[j + 1])
        for f in range(idx[j] + 1, idx[j + 1]):
            assert (out.data[f] >= lo).all() and (out.data[f] <= hi).all()


class TestDistance:
    def test_zero(self):
        x = seeded((2, 2, 2, 2))
        assert frame_l2_distance(x, x) == 0.0

    def test_unit(self):
        a = LatentSequence(np.zeros((1, 1, 1, 4), np.float32))
        b = LatentSequence(np.array([1, 0, 0, 0], np.float32).reshape(1, 1, 1, 4))
        assert frame_l2_distance(a, b) == 1.0

    def test_naive_oracle(self):
        a, b = seeded((3, 4, 4, 5), 1), seeded((3, 4, 4, 5), 2)
        naive = math.sqrt(math.fsum((float(p) - float(q)) ** 2 for p, q in zip(a.flat(), b.flat())))
        assert frame_l2_distance(a, b) == pytest.approx(naive, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            frame_l2_distance(seeded((1, 1, 1, 2)), seeded((1, 1, 1, 3)))


class TestLsq:
    def test_round_trip(self, tmp_path):
        x = seeded((3, 2, 5, 4))
        save_lsq(x, tmp_path / "x.lsq")
        assert load_lsq(tmp_path / "x.lsq").equals(x)

    def test_layout(self):
        x = LatentSequence.from_flat([1.0, 2.0], 1, 1, 1, 2)
        raw = lsq_bytes(x)
        assert raw[:16] == bytes([1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0])
        assert np.frombuffer(raw[16:], "<f4").tolist() == [1.0, 2.0]

    def test_truncated(self, tmp_path):
        (tmp_path / "bad.lsq").write_bytes(b"\x01\x00\x00\x00" * 4 + b"\x00\x00")
        with pytest.raises(ValueError):
            load_lsq(tmp_path / "bad.lsq")
