import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scckit.bitio import CHROMA_400, CHROMA_420, BitReader, BitstreamError, BitWriter
from scckit.ibc import HistoryVectorTable, InvalidReferenceError, ReferenceSampleMemory, ibc_predict
from scckit.string_copy import (STRING_UNIT, StringRun, check_strings, isc_reconstruct,
                                read_strings, segment_strings, write_strings)


def left_ctu_memory(picture, chroma=None):
    """RSM positioned at CTU (128, 0) whose left CTU holds ``picture[:, :128]``."""
    cf = CHROMA_420 if chroma is not None else CHROMA_400
    rsm = ReferenceSampleMemory(256, 128, cf)
    rsm.begin_ctu(0, 0)
    for i in range(4):
        rsm.enter_region(i)
        ry, rx = divmod(i, 2)
        ys, xs = slice(64 * ry, 64 * ry + 64), slice(64 * rx, 64 * rx + 64)
        planes = [picture[ys, xs]]
        if chroma is not None:
            cys, cxs = slice(32 * ry, 32 * ry + 32), slice(32 * rx, 32 * rx + 32)
            planes += [chroma[0][cys, cxs], chroma[1][cys, cxs]]
        rsm.write(64 * rx, 64 * ry, 64, 64, planes)
    rsm.begin_ctu(128, 0)
    rsm.enter_region(0)
    return rsm


@pytest.fixture
def noise(rng):
    return rng.integers(0, 256, (128, 128), dtype=np.uint8)


def test_copy_of_left_ctu_is_one_string(noise):
    rsm = left_ctu_memory(noise)
    orig = [noise[0:16, 64:80].copy()]
    runs = segment_strings(orig, 128, 0, 16, 16, rsm, [(-32, 0), (-64, 0)])
    assert runs == [StringRun(0, 256, (-64, 0))]


def test_lengths_truncate_to_multiple_of_four(noise):
    pic = noise.copy()
    orig = pic[0:8, 96:104].copy()  # matched by (-32, 0) everywhere
    pic[0, 64:70] = orig[0, 0:6]  # (-64, 0) matches only the first six samples
    pic[0, 70] = orig[0, 6] ^ 0xFF
    pic[0, 96:100] ^= 0xFF  # (-32, 0) fails on the first four
    rsm = left_ctu_memory(pic)
    runs = segment_strings([orig], 128, 0, 8, 8, rsm, [(-64, 0), (-32, 0)])
    assert [(r.start, r.length, r.sv) for r in runs] == [(0, 4, (-64, 0)), (4, 60, (-32, 0))]


def test_no_match_means_no_segmentation(noise, rng):
    rsm = left_ctu_memory(noise)
    orig = [rng.integers(0, 256, (8, 8), dtype=np.uint8)]
    assert segment_strings(orig, 128, 0, 8, 8, rsm, [(-64, 0)]) is None
    assert segment_strings(orig, 128, 0, 8, 8, rsm, []) is None


def test_tolerance_admits_near_matches(noise):
    rsm = left_ctu_memory(noise)
    orig = noise[0:8, 64:72].astype(np.int32)
    orig = np.clip(orig + np.where(orig < 128, 1, -1), 0, 255).astype(np.uint8)
    assert segment_strings([orig], 128, 0, 8, 8, rsm, [(-64, 0)], tol=0) is None
    assert segment_strings([orig], 128, 0, 8, 8, rsm, [(-64, 0)], tol=1) == [StringRun(0, 64, (-64, 0))]


def test_string_structure_limits():
    check_strings([StringRun(0, 4, (0, -1))] * 1, 4)
    with pytest.raises(BitstreamError):
        check_strings([StringRun(0, 6, (0, -1)), StringRun(6, 10, (0, -1))], 16)
    with pytest.raises(BitstreamError):
        check_strings([StringRun(0, 8, (0, -1))], 16)
    runs = [StringRun(4 * i, 4, (0, -1)) for i in range(64)]
    check_strings(runs, 256)  # a 16x16 CU holds at most 64 strings


def test_single_string_equals_block_copy(noise):
    rsm = left_ctu_memory(noise, chroma=[noise[:64, :64], noise[64:, 64:]])
    for sv in [(-64, 0), (-60, 8), (-61, 3)]:
        isc = isc_reconstruct([StringRun(0, 256, sv)], 128, 0, 16, 16, rsm)
        ibc = ibc_predict(sv, 128, 0, 16, 16, rsm)
        assert all(np.array_equal(a, b) for a, b in zip(isc, ibc))


def test_invalid_string_reference_rejected(noise):
    rsm = left_ctu_memory(noise)
    reads = rsm.reads
    with pytest.raises(InvalidReferenceError):
        isc_reconstruct([StringRun(0, 32, (-64, 0)), StringRun(32, 32, (0, -1))], 128, 0, 8, 8, rsm)
    assert rsm.reads == reads


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=1000, deadline=None)
def test_string_syntax_lockstep(seed):
    r = np.random.default_rng(seed)
    n = int(r.choice([8, 16, 32]))
    hist = HistoryVectorTable()
    for _ in range(int(r.integers(0, 9))):
        hist.update(tuple(int(v) for v in r.integers(-20, 1, 2)), (0, 0), 16)
    cuts = np.sort(r.choice(np.arange(1, n * n // STRING_UNIT), int(r.integers(0, 8)), replace=False))
    bounds = [0] + [int(c) * STRING_UNIT for c in cuts] + [n * n]
    pool = hist.vectors() + [tuple(int(v) for v in r.integers(-40, 1, 2)) for _ in range(3)]
    runs = [StringRun(a, b - a, pool[int(r.integers(len(pool)))]) for a, b in zip(bounds, bounds[1:])]
    enc_hist, dec_hist = hist.copy(), hist.copy()
    w = BitWriter()
    written = write_strings(runs, enc_hist, w, 64, 32, n, n)
    rd = BitReader(w.getvalue())
    decoded = read_strings(rd, dec_hist, 64, 32, n, n)
    rd.finish()
    assert decoded == written
    assert [(d.start, d.length, d.sv) for d in decoded] == [(q.start, q.length, q.sv) for q in runs]
    assert enc_hist == dec_hist
    assert len(decoded) <= n * n // STRING_UNIT


def test_predicted_vector_uses_front_index():
    h = HistoryVectorTable()
    h.update((-4, 0), (0, 0), 4)
    w = BitWriter()
    out = write_strings([StringRun(0, 16, (-4, 0))], h.copy(), w, 8, 0, 4, 4)
    assert out[0].predicted and out[0].pred_index == 0
    empty = write_strings([StringRun(0, 16, (-4, 0))], HistoryVectorTable(), BitWriter(), 8, 0, 4, 4)
    assert not empty[0].predicted


def test_history_index_beyond_table():
    w = BitWriter()
    w.write_flag(1)
    w.write_ue(0)
    w.write_ue(0)
    with pytest.raises(BitstreamError):
        read_strings(BitReader(w.getvalue()), HistoryVectorTable(), 0, 0, 4, 4)
