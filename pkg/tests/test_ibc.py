import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scckit.bitio import CHROMA_400, CHROMA_420
from scckit.ibc import (HISTORY_CAPACITY, BlockHashTable, HistoryVectorTable, InvalidReferenceError,
                        ReferenceSampleMemory, RegionState, block_hash_keys, bv_valid, cbvp_classify,
                        chroma_vector, hash_build, hash_search, hbvp_update, ibc_predict)


def fill_region(rsm, idx, value=0):
    rsm.enter_region(idx)
    ry, rx = divmod(idx, 2)
    x, y = rsm.ctu_x + 64 * rx, rsm.ctu_y + 64 * ry
    planes = [np.full((64, 64), value, np.uint8)]
    if rsm.chroma_format == CHROMA_420:
        planes += [np.full((32, 32), value, np.uint8)] * 2
    rsm.write(x, y, 64, 64, planes)


def states(rsm):
    return [s for row in rsm.state for s in row]


@pytest.fixture
def rsm_second_ctu():
    """Memory just after the first CTU of a 256x128 picture, second CTU begun."""
    rsm = ReferenceSampleMemory(256, 128, CHROMA_400)
    rsm.begin_ctu(0, 0)
    for i in range(4):
        fill_region(rsm, i, 10 * (i + 1))
    rsm.begin_ctu(128, 0)
    return rsm


def test_region_lifecycle(rsm_second_ctu):
    rsm = rsm_second_ctu
    assert states(rsm) == [RegionState.LEFT_CTU] * 4
    assert rsm.occupancy() == 128 * 128
    fill_region(rsm, 0)
    assert states(rsm).count(RegionState.CURRENT) == 1
    assert states(rsm).count(RegionState.LEFT_CTU) == 3
    for i in (1, 2, 3):
        fill_region(rsm, i)
    assert states(rsm) == [RegionState.CURRENT] * 4


def test_first_ctu_starts_empty():
    rsm = ReferenceSampleMemory(128, 128, CHROMA_400)
    rsm.begin_ctu(0, 0)
    assert states(rsm) == [RegionState.EMPTY] * 4
    assert rsm.occupancy() == 0


def test_bv_validity_cases(rsm_second_ctu):
    rsm = rsm_second_ctu
    rsm.enter_region(0)
    x, y = 128, 0
    assert not bv_valid((0, 0), x, y, 8, 8, rsm)  # self overlap
    assert not bv_valid((0, -8), x, y, 8, 8, rsm)  # above the picture
    # the left CTU's top-left region shares memory with the region just entered
    assert not bv_valid((-128, 0), x, y, 8, 8, rsm)
    # its top-right region is still held
    assert bv_valid((-64, 0), x, y, 8, 8, rsm)
    assert bv_valid((-64, 64), x, y, 8, 8, rsm)
    assert not bv_valid((-129, 0), x, y, 8, 8, rsm)
    assert not bv_valid((-64, 0), x, y, 128, 8, rsm)  # larger than the IBC limit


def test_reference_into_coded_current_area(rsm_second_ctu):
    rsm = rsm_second_ctu
    rsm.enter_region(0)
    rsm.write(128, 0, 8, 8, [np.full((8, 8), 7, np.uint8)])
    assert bv_valid((-8, 0), 136, 0, 8, 8, rsm)
    assert not bv_valid((-4, 0), 136, 0, 8, 8, rsm)  # overlaps the block being coded
    pred = ibc_predict((-8, 0), 136, 0, 8, 8, rsm)
    assert (pred[0] == 7).all()
    with pytest.raises(InvalidReferenceError):
        ibc_predict((-4, 0), 136, 0, 8, 8, rsm)


def test_write_outside_current_region(rsm_second_ctu):
    rsm = rsm_second_ctu
    rsm.enter_region(0)
    with pytest.raises(ValueError):
        rsm.write(192, 0, 8, 8, [np.zeros((8, 8), np.uint8)])


def test_left_ctu_content_readable(rsm_second_ctu):
    pred = ibc_predict((-64, 0), 128, 0, 8, 8, rsm_second_ctu)
    assert (pred[0] == 20).all()


def test_window_agrees_with_region_model(rsm_second_ctu):
    rsm = rsm_second_ctu
    rsm.enter_region(0)
    rsm.write(128, 0, 16, 16, [np.zeros((16, 16), np.uint8)])
    coded = np.zeros((128, 256), bool)
    coded[:, :128] = True
    coded[0:16, 128:144] = True
    for py in range(0, 128, 3):
        for px in range(0, 256, 3):
            assert rsm.points_valid(np.array([px]), np.array([py]))[0] == \
                rsm.model_valid(px, py, coded[py, px])


def test_chroma_vector_rounds_toward_zero():
    assert chroma_vector((-9, 7), CHROMA_420) == (-4, 3)
    assert chroma_vector((-9, 7), CHROMA_400) == (-9, 7)


def test_420_odd_vector_checks_chroma_footprint():
    rsm = ReferenceSampleMemory(256, 128, CHROMA_420)
    rsm.begin_ctu(0, 0)
    rsm.enter_region(0)
    z = np.zeros
    rsm.write(0, 0, 24, 8, [z((8, 24), np.uint8), z((4, 12), np.uint8), z((4, 12), np.uint8)])
    rsm.write(0, 8, 24, 7, [z((7, 24), np.uint8), z((3, 12), np.uint8), z((3, 12), np.uint8)])
    # luma reference rows 7..14 are coded; the chroma vector (0, -4) reaches row 15, which is not
    assert rsm.rect_valid(7, 7, 8, 8)
    assert not bv_valid((-1, -9), 8, 16, 8, 8, rsm)
    assert bv_valid((-1, -10), 8, 16, 8, 8, rsm)


def test_history_rules():
    h = HistoryVectorTable()
    h.update((-8, 0), (0, 0), 64)
    assert [(e.vector, e.occurrence) for e in h.entries] == [((-8, 0), 1)]
    h.update((-8, 0), (8, 0), 16)
    assert len(h) == 1 and h.entries[0].occurrence == 2 and h.entries[0].pos == (8, 0)
    for i in range(HISTORY_CAPACITY + 1):
        h.update((-i - 20, 0), (0, 0), 16)
    assert len(h) == HISTORY_CAPACITY
    assert (-8, 0) not in h.vectors()
    assert h.vectors()[0] == (-HISTORY_CAPACITY - 20, 0)


@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), max_size=40))
@settings(max_examples=200, deadline=None)
def test_history_invariants(vectors):
    h = HistoryVectorTable()
    for v in vectors:
        h = hbvp_update(h, v, (0, 0), 16)
        assert h.vectors()[0] == v
        assert len(h) <= HISTORY_CAPACITY
        assert len(set(h.vectors())) == len(h)


def test_hbvp_update_is_pure():
    h = HistoryVectorTable()
    h2 = hbvp_update(h, (1, 2), (0, 0), 4)
    assert len(h) == 0 and len(h2) == 1


def test_cbvp_classes():
    assert cbvp_classify(HistoryVectorTable(), 64, 64, 8, 8) == [None] * 7
    h = HistoryVectorTable()
    h.update((-1, 0), (30, 64), 16)  # left
    h.update((-2, 0), (64, 30), 16)  # above
    h.update((-3, 0), (30, 30), 16)  # above-left
    h.update((-4, 0), (80, 30), 16)  # above-right
    h.update((-5, 0), (30, 90), 16)  # below-left
    h.update((-6, 0), (64, 64), 64)  # large
    h.update((-7, 0), (64, 64), 16)
    h.update((-7, 0), (64, 64), 16)  # repeated
    c = cbvp_classify(h, 64, 64, 8, 8)
    assert c == [(-6, 0), (-7, 0), (-1, 0), (-2, 0), (-3, 0), (-4, 0), (-5, 0)]


def test_hash_keys_content_only(rng):
    plane = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    plane[40:48, 30:38] = plane[2:10, 5:13]
    keys = block_hash_keys(plane, 8)
    assert keys[40, 30] == keys[2, 5]
    t = hash_build(plane, 8)
    bucket = {tuple(p) for p in t.bucket(int(keys[2, 5]))}
    assert {(5, 2), (30, 40)} <= bucket


def test_hash_search_finds_exact_duplicate(rng):
    plane = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    plane[16:24, 40:48] = plane[0:8, 0:8]
    hits = hash_search(hash_build(plane, 8), plane[0:8, 0:8])
    assert (40, 16) in hits and (0, 0) in hits
    for x, y in hits:
        assert np.array_equal(plane[y:y + 8, x:x + 8], plane[0:8, 0:8])


def test_hash_on_noise_has_no_spurious_exact_hits(rng):
    plane = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    t = hash_build(plane, 8)
    assert hash_search(t, plane[10:18, 20:28]) == [(20, 10)]


def test_hash_area_and_sizes(rng):
    plane = rng.integers(0, 4, (32, 32), dtype=np.uint8)
    t = BlockHashTable(plane, 8, area=(0, 0, 16, 16))
    pos = np.concatenate([t.bucket(k) for k in range(65536)])
    assert pos.max() <= 8
    with pytest.raises(ValueError):
        hash_build(plane, 4)
