"""Intra string copy: horizontal-scan strings predicted from the shared RSM
through string vectors, with history-table vector prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import isc_lengths
from .bitio import CHROMA_420, BitstreamError
from .ibc import HistoryVectorTable, InvalidReferenceError, ReferenceSampleMemory, chroma_vector

STRING_UNIT = 4


@dataclass(frozen=True)
class StringRun:
    start: int  # raster-scan offset inside the CU
    length: int
    sv: tuple[int, int]
    predicted: bool = False
    pred_index: int = -1


def check_strings(runs: list[StringRun], n: int) -> None:
    """Structural constraints: multiples of 4, contiguous exact cover, at most n/4 strings."""
    pos = 0
    for r in runs:
        if r.start != pos or r.length <= 0 or r.length % STRING_UNIT:
            raise BitstreamError(f"bad string at offset {r.start} length {r.length}")
        pos += r.length
    if pos != n:
        raise BitstreamError("strings do not cover the block")
    if len(runs) > n // STRING_UNIT:
        raise BitstreamError("too many strings")


def _streak(b: np.ndarray) -> np.ndarray:
    n = b.shape[-1]
    idx = np.arange(n)
    brk = np.where(b, n, idx)
    return np.minimum.accumulate(brk[..., ::-1], axis=-1)[..., ::-1] - idx


def string_points(x: int, y: int, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(w * h)
    return x + i % w, y + i // w


def chroma_anchor_mask(w: int, h: int) -> np.ndarray:
    """Luma scan positions that carry a 4:2:0 chroma sample (even row and column)."""
    i = np.arange(w * h)
    return ((i % w) % 2 == 0) & ((i // w) % 2 == 0)


def match_mask(orig: list[np.ndarray], x: int, y: int, w: int, h: int, sv,
               rsm: ReferenceSampleMemory, tol: int) -> np.ndarray:
    """Per scan position: reference legal and within ``tol`` of the source."""
    px, py = string_points(x, y, w, h)
    rx, ry = px + sv[0], py + sv[1]
    ok = rsm.points_valid(rx, ry)
    if not ok.any():
        return ok
    mem = rsm.samples[0]
    ref = mem[ry[ok] % 128, rx[ok] % 128].astype(np.int32)
    src = orig[0].reshape(-1)[ok].astype(np.int32)
    good = np.abs(src - ref) <= tol
    if rsm.chroma_format != CHROMA_420 and len(orig) > 1:
        for p in (1, 2):
            r = rsm.samples[p][ry[ok] % 128, rx[ok] % 128].astype(np.int32)
            good &= np.abs(orig[p].reshape(-1)[ok].astype(np.int32) - r) <= tol
    ok[ok] = good
    if rsm.chroma_format == CHROMA_420 and len(orig) > 1:
        anchor = chroma_anchor_mask(w, h)
        cvx, cvy = chroma_vector(sv, CHROMA_420)
        if (2 * cvx, 2 * cvy) != tuple(sv):
            fx, fy = px[anchor] + 2 * cvx, py[anchor] + 2 * cvy
            foot = (rsm.points_valid(fx, fy) & rsm.points_valid(fx + 1, fy)
                    & rsm.points_valid(fx, fy + 1) & rsm.points_valid(fx + 1, fy + 1))
            ok[anchor] &= foot
        # chroma copied at anchors must match too (no chroma residual follows)
        sel = ok & anchor
        if sel.any():
            size = rsm.samples[1].shape[0]
            cx, cy = px[sel] // 2 + cvx, py[sel] // 2 + cvy
            ox, oy = (px[sel] - x) // 2, (py[sel] - y) // 2
            for p in (1, 2):
                ref = rsm.samples[p][cy % size, cx % size].astype(np.int32)
                ok[sel] &= np.abs(orig[p][oy, ox].astype(np.int32) - ref) <= tol
    return ok


def match_lengths(orig: list[np.ndarray], x: int, y: int, w: int, h: int,
                  rsm: ReferenceSampleMemory, candidates, tol: int) -> np.ndarray:
    """(candidates, w*h) legal match length from every scan position.

    Compiled equivalent of running :func:`match_mask` per candidate and
    measuring the streak of matches.
    """
    o = [np.ascontiguousarray(p, dtype=np.int64) for p in orig]
    mem = rsm.samples
    if len(o) == 1 or len(mem) == 1:
        chroma, o, mem = 0, [o[0]] * 3, [mem[0]] * 3
    else:
        chroma = 1 if rsm.chroma_format == CHROMA_420 else 3
    cands = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    return isc_lengths(o[0], o[1], o[2], x, y, w, h, cands, rsm.valid, rsm.ctu_x, rsm.ctu_y,
                       mem[0], mem[1], mem[2], chroma, tol)


def segment_strings(orig: list[np.ndarray], x: int, y: int, w: int, h: int,
                    rsm: ReferenceSampleMemory, candidates: list[tuple[int, int]],
                    tol: int = 0) -> list[StringRun] | None:
    """Greedy longest-match segmentation over candidate string vectors.

    Each string takes the candidate with the longest legal match from the
    current position, rounded down to a multiple of 4 (earlier candidates win
    ties). Returns None when some position cannot start a string.
    """
    if not candidates:
        return None
    lengths = match_lengths(orig, x, y, w, h, rsm, candidates, tol)
    n = w * h
    runs = []
    pos = 0
    while pos < n:
        col = lengths[:, pos] // STRING_UNIT * STRING_UNIT
        best = int(np.argmax(col))
        if col[best] < STRING_UNIT:
            return None
        runs.append(StringRun(pos, int(col[best]), tuple(candidates[best])))
        pos += int(col[best])
    return runs


def sv_code(run: StringRun, history: HistoryVectorTable, writer, x: int, y: int, w: int) -> StringRun:
    """Write one string (vector, then remaining length) and update ``history``."""
    vecs = history.vectors()
    if run.sv in vecs:
        idx = vecs.index(run.sv)
        writer.write_flag(1)
        writer.write_ue(idx)
        run = StringRun(run.start, run.length, run.sv, True, idx)
    else:
        writer.write_flag(0)
        writer.write_se(run.sv[0])
        writer.write_se(run.sv[1])
        run = StringRun(run.start, run.length, run.sv, False, -1)
    history.update(run.sv, (x + run.start % w, y + run.start // w), run.length)
    return run


def write_strings(runs: list[StringRun], history: HistoryVectorTable, writer,
                  x: int, y: int, w: int, h: int) -> list[StringRun]:
    n = w * h
    out = []
    for r in runs:
        out.append(sv_code(r, history, writer, x, y, w))
        writer.write_ue((n - r.start - r.length) // STRING_UNIT)
    return out


def sv_decode(reader, history: HistoryVectorTable) -> tuple[tuple[int, int], bool, int]:
    if reader.read_flag():
        idx = reader.read_ue()
        if idx >= len(history):
            raise BitstreamError(f"string vector index {idx} beyond history of {len(history)}")
        return history.entries[idx].vector, True, idx
    return (reader.read_se(), reader.read_se()), False, -1


def read_strings(reader, history: HistoryVectorTable, x: int, y: int, w: int, h: int) -> list[StringRun]:
    n = w * h
    runs: list[StringRun] = []
    pos = 0
    while pos < n:
        sv, pred, idx = sv_decode(reader, history)
        remaining = reader.read_ue() * STRING_UNIT
        length = n - pos - remaining
        if length <= 0 or length % STRING_UNIT:
            raise BitstreamError(f"bad string length {length}")
        runs.append(StringRun(pos, length, sv, pred, idx))
        history.update(sv, (x + pos % w, y + pos // w), length)
        pos += length
    check_strings(runs, n)
    return runs


def isc_reconstruct(runs: list[StringRun], x: int, y: int, w: int, h: int,
                    rsm: ReferenceSampleMemory) -> list[np.ndarray]:
    """Copy every string from the RSM; any illegal reference raises."""
    check_strings(runs, w * h)
    px, py = string_points(x, y, w, h)
    sid = np.repeat(np.arange(len(runs)), [r.length for r in runs])
    svx = np.array([r.sv[0] for r in runs])[sid]
    svy = np.array([r.sv[1] for r in runs])[sid]
    try:
        luma = rsm.read_points(0, px + svx, py + svy).reshape(h, w)
    except InvalidReferenceError as exc:
        raise InvalidReferenceError(f"ISC block ({x},{y}): {exc}") from None
    out = [luma]
    if len(rsm.samples) > 1:
        if rsm.chroma_format == CHROMA_420:
            anchor = chroma_anchor_mask(w, h)
            csid = sid[anchor]
            cv = np.array([chroma_vector(r.sv, CHROMA_420) for r in runs]).reshape(-1, 2)
            cx = px[anchor] // 2 + cv[csid, 0]
            cy = py[anchor] // 2 + cv[csid, 1]
            for p in (1, 2):
                out.append(rsm.read_points(p, cx, cy).reshape(h // 2, w // 2))
        else:
            for p in (1, 2):
                out.append(rsm.read_points(p, px + svx, py + svy).reshape(h, w))
    return out
