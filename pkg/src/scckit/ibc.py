"""Intra block copy: reference sample memory (RSM) with 64x64 region reuse,
block-vector legality, history/class-based vector prediction and block hashing."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .bitio import CHROMA_400, CHROMA_420, BitstreamError

CTU = 128
REGION = 64
MAX_IBC_SIZE = 64
HISTORY_CAPACITY = 8
NUM_CBVP_CLASSES = 7


class InvalidReferenceError(BitstreamError):
    """A vector points at samples the RSM does not (validly) hold."""


class RegionState(Enum):
    EMPTY = 0
    LEFT_CTU = 1
    CURRENT = 2


class BlockVector(NamedTuple):
    bvx: int
    bvy: int


def chroma_vector(bv, chroma_format: int) -> tuple[int, int]:
    """Chroma displacement: halved in 4:2:0, rounding toward zero."""
    if chroma_format == CHROMA_420:
        return int(bv[0] / 2), int(bv[1] / 2)
    return bv[0], bv[1]


class ReferenceSampleMemory:
    """One-CTU (128x128 luma) sample store whose four 64x64 regions are
    recycled from left-CTU content to current-CTU content during decoding.

    ``valid`` is a 128x256 window over [left CTU | current CTU] telling which
    picture samples the memory currently holds in a referenceable state.
    """

    def __init__(self, width: int, height: int, chroma_format: int = CHROMA_420) -> None:
        self.width = width
        self.height = height
        self.chroma_format = chroma_format
        n = 1 if chroma_format == CHROMA_400 else 3
        cs = CTU // 2 if chroma_format == CHROMA_420 else CTU
        self.samples = [np.zeros((CTU, CTU), np.uint8)] + [np.zeros((cs, cs), np.uint8) for _ in range(n - 1)]
        self.state = [[RegionState.EMPTY] * 2 for _ in range(2)]
        self.origin: list[list[tuple[int, int] | None]] = [[None] * 2 for _ in range(2)]
        self.valid = np.zeros((CTU, 2 * CTU), dtype=bool)
        self.ctu_x = self.ctu_y = -1
        self.reads = 0

    # -- state transitions -------------------------------------------------

    def begin_ctu(self, ctu_x: int, ctu_y: int) -> None:
        same_row = ctu_y == self.ctu_y and ctu_x == self.ctu_x + CTU
        for ry in range(2):
            for rx in range(2):
                if self.state[ry][rx] is not RegionState.EMPTY:
                    self.state[ry][rx] = RegionState.LEFT_CTU
        if same_row:
            self.valid[:, :CTU] = self.valid[:, CTU:]
        else:
            self.valid[:, :CTU] = False
        self.valid[:, CTU:] = False
        self.ctu_x, self.ctu_y = ctu_x, ctu_y

    def enter_region(self, idx: int) -> None:
        ry, rx = divmod(idx, 2)
        self.state[ry][rx] = RegionState.CURRENT
        self.origin[ry][rx] = (self.ctu_x + rx * REGION, self.ctu_y + ry * REGION)
        ys = slice(ry * REGION, (ry + 1) * REGION)
        self.valid[ys, rx * REGION:(rx + 1) * REGION] = False
        self.samples[0][ys, rx * REGION:(rx + 1) * REGION] = 0
        if len(self.samples) > 1:
            c = REGION // 2 if self.chroma_format == CHROMA_420 else REGION
            for p in self.samples[1:]:
                p[ry * c:(ry + 1) * c, rx * c:(rx + 1) * c] = 0

    def region_of(self, x: int, y: int) -> int:
        return ((y - self.ctu_y) // REGION) * 2 + (x - self.ctu_x) // REGION

    def write(self, x: int, y: int, w: int, h: int, planes: list[np.ndarray]) -> None:
        """Store reconstructed (pre-deblocking) samples of a block of the current CTU."""
        ry, rx = divmod(self.region_of(x, y), 2)
        if (self.state[ry][rx] is not RegionState.CURRENT
                or self.region_of(x + w - 1, y + h - 1) != ry * 2 + rx
                or not (0 <= x - self.ctu_x < CTU and 0 <= y - self.ctu_y < CTU)):
            raise ValueError(f"RSM write at ({x},{y}) {w}x{h} outside the CURRENT region")
        lx, ly = x % CTU, y % CTU
        self.samples[0][ly:ly + h, lx:lx + w] = planes[0]
        if len(planes) > 1:
            sub = 2 if self.chroma_format == CHROMA_420 else 1
            cs = CTU // sub
            for mem, p in zip(self.samples[1:], planes[1:]):
                cx, cy = (x // sub) % cs, (y // sub) % cs
                mem[cy:cy + h // sub, cx:cx + w // sub] = p
        self.valid[y - self.ctu_y:y - self.ctu_y + h, CTU + x - self.ctu_x:CTU + x - self.ctu_x + w] = True

    # -- encoder rollback --------------------------------------------------

    def snapshot(self, x: int, y: int, size: int):
        sub = 2 if self.chroma_format == CHROMA_420 else 1
        lx, ly = x % CTU, y % CTU
        planes = [self.samples[0][ly:ly + size, lx:lx + size].copy()]
        for mem in self.samples[1:]:
            planes.append(mem[ly // sub:(ly + size) // sub, lx // sub:(lx + size) // sub].copy())
        vy, vx = y - self.ctu_y, CTU + x - self.ctu_x
        return (x, y, size, planes, self.valid[vy:vy + size, vx:vx + size].copy())

    def restore(self, snap) -> None:
        x, y, size, planes, valid = snap
        sub = 2 if self.chroma_format == CHROMA_420 else 1
        lx, ly = x % CTU, y % CTU
        self.samples[0][ly:ly + size, lx:lx + size] = planes[0]
        for mem, p in zip(self.samples[1:], planes[1:]):
            mem[ly // sub:(ly + size) // sub, lx // sub:(lx + size) // sub] = p
        vy, vx = y - self.ctu_y, CTU + x - self.ctu_x
        self.valid[vy:vy + size, vx:vx + size] = valid

    # -- queries -----------------------------------------------------------

    def occupancy(self) -> int:
        """Number of luma samples currently held in a referenceable state."""
        return int(self.valid.sum())

    def rect_valid(self, x: int, y: int, w: int, h: int) -> bool:
        if x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            return False
        vy, vx = y - self.ctu_y, x - self.ctu_x + CTU
        if vy < 0 or vx < 0 or vy + h > CTU or vx + w > 2 * CTU:
            return False
        return bool(self.valid[vy:vy + h, vx:vx + w].all())

    def points_valid(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Per-sample validity for arbitrary picture coordinates (vectorized)."""
        vy = py - self.ctu_y
        vx = px - self.ctu_x + CTU
        ok = (vy >= 0) & (vy < CTU) & (vx >= 0) & (vx < 2 * CTU)
        out = np.zeros(np.shape(px), dtype=bool)
        out[ok] = self.valid[vy[ok], vx[ok]]
        return out

    def model_valid(self, px: int, py: int, coded: bool) -> bool:
        """Reference validity recomputed from region states and origins
        (slow; used to cross-check the incremental window)."""
        if not (0 <= px < self.width and 0 <= py < self.height):
            return False
        if not (self.ctu_y <= py < self.ctu_y + CTU and self.ctu_x - CTU <= px < self.ctu_x + CTU):
            return False
        sy, sx = (py % CTU) // REGION, (px % CTU) // REGION
        origin = ((px // REGION) * REGION, (py // REGION) * REGION)
        if self.origin[sy][sx] != origin or self.state[sy][sx] is RegionState.EMPTY:
            return False
        if self.state[sy][sx] is RegionState.CURRENT and px >= self.ctu_x:
            return coded
        return self.state[sy][sx] in (RegionState.LEFT_CTU, RegionState.CURRENT)

    def read_rect(self, plane: int, x: int, y: int, w: int, h: int) -> np.ndarray:
        """Fetch samples (plane coordinates) from the memory, asserting validity."""
        sub = 2 if plane and self.chroma_format == CHROMA_420 else 1
        if not self.rect_valid(x * sub, y * sub, w * sub, h * sub):
            raise InvalidReferenceError(f"RSM read of invalid area ({x},{y}) {w}x{h} plane {plane}")
        mem = self.samples[plane]
        size = mem.shape[0]
        cols = np.arange(x, x + w) % size
        r0 = y % size
        self.reads += w * h
        return mem[r0:r0 + h][:, cols]

    def read_points(self, plane: int, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        sub = 2 if plane and self.chroma_format == CHROMA_420 else 1
        if not self.points_valid(px * sub, py * sub).all():
            raise InvalidReferenceError(f"RSM read of invalid samples in plane {plane}")
        mem = self.samples[plane]
        size = mem.shape[0]
        self.reads += px.size
        return mem[py % size, px % size]


def bv_valid(bv, x: int, y: int, w: int, h: int, rsm: ReferenceSampleMemory) -> bool:
    """Legality of a block vector for the block at (x, y) of size w x h.

    The reference must lie inside the picture, within the current or left CTU
    of the current CTU row, in regions the RSM still holds, and entirely in
    already reconstructed samples (so never overlapping the current block).
    For 4:2:0 the chroma reference footprint is checked as well.
    """
    bvx, bvy = int(bv[0]), int(bv[1])
    if w > MAX_IBC_SIZE or h > MAX_IBC_SIZE:
        return False
    if not rsm.rect_valid(x + bvx, y + bvy, w, h):
        return False
    if rsm.chroma_format == CHROMA_420:
        cx, cy = chroma_vector((bvx, bvy), CHROMA_420)
        if (2 * cx, 2 * cy) != (bvx, bvy) and not rsm.rect_valid(x + 2 * cx, y + 2 * cy, w, h):
            return False
    return True


def ibc_predict(bv, x: int, y: int, w: int, h: int, rsm: ReferenceSampleMemory) -> list[np.ndarray]:
    """Sample-exact copy of the reference block from the RSM, all planes."""
    if not bv_valid(bv, x, y, w, h, rsm):
        raise InvalidReferenceError(f"invalid block vector {tuple(bv)} for block ({x},{y}) {w}x{h}")
    out = [rsm.read_rect(0, x + bv[0], y + bv[1], w, h)]
    if len(rsm.samples) > 1:
        sub = 2 if rsm.chroma_format == CHROMA_420 else 1
        cbx, cby = chroma_vector(bv, rsm.chroma_format)
        for p in (1, 2):
            out.append(rsm.read_rect(p, x // sub + cbx, y // sub + cby, w // sub, h // sub))
    return out


# ---------------------------------------------------------------- vector history

@dataclass(frozen=True)
class HistoryEntry:
    vector: tuple[int, int]
    pos: tuple[int, int]
    size: int
    occurrence: int = 1


class HistoryVectorTable:
    """Most-recent-first list of coded block/string vectors (shared by IBC and ISC)."""

    def __init__(self, entries: list[HistoryEntry] | None = None, capacity: int = HISTORY_CAPACITY) -> None:
        self.entries: list[HistoryEntry] = list(entries or [])
        self.capacity = capacity

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HistoryVectorTable) and self.entries == other.entries

    def copy(self) -> "HistoryVectorTable":
        return HistoryVectorTable(self.entries, self.capacity)

    def vectors(self) -> list[tuple[int, int]]:
        return [e.vector for e in self.entries]

    def update(self, vector, pos, size: int) -> None:
        """Move-to-front insert; a repeated vector increments its occurrence and
        takes the latest position and size."""
        vector = (int(vector[0]), int(vector[1]))
        for i, e in enumerate(self.entries):
            if e.vector == vector:
                del self.entries[i]
                self.entries.insert(0, replace(e, pos=tuple(pos), size=size, occurrence=e.occurrence + 1))
                return
        self.entries.insert(0, HistoryEntry(vector, (int(pos[0]), int(pos[1])), size))
        del self.entries[self.capacity:]


def hbvp_update(history: HistoryVectorTable, vector, pos, size: int) -> HistoryVectorTable:
    out = history.copy()
    out.update(vector, pos, size)
    return out


def _location_class(pos, x: int, y: int, w: int, h: int) -> int | None:
    ex, ey = pos
    if ex < x:
        if ey < y:
            return 4  # above-left
        if ey < y + h:
            return 2  # left
        return 6  # below-left
    if ey < y:
        return 3 if ex < x + w else 5  # above / above-right
    return None


def cbvp_classify(history: HistoryVectorTable, x: int, y: int, w: int, h: int) -> list[tuple[int, int] | None]:
    """Candidate vector per class: 0 size > 32 samples, 1 occurrence > 1,
    2 left, 3 above, 4 above-left, 5 above-right, 6 below-left.
    Each class takes its most recent qualifying entry; empty classes are None."""
    out: list[tuple[int, int] | None] = [None] * NUM_CBVP_CLASSES
    for e in history.entries:
        if out[0] is None and e.size > 32:
            out[0] = e.vector
        if out[1] is None and e.occurrence > 1:
            out[1] = e.vector
        c = _location_class(e.pos, x, y, w, h)
        if c is not None and out[c] is None:
            out[c] = e.vector
    return out


# ---------------------------------------------------------------- block hashing

def _crc16_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint32)
    for i in range(256):
        c = i << 8
        for _ in range(8):
            c = ((c << 1) ^ 0x1021) if c & 0x8000 else (c << 1)
        table[i] = c & 0xFFFF
    return table


_CRC16 = _crc16_table()


def block_hash_keys(plane: np.ndarray, block: int) -> np.ndarray:
    """16-bit key for every block position: weighted 8-bit row checksums
    folded with a CRC-16 (CCITT polynomial). Shape (H-B+1, W-B+1)."""
    p = plane.astype(np.uint32)
    hh, ww = p.shape
    nx, ny = ww - block + 1, hh - block + 1
    rows = np.zeros((hh, nx), dtype=np.uint32)
    for k in range(block):
        rows += p[:, k:k + nx] * (2 * k + 1)
    rows &= 0xFF
    key = np.full((ny, nx), 0xFFFF, dtype=np.uint32)
    for r in range(block):
        key = ((key << 8) & 0xFFFF) ^ _CRC16[((key >> 8) ^ rows[r:r + ny]) & 0xFF]
    return key.astype(np.uint16)


class BlockHashTable:
    """Positions bucketed by block key (CSR layout: keys sorted, offsets per key)."""

    def __init__(self, plane: np.ndarray, block: int, area: tuple[int, int, int, int] | None = None) -> None:
        self.block = block
        self.plane = np.asarray(plane)
        self.keys = block_hash_keys(self.plane, block)
        ny, nx = self.keys.shape
        ys, xs = np.mgrid[0:ny, 0:nx]
        mask = np.ones((ny, nx), dtype=bool)
        if area is not None:
            ax, ay, aw, ah = area
            mask = (xs >= ax) & (ys >= ay) & (xs + block <= ax + aw) & (ys + block <= ay + ah)
        flat_keys = self.keys[mask].astype(np.int64)
        pos = (ys[mask].astype(np.int64) << 16) | xs[mask]
        order = np.argsort(flat_keys, kind="stable")
        self._pos = pos[order]
        self._offsets = np.searchsorted(flat_keys[order], np.arange(65537))

    def key_of(self, samples: np.ndarray) -> int:
        return int(block_hash_keys(np.asarray(samples), self.block)[0, 0])

    def bucket(self, key: int) -> np.ndarray:
        """(N, 2) array of (x, y) positions sharing ``key``, raster order."""
        p = self._pos[self._offsets[key]:self._offsets[key + 1]]
        return np.stack([p & 0xFFFF, p >> 16], axis=1)

    def bucket_rows(self, key: int, y0: int, y1: int) -> np.ndarray:
        """Bucket entries with y0 <= y < y1 (binary search; entries are in raster order)."""
        p = self._pos[self._offsets[key]:self._offsets[key + 1]]
        lo, hi = np.searchsorted(p, [y0 << 16, y1 << 16])
        p = p[lo:hi]
        return np.stack([p & 0xFFFF, p >> 16], axis=1)

    def search(self, samples: np.ndarray, exact: bool = True) -> list[tuple[int, int]]:
        """Positions whose block has the same key (and, if ``exact``, the same samples)."""
        cand = self.bucket(self.key_of(samples))
        if not exact:
            return [tuple(map(int, c)) for c in cand]
        b = self.block
        r = np.arange(b)
        blocks = self.plane[cand[:, 1, None, None] + r[:, None], cand[:, 0, None, None] + r]
        hit = (blocks == np.asarray(samples)).all(axis=(1, 2))
        return [(int(cx), int(cy)) for cx, cy in cand[hit]]


def hash_build(plane: np.ndarray, block: int = 8, area=None) -> BlockHashTable:
    if block not in (8, 16):
        raise ValueError("hash block size must be 8 or 16")
    return BlockHashTable(plane, block, area)


def hash_search(table: BlockHashTable, samples: np.ndarray) -> list[tuple[int, int]]:
    return table.search(samples, exact=True)
