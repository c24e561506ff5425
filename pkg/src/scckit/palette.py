"""Palette mode: palette derivation, predictor maintenance and CI/CA index-map
coding over a horizontal traverse scan."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._kernels import index_map_bits
from .bitio import BitCounter, BitstreamError

MAX_PALETTE = 31
MAX_PREDICTOR = 63

Color = tuple  # one value per coded component


@dataclass
class PaletteState:
    """Rolling palette predictor (the current palette lives in the CU)."""

    predictor: list[Color] = field(default_factory=list)

    def copy(self) -> "PaletteState":
        return PaletteState(list(self.predictor))


@dataclass
class PaletteDerivation:
    palette: list[Color]
    reuse_flags: list[bool]
    new_entries: list[Color]


def derive_palette(pixels: np.ndarray, predictor: list[Color], max_size: int = MAX_PALETTE) -> PaletteDerivation:
    """Exact-color palette for ``pixels`` of shape (H, W, C).

    The most frequent colors (ties broken by value) fill the palette; colors
    found in the predictor are reused, the rest become new entries. Pixels
    outside the palette are escapes. Palette order: reused entries in
    predictor order, then new entries by descending frequency.
    """
    flat = pixels.reshape(-1, pixels.shape[-1])
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    order = sorted(range(len(colors)), key=lambda i: (-int(counts[i]), tuple(colors[i])))
    chosen = [tuple(int(v) for v in colors[i]) for i in order[:max_size]]
    pred_index = {c: i for i, c in enumerate(predictor)}
    reuse = [False] * len(predictor)
    new = []
    for c in chosen:
        if c in pred_index:
            reuse[pred_index[c]] = True
        else:
            new.append(c)
    reused = [c for c, r in zip(predictor, reuse) if r]
    return PaletteDerivation(reused + new, reuse, new)


def build_palette(predictor: list[Color], reuse_flags: list[bool], new_entries: list[Color]) -> list[Color]:
    """Decoder-side palette reconstruction."""
    return [c for c, r in zip(predictor, reuse_flags) if r] + list(new_entries)


def predictor_update(current: list[Color], old: list[Color], reuse_flags: list[bool],
                     max_size: int = MAX_PREDICTOR) -> list[Color]:
    """Current palette first, then predictor entries that were not reused."""
    out: list[Color] = []
    seen = set()
    for c in list(current) + [c for c, r in zip(old, reuse_flags) if not r]:
        if c not in seen:
            seen.add(c)
            out.append(c)
        if len(out) == max_size:
            break
    return out


# ---------------------------------------------------------------- index map

@lru_cache(maxsize=None)
def traverse_scan(h: int, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Horizontal traverse (serpentine) scan.

    Returns (flat raster index per scan position, scan position of the sample
    directly above each scan position or -1 in row 0, row per scan position).
    """
    ys = np.repeat(np.arange(h), w)
    xs = np.tile(np.arange(w), h)
    odd = ys % 2 == 1
    xs[odd] = w - 1 - xs[odd]
    raster = ys * w + xs
    scan_of_raster = np.empty(h * w, dtype=np.int64)
    scan_of_raster[raster] = np.arange(h * w)
    above = np.where(ys > 0, scan_of_raster[np.maximum(raster - w, 0)], -1)
    for a in (raster, above, ys):
        a.setflags(write=False)
    return raster, above, ys


def index_bits(palette_size: int, has_escape: bool) -> int:
    return int(palette_size - 1 + has_escape).bit_length()


@dataclass
class Run:
    copy_above: bool
    index: int  # meaningful for copy-index runs
    length: int


def plan_runs(seq: np.ndarray, above: np.ndarray) -> list[Run]:
    """Greedy run segmentation of an index sequence in scan order.

    At each position the longer of the copy-above and copy-index runs is
    taken (copy-above on ties); copy-above is unavailable in the first row
    and right after a copy-above run.
    """
    n = len(seq)
    same_next = np.append(seq[1:] == seq[:-1], False)
    above_ok = above >= 0
    eq_above = np.zeros(n, dtype=bool)
    eq_above[above_ok] = seq[above_ok] == seq[above[above_ok]]
    ci_len = _streak(same_next) + 1
    ca_len = _streak(eq_above)
    runs: list[Run] = []
    pos = 0
    prev_ca = False
    while pos < n:
        ci = int(ci_len[pos])
        ca = 0 if (prev_ca or not above_ok[pos]) else int(ca_len[pos])
        if ca >= ci and ca > 0:
            runs.append(Run(True, -1, ca))
            pos += ca
            prev_ca = True
        else:
            runs.append(Run(False, int(seq[pos]), ci))
            pos += ci
            prev_ca = False
    return runs


def _streak(b: np.ndarray) -> np.ndarray:
    """Number of consecutive True values starting at each position."""
    n = len(b)
    idx = np.arange(n)
    brk = np.where(b, n, idx)
    next_false = np.minimum.accumulate(brk[::-1])[::-1]
    return next_false - idx


def index_map_encode(indices: np.ndarray, palette_size: int, has_escape: bool, writer) -> list[Run]:
    """Write the run structure of an (H, W) index map; escape index == palette_size.

    Returns the runs written. A :class:`BitCounter` only receives the bit
    count (computed without building runs) and gets an empty list back.
    """
    h, w = indices.shape
    raster, above, ys = traverse_scan(h, w)
    seq = indices.reshape(-1)[raster]
    if seq.max(initial=0) > palette_size or (not has_escape and seq.max(initial=0) >= palette_size):
        raise ValueError("index outside palette")
    nbits = index_bits(palette_size, has_escape)
    if isinstance(writer, BitCounter):
        writer.add(int(index_map_bits(np.ascontiguousarray(seq, dtype=np.int64), above, w, nbits)))
        return []
    runs = plan_runs(seq, above)
    pos = 0
    prev_ca = False
    for run in runs:
        if pos >= w and not prev_ca:  # copy-above available
            writer.write_flag(run.copy_above)
        if not run.copy_above:
            writer.write_bits(run.index, nbits)
        writer.write_ue(run.length - 1)
        pos += run.length
        prev_ca = run.copy_above
    return runs


def index_map_decode(reader, h: int, w: int, palette_size: int, has_escape: bool) -> np.ndarray:
    raster, above, ys = traverse_scan(h, w)
    n = h * w
    seq = np.empty(n, dtype=np.int64)
    nbits = index_bits(palette_size, has_escape)
    limit = palette_size + (1 if has_escape else 0)
    pos = 0
    prev_ca = False
    while pos < n:
        ca = False
        if pos >= w and not prev_ca:
            ca = bool(reader.read_flag())
        if not ca:
            idx = reader.read_bits(nbits)
            if idx >= limit:
                raise BitstreamError(f"palette index {idx} out of range")
        length = reader.read_ue() + 1
        if pos + length > n:
            raise BitstreamError("palette run overruns block")
        if ca:
            for p in range(pos, pos + length):
                seq[p] = seq[above[p]]
        else:
            seq[pos:pos + length] = idx
        pos += length
        prev_ca = ca
    out = np.empty(n, dtype=np.int64)
    out[raster] = seq
    return out.reshape(h, w)


def escape_positions(indices: np.ndarray, palette_size: int) -> np.ndarray:
    """Raster indices of escape samples, in scan order."""
    h, w = indices.shape
    raster, _, _ = traverse_scan(h, w)
    return raster[indices.reshape(-1)[raster] == palette_size]


# ---------------------------------------------------------------- reuse bitmap

def write_reuse_flags(reuse: list[bool], writer) -> None:
    """Run-length coded bitmap: count of reused entries, then gaps between them."""
    idx = [i for i, r in enumerate(reuse) if r]
    writer.write_ue(len(idx))
    prev = -1
    for i in idx:
        writer.write_ue(i - prev - 1)
        prev = i


def read_reuse_flags(reader, predictor_size: int) -> list[bool]:
    count = reader.read_ue()
    if count > min(predictor_size, MAX_PALETTE):
        raise BitstreamError("too many reused palette entries")
    flags = [False] * predictor_size
    pos = -1
    for _ in range(count):
        pos += reader.read_ue() + 1
        if pos >= predictor_size:
            raise BitstreamError("reuse flag beyond predictor")
        flags[pos] = True
    return flags
