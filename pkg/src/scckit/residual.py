"""Residual pipeline: quantizer, integer DCT-II, BDPCM residue prediction,
transform-skip level syntax and parity-inferred transform skip."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

from ._kernels import tsr_bits_kernel
from .bitio import BitCounter, BitstreamError

LEVEL_LIMIT = 1 << 15


class CodingMode(IntEnum):
    TRANSFORM = 0
    TSM = 1
    TSM_BDPCM_H = 2
    TSM_BDPCM_V = 3

    @property
    def is_tsm(self) -> bool:
        return self is not CodingMode.TRANSFORM

    @property
    def bdpcm_dir(self) -> str | None:
        return {CodingMode.TSM_BDPCM_H: "H", CodingMode.TSM_BDPCM_V: "V"}.get(self)


# ---------------------------------------------------------------- quantizer

_LEVEL_SCALE = (40, 45, 51, 57, 64, 72)


@dataclass(frozen=True)
class QuantParams:
    """Uniform scalar quantizer with step 2**((qp-4)/6), held as the exact
    rational ``divisor / 64``."""

    qp: int
    lossless: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp {self.qp} out of range 0..51")

    @property
    def divisor(self) -> int:
        return _LEVEL_SCALE[self.qp % 6] << (self.qp // 6)

    @property
    def step(self) -> float:
        return self.divisor / 64


def quantize(x, qp: QuantParams, shift: int = 0):
    """level = sign(x) * floor(|x| / (step * 2**shift) + 1/2), integer-exact."""
    if qp.lossless:
        raise ValueError("quantize called in lossless mode")
    x = np.asarray(x, dtype=np.int64)
    d = qp.divisor << shift
    lev = (128 * np.abs(x) + d) // (2 * d)
    return np.where(x < 0, -lev, lev)


def dequantize(level, qp: QuantParams, shift: int = 0):
    """x' = level * step * 2**shift, rounded half away from zero."""
    level = np.asarray(level, dtype=np.int64)
    mag = ((np.abs(level) * qp.divisor << shift) + 32) >> 6
    return np.where(level < 0, -mag, mag)


# ---------------------------------------------------------------- transform

BASIS_BITS = 14
COEFF_EXTRA_BITS = 2
TRANSFORM_SIZES = (2, 4, 8, 16, 32)


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """N-point DCT-II basis scaled by 2**BASIS_BITS * sqrt(N) (rows = frequencies)."""
    if n not in TRANSFORM_SIZES:
        raise ValueError(f"unsupported transform size {n}")
    scale = float(1 << BASIS_BITS)
    out = np.empty((n, n), dtype=np.int64)
    for k in range(n):
        ck = 1.0 if k == 0 else math.sqrt(2.0)
        for col in range(n):
            out[k, col] = round(scale * ck * math.cos(math.pi * (2 * col + 1) * k / (2 * n)))
    out.setflags(write=False)
    return out


def _round_shift(v: np.ndarray, sh: int) -> np.ndarray:
    return (v + (1 << (sh - 1))) >> sh


_FLOAT_EXACT = 1 << 52


def _separable(t: np.ndarray, x: np.ndarray, forward: bool) -> np.ndarray:
    """t @ x @ t.T (forward) or t.T @ x @ t, exactly.

    Uses float64 BLAS when every partial sum is provably below 2**52 (all
    values are integers, so the float result is then exact), else int64.
    """
    n = x.shape[0]
    peak = int(np.abs(x).max(initial=0))
    bound = peak * n * n * (1 << (2 * BASIS_BITS + 1))
    if bound < _FLOAT_EXACT:
        tf = t.astype(np.float64)
        xf = x.astype(np.float64)
        r = tf @ xf @ tf.T if forward else tf.T @ xf @ tf
        return r.astype(np.int64)
    return t @ x @ t.T if forward else t.T @ x @ t


def transform_forward(x) -> np.ndarray:
    """2D separable DCT-II; output at orthonormal scale times 2**COEFF_EXTRA_BITS."""
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[0]
    if x.shape != (n, n):
        raise ValueError("square blocks only")
    return _round_shift(_separable(dct_matrix(n), x, True),
                        2 * BASIS_BITS + n.bit_length() - 1 - COEFF_EXTRA_BITS)


def transform_inverse(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.int64)
    n = c.shape[0]
    if c.shape != (n, n):
        raise ValueError("square blocks only")
    return _round_shift(_separable(dct_matrix(n), c, False),
                        2 * BASIS_BITS + n.bit_length() - 1 + COEFF_EXTRA_BITS)


# ---------------------------------------------------------------- BDPCM

def bdpcm_forward(q, direction: str) -> np.ndarray:
    """Differences of quantized residues along columns ("H") or rows ("V").

    Arrays are indexed [row, column]; "H" differences horizontally adjacent
    samples, leaving the first column unchanged.
    """
    q = np.asarray(q, dtype=np.int64)
    out = q.copy()
    if direction == "H":
        out[:, 1:] -= q[:, :-1]
    elif direction == "V":
        out[1:, :] -= q[:-1, :]
    else:
        raise ValueError(f"bad BDPCM direction {direction!r}")
    return out


def bdpcm_inverse(r, direction: str) -> np.ndarray:
    r = np.asarray(r, dtype=np.int64)
    axis = {"H": 1, "V": 0}[direction]
    q = np.cumsum(r, axis=axis)
    if np.abs(q).max(initial=0) >= LEVEL_LIMIT:
        raise BitstreamError("BDPCM accumulator overflow")
    return q


# ---------------------------------------------------------------- level syntax

def subblock_shape(h: int, w: int) -> tuple[int, int]:
    return min(4, h), min(4, w)


@lru_cache(maxsize=None)
def scan_order(h: int, w: int) -> np.ndarray:
    """Flat indices in coding order: sub-blocks forward, raster inside each."""
    sh, sw = subblock_shape(h, w)
    idx = np.arange(h * w).reshape(h, w)
    order = idx.reshape(h // sh, sh, w // sw, sw).transpose(0, 2, 1, 3).reshape(-1)
    order.setflags(write=False)
    return order


def ladder_flags(a: int) -> dict:
    """Syntax elements for one absolute level ``a >= 1``."""
    flags = {"gt1": int(a > 1)}
    if a > 1:
        flags["par"] = a & 1
        for x in (3, 5, 7, 9):
            flags[f"gt{x}"] = int(a > x)
            if a <= x:
                break
        if a > 9:
            flags["rem"] = (a - 10 - (a & 1)) >> 1
    return flags


def ladder_value(flags: dict) -> int:
    if not flags["gt1"]:
        return 1
    par = flags["par"]
    if flags.get("gt9"):
        return 10 + par + 2 * flags["rem"]
    k = 1 + sum(flags.get(f"gt{x}", 0) for x in (3, 5, 7))
    return 2 * k + par


def _level_code(v: int) -> tuple[int, int]:
    """(codeword, length) of one nonzero level: sign, gt1, parity, gt3..gt9, ue remainder."""
    a = -v if v < 0 else v
    code, n = (int(v < 0) << 1) | int(a > 1), 2
    if a == 1:
        return code, n
    code, n = (code << 1) | (a & 1), n + 1
    for x in (3, 5, 7, 9):
        code, n = (code << 1) | int(a > x), n + 1
        if a <= x:
            return code, n
    u = ((a - 10 - (a & 1)) >> 1) + 1
    k = u.bit_length() - 1
    return (code << (2 * k + 1)) | u, n + 2 * k + 1


def _write_level(w, v: int) -> None:
    w.write_bits(*_level_code(v))


def _read_level(r) -> int:
    neg = r.read_flag()
    if not r.read_flag():
        a = 1
    else:
        par = r.read_flag()
        k = 1
        a = None
        for x in (3, 5, 7, 9):
            if not r.read_flag():
                a = 2 * k + par
                break
            k += 1
        if a is None:
            a = 10 + par + 2 * r.read_ue()
    if a >= LEVEL_LIMIT:
        raise BitstreamError("level magnitude out of range")
    return -a if neg else a


def tsr_bits(levels) -> int:
    """Exact bit count of :func:`tsr_encode` for ``levels``."""
    lv = np.ascontiguousarray(levels, dtype=np.int64)
    h, w = lv.shape
    sh, sw = subblock_shape(h, w)
    return int(tsr_bits_kernel(lv, sh, sw))


def tsr_encode(levels, writer) -> None:
    lv = np.asarray(levels)
    if isinstance(writer, BitCounter):
        writer.add(tsr_bits(lv))
        return
    h, w = lv.shape
    sh, sw = subblock_shape(h, w)
    for by in range(0, h, sh):
        for bx in range(0, w, sw):
            sb = lv[by:by + sh, bx:bx + sw]
            if not sb.any():
                writer.write_flag(0)
                continue
            # whole sub-block as one codeword: coded flag, then per-sample significance and level
            code, n = 1, 1
            for v in sb.ravel().tolist():
                if v:
                    c, k = _level_code(v)
                    code, n = (((code << 1) | 1) << k) | c, n + 1 + k
                else:
                    code, n = code << 1, n + 1
            writer.write_bits(code, n)


def tsr_decode(reader, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.int64)
    sh, sw = subblock_shape(h, w)
    for by in range(0, h, sh):
        for bx in range(0, w, sw):
            if not reader.read_flag():
                continue
            for yy in range(by, by + sh):
                for xx in range(bx, bx + sw):
                    if reader.read_flag():
                        out[yy, xx] = _read_level(reader)
    return out


# ---------------------------------------------------------------- parity-inferred TSM

def avs3_tsm_infer(levels) -> bool:
    """TSM iff the number of even-valued significant levels is odd."""
    lv = np.asarray(levels)
    even = (lv != 0) & (lv % 2 == 0)
    return bool(int(even.sum()) & 1)


def avs3_parity_adjust(levels, want_tsm: bool) -> np.ndarray:
    """Change at most one level by one so that the inference yields ``want_tsm``.

    The last significant level in coding order is moved one step toward zero,
    or one step away from zero when its magnitude is 1.
    """
    lv = np.array(levels, dtype=np.int64)
    if not lv.any():
        raise ValueError("parity adjustment needs at least one significant level")
    if avs3_tsm_infer(lv) == want_tsm:
        return lv
    h, w = lv.shape
    flat = lv.reshape(-1)
    order = scan_order(h, w)
    sig = order[flat[order] != 0]
    pos = sig[-1]
    v = flat[pos]
    mag = abs(v)
    mag = mag - 1 if mag > 1 else mag + 1
    flat[pos] = mag if v > 0 else -mag
    return lv
