"""JIT-compiled inner loops for the encoder's rate estimation."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def tsr_bits_kernel(lv: np.ndarray, sh: int, sw: int) -> int:
    h, w = lv.shape
    bits = 0
    for by in range(0, h, sh):
        for bx in range(0, w, sw):
            bits += 1
            coded = False
            sb = 0
            for y in range(by, by + sh):
                for x in range(bx, bx + sw):
                    v = lv[y, x]
                    if v != 0:
                        coded = True
                        a = v if v > 0 else -v
                        if a == 1:
                            sb += 2
                        elif a <= 3:
                            sb += 4
                        elif a <= 5:
                            sb += 5
                        elif a <= 7:
                            sb += 6
                        elif a <= 9:
                            sb += 7
                        else:
                            rem = (a - 10 - (a & 1)) >> 1
                            n = 0
                            t = rem + 1
                            while t > 1:
                                t >>= 1
                                n += 1
                            sb += 7 + 2 * n + 1
            if coded:
                bits += sh * sw + sb
    return bits


# ---------------------------------------------------------------- residual decision

@njit(cache=True, nogil=True)
def _quant(x: np.ndarray, d: int) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            v = x[i, j]
            a = v if v >= 0 else -v
            q = (128 * a + d) // (2 * d)
            out[i, j] = q if v >= 0 else -q
    return out


@njit(cache=True, nogil=True)
def _dequant(lv: np.ndarray, divisor: int, shift: int) -> np.ndarray:
    out = np.empty_like(lv)
    for i in range(lv.shape[0]):
        for j in range(lv.shape[1]):
            v = lv[i, j]
            a = v if v >= 0 else -v
            m = ((a * divisor << shift) + 32) >> 6
            out[i, j] = m if v >= 0 else -m
    return out


@njit(cache=True, nogil=True)
def _sep(t: np.ndarray, x: np.ndarray, forward: bool, sh: int) -> np.ndarray:
    n = x.shape[0]
    tmp = np.zeros((n, n), np.int64)
    out = np.zeros((n, n), np.int64)
    if forward:  # t @ x @ t.T
        for i in range(n):
            for k in range(n):
                a = t[i, k]
                for j in range(n):
                    tmp[i, j] += a * x[k, j]
        for i in range(n):
            for j in range(n):
                acc = 0
                for k in range(n):
                    acc += tmp[i, k] * t[j, k]
                out[i, j] = (acc + (1 << (sh - 1))) >> sh
    else:  # t.T @ x @ t
        for k in range(n):
            for i in range(n):
                a = t[k, i]
                for j in range(n):
                    tmp[i, j] += a * x[k, j]
        for i in range(n):
            for j in range(n):
                acc = 0
                for k in range(n):
                    acc += tmp[i, k] * t[k, j]
                out[i, j] = (acc + (1 << (sh - 1))) >> sh
    return out


@njit(cache=True, nogil=True)
def _bdpcm_fwd(q: np.ndarray, direction: int) -> np.ndarray:
    out = q.copy()
    h, w = q.shape
    if direction == 1:
        for i in range(h):
            for j in range(1, w):
                out[i, j] = q[i, j] - q[i, j - 1]
    else:
        for i in range(1, h):
            for j in range(w):
                out[i, j] = q[i, j] - q[i - 1, j]
    return out


@njit(cache=True, nogil=True)
def _parity_fix(lv: np.ndarray, want_tsm: bool) -> None:
    """In-place twin of residual.avs3_parity_adjust."""
    h, w = lv.shape
    even = 0
    for i in range(h):
        for j in range(w):
            v = lv[i, j]
            if v != 0 and v % 2 == 0:
                even += 1
    if (even & 1 == 1) == want_tsm:
        return
    sh = min(4, h)
    sw = min(4, w)
    nbx = w // sw
    nsb = (h // sh) * nbx
    for sbi in range(nsb - 1, -1, -1):
        by = (sbi // nbx) * sh
        bx = (sbi % nbx) * sw
        for k in range(sh * sw - 1, -1, -1):
            y = by + k // sw
            x = bx + k % sw
            v = lv[y, x]
            if v != 0:
                a = v if v > 0 else -v
                a = a - 1 if a > 1 else a + 1
                lv[y, x] = a if v > 0 else -a
                return


@njit(cache=True, nogil=True)
def _sse(a: np.ndarray, b: np.ndarray) -> int:
    s = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = a[i, j] - b[i, j]
            s += d * d
    return s


@njit(cache=True, nogil=True)
def _cumsum(lv: np.ndarray, direction: int) -> np.ndarray:
    out = lv.copy()
    h, w = lv.shape
    if direction == 1:
        for i in range(h):
            for j in range(1, w):
                out[i, j] += out[i, j - 1]
    else:
        for i in range(1, h):
            for j in range(w):
                out[i, j] += out[i - 1, j]
    return out


@njit(cache=True, nogil=True)
def tu_decide(blk, divisor, lam, basis, try_transform, try_tsm, bdpcm_dir, parity, lossless,
              flag_bits_ts, flag_bits_bd):
    """Best residual coding of one TU.

    Returns (code, levels, reconstructed residual, distortion, level bits) with
    code -1 for an uncoded block, 0 transform, 1 transform skip, 2/3 BDPCM H/V.
    """
    n = blk.shape[0]
    sh = min(4, n)
    log2n = 0
    while (1 << log2n) < n:
        log2n += 1
    zero = np.zeros_like(blk)
    best_code = -1
    best_lv = zero
    best_rec = zero
    best_bits = 0
    dist0 = _sse(blk, zero)
    if lossless:
        if dist0 == 0:
            return -1, zero, zero, 0, 0
        best_code = 1
        best_lv = blk.copy()
        best_bits = tsr_bits_kernel(best_lv, sh, sh)
        best_rate = best_bits + flag_bits_bd
        if bdpcm_dir > 0:
            lv = _bdpcm_fwd(blk, bdpcm_dir)
            b = tsr_bits_kernel(lv, sh, sh)
            if b + flag_bits_bd < best_rate:
                best_code, best_lv, best_bits, best_rate = 1 + bdpcm_dir, lv, b, b + flag_bits_bd
        return best_code, best_lv, blk.copy(), 0, best_bits
    best_cost = float(dist0) + lam
    best_rate = 1
    if dist0 == 0:
        return -1, zero, zero, 0, 0
    for code in range(4):
        if code == 0:
            if not try_transform:
                continue
            c = _sep(basis, blk, True, 28 + log2n - 2)
            lv = _quant(c, divisor << 2)
        elif code == 1:
            if not try_tsm:
                continue
            lv = _quant(blk, divisor)
        else:
            if bdpcm_dir != code - 1:
                continue
            lv = _bdpcm_fwd(_quant(blk, divisor), bdpcm_dir)
        nz = False
        for i in range(n):
            for j in range(n):
                if lv[i, j] != 0:
                    nz = True
        if not nz:
            continue
        if parity and code <= 1:
            _parity_fix(lv, code == 1)
        if code == 0:
            rec = _sep(basis, _dequant(lv, divisor, 2), False, 28 + log2n + 2)
        elif code == 1:
            rec = _dequant(lv, divisor, 0)
        else:
            rec = _dequant(_cumsum(lv, bdpcm_dir), divisor, 0)
        bits = tsr_bits_kernel(lv, sh, sh)
        rate = 1 + bits + flag_bits_bd + (flag_bits_ts if code <= 1 else 0)
        cost = _sse(blk, rec) + lam * rate
        if cost < best_cost or (cost == best_cost and rate < best_rate):
            best_cost, best_rate = cost, rate
            best_code, best_lv, best_rec, best_bits = code, lv, rec, bits
    return best_code, best_lv, best_rec, _sse(blk, best_rec), best_bits


# ---------------------------------------------------------------- palette index map

@njit(cache=True, nogil=True)
def index_map_bits(seq: np.ndarray, above: np.ndarray, w: int, nbits: int) -> int:
    """Bit count of the greedy copy-index/copy-above run coding of ``seq``."""
    n = seq.shape[0]
    ci = np.ones(n, np.int64)
    for i in range(n - 2, -1, -1):
        if seq[i + 1] == seq[i]:
            ci[i] = ci[i + 1] + 1
    ca = np.zeros(n, np.int64)
    for i in range(n - 1, -1, -1):
        if above[i] >= 0 and seq[i] == seq[above[i]]:
            ca[i] = 1 + (ca[i + 1] if i + 1 < n else 0)
    bits = 0
    pos = 0
    prev_ca = False
    while pos < n:
        avail = pos >= w and not prev_ca
        a = ca[pos] if avail else 0
        if avail:
            bits += 1
        if a >= ci[pos] and a > 0:
            length = a
            prev_ca = True
        else:
            length = ci[pos]
            bits += nbits
            prev_ca = False
        m = length
        k = 0
        while m > 0:
            m >>= 1
            k += 1
        bits += 2 * k - 1
        pos += length
    return bits


# ---------------------------------------------------------------- string matching

@njit(cache=True, nogil=True)
def isc_lengths(orig0, orig1, orig2, x, y, w, h, cands, valid, ctu_x, ctu_y,
                mem0, mem1, mem2, chroma, tol):
    """Per candidate vector and scan position: length of the legal matching run.

    ``chroma``: 0 luma only, 1 4:2:0 (footprint validity and anchor sample match), 3 4:4:4.
    """
    k = cands.shape[0]
    n = w * h
    lengths = np.zeros((k, n), np.int64)
    for c in range(k):
        vx = cands[c, 0]
        vy = cands[c, 1]
        cvx = int(vx / 2)
        cvy = int(vy / 2)
        odd = chroma == 1 and (2 * cvx != vx or 2 * cvy != vy)
        run = 0
        for i in range(n - 1, -1, -1):
            px = x + i % w
            py = y + i // w
            rx = px + vx
            ry = py + vy
            ok = _valid(valid, rx, ry, ctu_x, ctu_y)
            if ok:
                lx = rx % 128
                ly = ry % 128
                d = orig0[i // w, i % w] - mem0[ly, lx]
                ok = -tol <= d <= tol
                if ok and chroma == 3:
                    d1 = orig1[i // w, i % w] - mem1[ly, lx]
                    d2 = orig2[i // w, i % w] - mem2[ly, lx]
                    ok = -tol <= d1 <= tol and -tol <= d2 <= tol
            if ok and chroma == 1 and (i % w) % 2 == 0 and (i // w) % 2 == 0:
                if odd:
                    fx = px + 2 * cvx
                    fy = py + 2 * cvy
                    ok = (_valid(valid, fx, fy, ctu_x, ctu_y) and _valid(valid, fx + 1, fy, ctu_x, ctu_y)
                          and _valid(valid, fx, fy + 1, ctu_x, ctu_y)
                          and _valid(valid, fx + 1, fy + 1, ctu_x, ctu_y))
                if ok:
                    # the chroma sample this anchor copies must match as well
                    cs = mem1.shape[0]
                    cx = (px // 2 + cvx) % cs
                    cy = (py // 2 + cvy) % cs
                    oy = (i // w) // 2
                    ox = (i % w) // 2
                    d1 = orig1[oy, ox] - mem1[cy, cx]
                    d2 = orig2[oy, ox] - mem2[cy, cx]
                    ok = -tol <= d1 <= tol and -tol <= d2 <= tol
            run = run + 1 if ok else 0
            lengths[c, i] = run
    return lengths


@njit(cache=True, nogil=True)
def _valid(valid, px, py, ctu_x, ctu_y) -> bool:
    vy = py - ctu_y
    vx = px - ctu_x + 128
    if vy < 0 or vy >= 128 or vx < 0 or vx >= 256:
        return False
    return valid[vy, vx]


# ---------------------------------------------------------------- intra / distortion

@njit(cache=True, nogil=True)
def intra_all(plane, x, y, n):
    """DC, planar, horizontal and vertical predictions of an n x n block, stacked."""
    top = np.empty(n, np.int64)
    left = np.empty(n, np.int64)
    if y > 0:
        for i in range(n):
            top[i] = plane[y - 1, x + i]
    if x > 0:
        for i in range(n):
            left[i] = plane[y + i, x - 1]
    if y == 0 and x == 0:
        top[:] = 128
        left[:] = 128
    elif y == 0:
        top[:] = left[0]
    elif x == 0:
        left[:] = top[0]
    out = np.empty((4, n, n), np.int64)
    dc = (top.sum() + left.sum() + n) // (2 * n)
    tr = top[n - 1]
    bl = left[n - 1]
    for i in range(n):
        for j in range(n):
            out[0, i, j] = dc
            hor = (n - 1 - j) * left[i] + (j + 1) * tr
            ver = (n - 1 - i) * top[j] + (i + 1) * bl
            out[1, i, j] = (hor * n + ver * n + n * n) // (2 * n * n)
            out[2, i, j] = left[i]
            out[3, i, j] = top[j]
    return out


@njit(cache=True, nogil=True)
def clip_sse(orig, pred, res) -> int:
    """SSE between ``orig`` and clip(pred + res, 0, 255)."""
    s = 0
    for i in range(orig.shape[0]):
        for j in range(orig.shape[1]):
            v = pred[i, j] + res[i, j]
            v = 0 if v < 0 else (255 if v > 255 else v)
            d = orig[i, j] - v
            s += d * d
    return s


@njit(cache=True, nogil=True)
def block_sad(a, b) -> int:
    s = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = a[i, j] - b[i, j]
            s += d if d >= 0 else -d
    return s
