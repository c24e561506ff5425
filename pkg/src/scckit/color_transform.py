"""RGB <-> YCoCg adaptive color transform.

All functions accept Python ints or integer numpy arrays; ``>>`` is the
arithmetic (floor) shift in both cases.
"""

from __future__ import annotations

import numpy as np


def act_lossless_forward(r, g, b):
    """Reversible lifting RGB -> (Y, Co, Cg)."""
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return y, co, cg


def act_lossless_inverse(y, co, cg):
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    return r, g, b


def act_lossy_forward(r, g, b):
    """Integer YCoCg matrix: rows (1,2,1)/4, (2,0,-2)/4, (-1,2,-1)/4."""
    y = (r + 2 * g + b + 2) >> 2
    co = (r - b) >> 1
    cg = (-r + 2 * g - b + 2) >> 2
    return y, co, cg


def act_lossy_inverse(y, co, cg, clip: bool = True):
    r = y + co - cg
    g = y + cg
    b = y - co - cg
    if clip:
        if isinstance(r, np.ndarray):
            return np.clip(r, 0, 255), np.clip(g, 0, 255), np.clip(b, 0, 255)
        return min(max(r, 0), 255), min(max(g, 0), 255), min(max(b, 0), 255)
    return r, g, b


def forward_planes(planes, lossless: bool):
    """Apply the forward transform to three co-sited integer arrays (R, G, B order)."""
    fn = act_lossless_forward if lossless else act_lossy_forward
    return list(fn(*(np.asarray(p, dtype=np.int32) for p in planes)))


def inverse_planes(planes, lossless: bool):
    """Inverse of :func:`forward_planes` for residual-domain data (no clipping)."""
    if lossless:
        return list(act_lossless_inverse(*planes))
    return list(act_lossy_inverse(*planes, clip=False))
