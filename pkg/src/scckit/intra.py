"""Baseline intra prediction: DC, planar, horizontal and vertical."""

from __future__ import annotations

import numpy as np

DC, PLANAR, HOR, VER = "DC", "PLANAR", "H", "V"
MID = 128


def reference_samples(plane: np.ndarray, x: int, y: int, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Top row (length w) and left column (length h) of reconstructed neighbours.

    A missing side is copied from the other one; with neither, mid-grey.
    """
    top = plane[y - 1, x:x + w].astype(np.int32) if y > 0 else None
    left = plane[y:y + h, x - 1].astype(np.int32) if x > 0 else None
    if top is None and left is None:
        return np.full(w, MID, np.int32), np.full(h, MID, np.int32)
    if top is None:
        top = np.full(w, left[0], np.int32)
    if left is None:
        left = np.full(h, top[0], np.int32)
    return top, left


def predict(kind: str, top: np.ndarray, left: np.ndarray) -> np.ndarray:
    w, h = len(top), len(left)
    if kind == DC:
        n = w + h
        return np.full((h, w), (int(top.sum()) + int(left.sum()) + n // 2) // n, np.int32)
    if kind == HOR:
        return np.repeat(left[:, None], w, axis=1)
    if kind == VER:
        return np.repeat(top[None, :], h, axis=0)
    if kind == PLANAR:
        xs = np.arange(w)[None, :]
        ys = np.arange(h)[:, None]
        hor = (w - 1 - xs) * left[:, None] + (xs + 1) * int(top[-1])
        ver = (h - 1 - ys) * top[None, :] + (ys + 1) * int(left[-1])
        # square blocks: both terms share the normalisation
        return (hor * h + ver * w + w * h) // (2 * w * h)
    raise ValueError(f"unknown intra mode {kind!r}")


def intra_predict(kind: str, plane: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    top, left = reference_samples(plane, x, y, w, h)
    return predict(kind, top, left)
