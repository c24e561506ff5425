"""In-loop deblocking with screen-content boundary-strength rules.

Sharp edges (|p0 - q0| above ``t_edge``) are never filtered, and edges next to
non-flat texture get a weaker filter. Edges lie on the 8x8 sample grid of each
plane wherever a CU or TU boundary falls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

T_EDGE = 64
T_FLAT = 32
MAX_DELTA = 2
GRID = 8

# every CU mode of this codec is an intra-picture mode
INTRA_CLASS_MODES = frozenset(range(7))


@dataclass(frozen=True)
class EdgeContext:
    p: tuple[int, int, int, int]  # p0..p3, p0 nearest the edge
    q: tuple[int, int, int, int]
    mode_p: int = 0
    mode_q: int = 0
    qp: int = 27

    def __post_init__(self) -> None:
        if not all(0 <= v <= 255 for v in self.p + self.q):
            raise ValueError("sample out of range")


def bs_lines(p: np.ndarray, q: np.ndarray, base: np.ndarray | int,
             t_edge: int = T_EDGE, t_flat: int = T_FLAT) -> np.ndarray:
    """Boundary strength per line; ``p``/``q`` are (n, >=3) with column 0 at the edge."""
    p = p.astype(np.int32)
    q = q.astype(np.int32)
    bs = np.broadcast_to(np.asarray(base, dtype=np.int32), p.shape[:1]).copy()
    busy = ((np.maximum(np.abs(p[:, 0] - p[:, 1]), np.abs(p[:, 1] - p[:, 2])) > t_flat)
            | (np.maximum(np.abs(q[:, 0] - q[:, 1]), np.abs(q[:, 1] - q[:, 2])) > t_flat))
    bs = np.maximum(bs - busy, 0)
    bs[np.abs(p[:, 0] - q[:, 0]) > t_edge] = 0
    return bs


def bs_decide(ctx: EdgeContext, t_edge: int = T_EDGE, t_flat: int = T_FLAT) -> int:
    intra = ctx.mode_p in INTRA_CLASS_MODES or ctx.mode_q in INTRA_CLASS_MODES
    return int(bs_lines(np.array([ctx.p]), np.array([ctx.q]), 2 if intra else 1, t_edge, t_flat)[0])


def filter_lines(p: np.ndarray, q: np.ndarray, bs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Filtered (p0, p1) and (q0, q1) columns; lines with BS 0 come back unchanged."""
    p = p.astype(np.int32)
    q = q.astype(np.int32)
    p0, p1, p2 = p[:, 0], p[:, 1], p[:, 2]
    q0, q1, q2 = q[:, 0], q[:, 1], q[:, 2]

    def clip(new, old):
        return np.clip(new, old - MAX_DELTA, old + MAX_DELTA)

    on = bs >= 1
    strong = bs >= 2
    np0 = np.where(on, clip((p1 + 2 * p0 + q0 + 2) >> 2, p0), p0)
    nq0 = np.where(on, clip((q1 + 2 * q0 + p0 + 2) >> 2, q0), q0)
    np1 = np.where(strong, clip((p2 + 2 * p1 + p0 + 2) >> 2, p1), p1)
    nq1 = np.where(strong, clip((q2 + 2 * q1 + q0 + 2) >> 2, q1), q1)
    return np.stack([np0, np1], 1), np.stack([nq0, nq1], 1)


def filter_edge(ctx: EdgeContext, bs: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Scalar form: returns the updated (p0..p3) and (q0..q3)."""
    if bs <= 0:
        return ctx.p, ctx.q
    fp, fq = filter_lines(np.array([ctx.p]), np.array([ctx.q]), np.array([bs]))
    return (int(fp[0, 0]), int(fp[0, 1])) + ctx.p[2:], (int(fq[0, 0]), int(fq[0, 1])) + ctx.q[2:]


def _pass(plane: np.ndarray, edges: np.ndarray, base: np.ndarray, t_edge: int, t_flat: int) -> np.ndarray:
    """Filter the vertical edges marked in ``edges`` (row, col of the q0 sample)."""
    ys, xs = np.nonzero(edges)
    if ys.size == 0:
        return plane
    w = plane.shape[1]
    out = plane.copy()
    k = np.arange(3)
    pcols = xs[:, None] - 1 - k
    qcols = np.minimum(xs[:, None] + k, w - 1)
    p = plane[ys[:, None], pcols]
    q = plane[ys[:, None], qcols]
    bs = bs_lines(p, q, base[ys, xs], t_edge, t_flat)
    fp, fq = filter_lines(p, q, bs)
    out[ys[:, None], pcols[:, :2]] = fp
    out[ys[:, None], qcols[:, :2]] = fq
    return out


def edge_maps(shape: tuple[int, int], blocks, sub: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Vertical/horizontal edge masks of a plane from luma-coordinate blocks.

    ``blocks`` yields (x, y, w, h) rectangles (CUs and TUs); an edge is marked
    where a rectangle's left/top boundary lands on the 8-sample grid.
    """
    h, w = shape
    ver = np.zeros(shape, dtype=bool)
    hor = np.zeros(shape, dtype=bool)
    for bx, by, bw, bh in blocks:
        x0, y0 = bx // sub, by // sub
        x1, y1 = min(x0 + max(bw // sub, 1), w), min(y0 + max(bh // sub, 1), h)
        if x0 > 0 and x0 % GRID == 0:
            ver[y0:y1, x0] = True
        if y0 > 0 and y0 % GRID == 0:
            hor[y0, x0:x1] = True
    return ver, hor


def deblock_plane(plane: np.ndarray, ver: np.ndarray, hor: np.ndarray, base: np.ndarray | int = 2,
                  t_edge: int = T_EDGE, t_flat: int = T_FLAT) -> np.ndarray:
    """Vertical edges first, then horizontal edges on the result."""
    base = np.broadcast_to(np.asarray(base, dtype=np.int32), plane.shape)
    out = _pass(plane, ver, base, t_edge, t_flat)
    out = _pass(out.T, hor.T, base.T, t_edge, t_flat).T
    return np.ascontiguousarray(out)


def deblock_frame(planes: list[np.ndarray], rects_per_plane, t_edge: int = T_EDGE,
                  t_flat: int = T_FLAT) -> list[np.ndarray]:
    """Deblock every plane; ``rects_per_plane`` holds CU/TU rectangles in plane coordinates."""
    out = []
    for plane, rects in zip(planes, rects_per_plane):
        ver, hor = edge_maps(plane.shape, rects)
        out.append(deblock_plane(plane, ver, hor, 2, t_edge, t_flat))
    return out
