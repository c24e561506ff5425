"""Deterministic synthetic screen content: text pages, flat UI mock-ups and
mixed pages with a camera-like picture region."""

from __future__ import annotations

import numpy as np

from .bitio import CHROMA_420, CHROMA_444, COLOR_RGB, COLOR_YCBCR
from .media_io import Frame

KINDS = ("text", "ui", "mixed")


def _font(rng: np.random.Generator, n: int = 64, h: int = 7, w: int = 5) -> np.ndarray:
    """Random bitmap glyphs (n, h, w); each glyph has ink in every row band."""
    g = rng.random((n, h, w)) < 0.42
    g[:, :, 0] |= rng.random((n, h)) < 0.3
    g[np.arange(n), rng.integers(0, h, n), :] = True
    return g


def _scale(glyphs: np.ndarray, k: int) -> np.ndarray:
    return glyphs.repeat(k, axis=1).repeat(k, axis=2)


def _draw_text(img: np.ndarray, rng, x0: int, y0: int, x1: int, y1: int, font: np.ndarray,
               ink, scale: int = 1, gap: int = 1, line_gap: int = 4) -> None:
    glyphs = _scale(font, scale)
    gh, gw = glyphs.shape[1:]
    y = y0
    while y + gh <= y1:
        x = x0 + int(rng.integers(0, 3)) * (gw + gap)
        line_end = x1 - int(rng.integers(0, (x1 - x0) // 3 + 1))
        while x + gw <= line_end:
            word = int(rng.integers(2, 9))
            for _ in range(word):
                if x + gw > line_end:
                    break
                g = glyphs[int(rng.integers(len(glyphs)))]
                img[y:y + gh, x:x + gw][g] = ink
                x += gw + gap
            x += gw + gap  # space
        y += gh + line_gap


def _palette(rng, n: int) -> np.ndarray:
    return rng.integers(0, 256, (n, 3)).astype(np.uint8)


CELL_W, CELL_H = 8, 12  # monospace character cell (glyph 6x9 plus spacing)


def _vocabulary(rng, n_glyphs: int, size: int = 96) -> tuple[list[np.ndarray], np.ndarray]:
    """Words as glyph-index arrays with Zipf-like usage weights."""
    words = [rng.integers(0, n_glyphs, int(rng.integers(1, 10))) for _ in range(size)]
    weights = 1.0 / np.arange(1, size + 1)
    return words, weights / weights.sum()


def _draw_grid_text(img: np.ndarray, rng, col0: int, row0: int, cols: int, rows: int,
                    glyphs: np.ndarray, vocab, ink, scale: int = 1) -> None:
    """Flow vocabulary words onto a character grid anchored at cell (col0, row0)."""
    words, weights = vocab
    cw, ch = CELL_W * scale, CELL_H * scale
    gh, gw = glyphs.shape[1:]
    oy, ox = scale, scale
    for r in range(rows):
        c = 0
        limit = cols - int(rng.integers(0, max(1, cols // 3)))
        while True:
            word = words[int(rng.choice(len(words), p=weights))]
            if c + len(word) > limit:
                break
            for gi in word:
                y, x = (row0 + r) * ch + oy, (col0 + c) * cw + ox
                if y + gh <= img.shape[0] and x + gw <= img.shape[1]:
                    img[y:y + gh, x:x + gw][glyphs[gi]] = ink
                c += 1
            c += 1


def render_text(rng, width: int, height: int) -> np.ndarray:
    bg = np.array([rng.integers(225, 256)] * 3, np.uint8)
    img = np.empty((height, width, 3), np.uint8)
    img[:] = bg
    font = _font(rng, 64, 9, 6)
    vocab = _vocabulary(rng, len(font))
    cols, rows = width // CELL_W, height // CELL_H
    bar = int(rng.integers(2, 4))
    img[:bar * CELL_H] = _palette(rng, 1)[0]
    _draw_grid_text(img, rng, 1, bar // 2, cols - 2, 1, font, vocab, np.array([250, 250, 250], np.uint8))
    ink = np.array([rng.integers(0, 60)] * 3, np.uint8)
    row = bar + 1
    while row < rows - 2:
        scale = 2 if rng.random() < 0.15 else 1
        para = int(rng.integers(2, 10)) if scale == 1 else 1
        para = min(para, (rows - 1 - row) // scale)
        if para <= 0:
            break
        color = ink if rng.random() < 0.8 else _palette(rng, 1)[0]
        indent = int(rng.integers(1, 4))
        _draw_grid_text(img, rng, indent // scale + (scale == 1), row // scale, (cols - indent - 1) // scale,
                        para, _scale(font, scale), vocab, color, scale)
        row += para * scale + int(rng.integers(1, 3))
    return img


def _button(rng, w: int, h: int, colors: np.ndarray, font) -> np.ndarray:
    tile = np.empty((h, w, 3), np.uint8)
    tile[:] = colors[0]
    tile[0, :] = tile[-1, :] = tile[:, 0] = tile[:, -1] = colors[1]
    _draw_text(tile, rng, 4, max(1, (h - 7) // 2), w - 4, h - 1, font[:8], colors[2], 1, 1, 2)
    return tile


def _icon(rng, size: int, colors: np.ndarray) -> np.ndarray:
    """Flat pictogram: a filled disc or frame with an inner bar, in palette colours."""
    yy, xx = np.mgrid[0:size, 0:size] - (size - 1) / 2
    fg, bg, accent = colors
    tile = np.empty((size, size, 3), np.uint8)
    tile[:] = bg
    if rng.random() < 0.5:
        tile[yy ** 2 + xx ** 2 <= (size / 2 - 1) ** 2] = fg
    else:
        tile[1:-1, 1:-1] = fg
        tile[2:-2, 2:-2] = bg
    tile[size // 2 - 1:size // 2 + 1, 3:-3] = accent
    return tile


def render_ui(rng, width: int, height: int) -> np.ndarray:
    ncol = int(rng.integers(2, 9))
    colors = _palette(rng, ncol)

    def pick(k=1):
        return colors[rng.integers(0, ncol, k)]

    img = np.empty((height, width, 3), np.uint8)
    img[:] = colors[0]
    font = _font(rng, 24, 9, 6)
    vocab = _vocabulary(rng, len(font), 24)
    cols, rows = width // CELL_W, height // CELL_H
    # menu bar
    bar = int(rng.integers(ncol))
    img[:2 * CELL_H] = colors[bar]
    _draw_grid_text(img, rng, 1, 0, cols - 2, 1, font, vocab, colors[(bar + 1) % ncol])
    # panels, some holding lists of labels
    for _ in range(int(rng.integers(3, 7))):
        c0, r0 = int(rng.integers(0, cols - 8)), int(rng.integers(2, rows - 4))
        cw, rh = int(rng.integers(8, cols - c0 + 1)), int(rng.integers(4, rows - r0 + 1))
        x, y, w, h = c0 * CELL_W, r0 * CELL_H, cw * CELL_W, rh * CELL_H
        img[y:y + h, x:x + w] = pick()[0]
        img[y:y + h, x] = img[y:y + h, x + w - 1] = pick()[0]
        if rng.random() < 0.6:
            _draw_grid_text(img, rng, c0 + 1, r0, cw - 2, rh, font, vocab, pick()[0])
    # table with ruled cells
    if rng.random() < 0.7:
        tc, tr = int(rng.integers(3, 6)), int(rng.integers(4, 12))
        cell_cols = int(rng.integers(6, 12))
        c0 = int(rng.integers(0, max(1, cols - tc * cell_cols)))
        r0 = int(rng.integers(2, max(3, rows - tr)))
        rule, ink = pick(2)
        for i in range(tr):
            for j in range(tc):
                _draw_grid_text(img, rng, c0 + j * cell_cols + 1, r0 + i, cell_cols - 2, 1, font, vocab, ink)
        x0, y0 = c0 * CELL_W, r0 * CELL_H
        x1 = min(width, x0 + tc * cell_cols * CELL_W)
        y1 = min(height, y0 + tr * CELL_H)
        img[y0:y1:CELL_H, x0:x1] = rule
        img[y0:y1, x0:x1:cell_cols * CELL_W] = rule
    # rows of repeated buttons / icons
    tiles = [_button(rng, int(rng.integers(3, 8)) * 8, int(rng.integers(2, 4)) * 8, pick(3), font)
             for _ in range(3)]
    tiles += [_icon(rng, int(rng.choice([12, 16])), pick(3)) for _ in range(2)]
    for _ in range(int(rng.integers(4, 9))):
        t = tiles[int(rng.integers(len(tiles)))]
        th, tw = t.shape[:2]
        y = int(rng.integers(0, height - th))
        x = int(rng.integers(0, max(1, width // 3)))
        step = tw + int(rng.integers(2, 12))
        for k in range(int(rng.integers(2, 8))):
            xx = x + k * step
            if xx + tw > width:
                break
            img[y:y + th, xx:xx + tw] = t
    return img


def render_picture(rng, width: int, height: int) -> np.ndarray:
    """Smooth camera-like content: low-pass noise plus gradients."""
    coarse = rng.random((height // 16 + 2, width // 16 + 2, 3))
    ys = np.linspace(0, coarse.shape[0] - 1.001, height)
    xs = np.linspace(0, coarse.shape[1] - 1.001, width)
    y0, x0 = ys.astype(int), xs.astype(int)
    fy, fx = (ys - y0)[:, None, None], (xs - x0)[None, :, None]
    c = coarse
    img = ((1 - fy) * (1 - fx) * c[y0][:, x0] + (1 - fy) * fx * c[y0][:, x0 + 1]
           + fy * (1 - fx) * c[y0 + 1][:, x0] + fy * fx * c[y0 + 1][:, x0 + 1])
    img = img * 200 + 20 + rng.normal(0, 3, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def render_mixed(rng, width: int, height: int) -> np.ndarray:
    img = render_text(rng, width, height)
    ui = render_ui(rng, width, height)
    pw, ph = (width // 2) & ~7, (height // 2) & ~7
    px, py = int(rng.integers(0, width - pw + 1)) & ~7, int(rng.integers(0, height - ph + 1)) & ~7
    img[py:py + ph, px:px + pw] = render_picture(rng, pw, ph)
    band = (height // 4) & ~7
    img[-band:] = ui[-band:]
    return img


_RENDER = {"text": render_text, "ui": render_ui, "mixed": render_mixed}


def render_rgb(kind: str, seed: int, width: int = 512, height: int = 512) -> np.ndarray:
    if kind not in _RENDER:
        raise ValueError(f"unknown corpus kind {kind!r}")
    if width % 8 or height % 8 or width < 128 or height < 128:
        raise ValueError("corpus dimensions must be multiples of 8 and at least 128")
    rng = np.random.default_rng([seed, KINDS.index(kind)])
    return _RENDER[kind](rng, width, height)


def rgb_to_ycbcr420(rgb: np.ndarray) -> Frame:
    """BT.601 studio-range conversion with 2x2-averaged chroma."""
    r, g, b = (rgb[..., i].astype(np.int32) for i in range(3))
    y = ((66 * r + 129 * g + 25 * b + 128) >> 8) + 16
    cb = ((-38 * r - 74 * g + 112 * b + 128) >> 8) + 128
    cr = ((112 * r - 94 * g - 18 * b + 128) >> 8) + 128

    def down(c):
        return (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2] + 2) >> 2

    return Frame.from_arrays([y, down(cb), down(cr)], CHROMA_420, COLOR_YCBCR)


def rgb_frame(rgb: np.ndarray) -> Frame:
    return Frame.from_arrays([rgb[..., i] for i in range(3)], CHROMA_444, COLOR_RGB)


def make_frame(kind: str, seed: int, width: int = 512, height: int = 512, rgb: bool = False) -> Frame:
    img = render_rgb(kind, seed, width, height)
    return rgb_frame(img) if rgb else rgb_to_ycbcr420(img)
