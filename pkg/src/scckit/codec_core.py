"""CU syntax, reconstruction and the frame-level encoder/decoder.

The encoder and decoder share :func:`write_cu`/:func:`read_cu` for syntax and
:func:`reconstruct_cu`/:func:`commit_cu` for the reconstruction loop, so the
encoder's reconstruction is by construction what a decoder produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import intra
from .bitio import (CHROMA_400, CHROMA_420, BitCounter, BitReader, BitstreamError,
                    BitstreamHeader, ToolFlags)
from .color_transform import inverse_planes
from .deblock import T_EDGE, T_FLAT, deblock_frame
from .ibc import (CTU, REGION, HistoryVectorTable, ReferenceSampleMemory, cbvp_classify,
                  ibc_predict)
from .palette import (MAX_PALETTE, PaletteState, escape_positions, index_map_decode,
                      index_map_encode, predictor_update, read_reuse_flags, write_reuse_flags)
from .residual import (CodingMode, QuantParams, avs3_tsm_infer, bdpcm_inverse, dequantize,
                       transform_inverse, tsr_bits, tsr_decode, tsr_encode)
from .string_copy import StringRun, isc_reconstruct, read_strings, write_strings

MAX_TU = 32
MAX_CU = 64
MIN_CU = 4


class Mode(IntEnum):
    INTRA_DC = 0
    INTRA_PLANAR = 1
    INTRA_H = 2
    INTRA_V = 3
    IBC = 4
    PLT = 5
    ISC = 6

    @property
    def is_intra(self) -> bool:
        return self <= Mode.INTRA_V

    @property
    def has_residual(self) -> bool:
        return self <= Mode.IBC


INTRA_KIND = {Mode.INTRA_DC: intra.DC, Mode.INTRA_PLANAR: intra.PLANAR,
              Mode.INTRA_H: intra.HOR, Mode.INTRA_V: intra.VER}
# code order of the mode index (cheapest codes first); disabled modes drop out
_MODE_CODE_ORDER = (Mode.INTRA_DC, Mode.IBC, Mode.PLT, Mode.INTRA_H, Mode.INTRA_V, Mode.ISC,
                    Mode.INTRA_PLANAR)
_MODE_TOOL = {Mode.IBC: ToolFlags.IBC, Mode.PLT: ToolFlags.PLT, Mode.ISC: ToolFlags.ISC}


def mode_table(tools: ToolFlags) -> tuple[Mode, ...]:
    return tuple(m for m in _MODE_CODE_ORDER if m not in _MODE_TOOL or _MODE_TOOL[m] in tools)


@dataclass
class TuResidual:
    coding_mode: CodingMode
    levels: np.ndarray
    _bits: int = field(default=-1, repr=False, compare=False)

    @property
    def level_bits(self) -> int:
        """Length of the level syntax (computed once)."""
        if self._bits < 0:
            self._bits = tsr_bits(self.levels)
        return self._bits


@dataclass
class PaletteData:
    reuse_flags: list[bool]
    new_entries: list[tuple]
    palette: list[tuple]
    indices: np.ndarray  # (size, size); escape index == len(palette)
    escapes: np.ndarray  # (n_escapes, components) coded values, scan order

    @property
    def has_escape(self) -> bool:
        return len(self.escapes) > 0


@dataclass
class CodingUnit:
    x: int
    y: int
    size: int
    mode: Mode
    act: bool = False
    residual: list[list[TuResidual | None]] | None = None  # per plane, TUs in raster order
    bv: tuple[int, int] | None = None
    palette: PaletteData | None = None
    strings: list[StringRun] | None = None


@dataclass(frozen=True, order=True)
class RdCost:
    """Total order: cost, then rate, then mode (earlier enum first)."""

    cost: float
    rate: int
    mode: int
    distortion: int = field(compare=False)

    @classmethod
    def of(cls, distortion: int, rate: int, lam: float, mode: int) -> "RdCost":
        return cls(distortion + lam * rate, rate, mode, distortion)


def rd_lambda(qp: int) -> float:
    return 0.57 * 2.0 ** ((qp - 12) / 3.0)


# ---------------------------------------------------------------- shared state

class CodingState:
    """Everything the decoding process carries from one CU to the next."""

    def __init__(self, header: BitstreamHeader) -> None:
        if header.ctu_size != CTU:
            raise BitstreamError(f"CTU size {header.ctu_size} not supported")
        if header.width % 4 or header.height % 4:
            raise BitstreamError("picture dimensions must be multiples of 4")
        self.header = header
        self.tools = header.tool_flags
        self.lossless = header.lossless
        self.qp = QuantParams(header.qp, self.lossless)
        self.width, self.height = header.width, header.height
        self.chroma_format = header.chroma_format
        self.nplanes = 1 if header.chroma_format == CHROMA_400 else 3
        self.sub = 2 if header.chroma_format == CHROMA_420 else 1
        self.recon = [np.zeros((self.height, self.width), np.uint8)]
        for _ in range(self.nplanes - 1):
            self.recon.append(np.zeros((self.height // self.sub, self.width // self.sub), np.uint8))
        self.rsm = ReferenceSampleMemory(self.width, self.height, self.chroma_format)
        self.history = HistoryVectorTable()
        self.palette = PaletteState()
        self.cus: list[CodingUnit] = []
        self.table = mode_table(self.tools)
        self.palette_components = 3 if self.nplanes == 3 and self.sub == 1 else 1
        self.act_enabled = ToolFlags.ACT in self.tools

    def plane_size(self, plane: int, size: int) -> int:
        return size // self.sub if plane else size

    def plane_xy(self, plane: int, x: int, y: int) -> tuple[int, int]:
        return (x // self.sub, y // self.sub) if plane else (x, y)

    def begin_ctu(self, cx: int, cy: int) -> None:
        if cx == 0:
            self.history = HistoryVectorTable()
            self.palette = PaletteState()
        self.rsm.begin_ctu(cx, cy)

    def inside(self, x: int, y: int, s: int) -> bool:
        return x + s <= self.width and y + s <= self.height

    def intersects(self, x: int, y: int) -> bool:
        return x < self.width and y < self.height


def tu_offsets(n: int) -> list[tuple[int, int, int]]:
    ts = min(n, MAX_TU)
    return [(ox, oy, ts) for oy in range(0, n, ts) for ox in range(0, n, ts)]


@dataclass(frozen=True)
class TuContext:
    allow_bdpcm: bool
    bdpcm_mode: CodingMode | None
    ts_flag: bool  # explicit transform-skip flag present
    forced_tsm: bool
    parity: bool


def tu_context(state: CodingState, mode: Mode, forced: bool = False) -> TuContext:
    tools = state.tools
    allow = (ToolFlags.BDPCM in tools and mode in (Mode.INTRA_H, Mode.INTRA_V) and not forced)
    bmode = None
    if allow:
        bmode = CodingMode.TSM_BDPCM_H if mode == Mode.INTRA_H else CodingMode.TSM_BDPCM_V
    forced_tsm = forced or state.lossless
    tsm_tool = ToolFlags.TSM in tools
    parity = ToolFlags.PARITY in tools and tsm_tool and not forced_tsm
    return TuContext(allow, bmode, tsm_tool and not forced_tsm and not parity, forced_tsm, parity)


# ---------------------------------------------------------------- syntax

def write_tu(wr, tu: TuResidual | None, ctx: TuContext) -> None:
    if tu is None:
        wr.write_flag(0)
        return
    wr.write_flag(1)
    bd = tu.coding_mode.bdpcm_dir is not None
    if ctx.allow_bdpcm:
        wr.write_flag(bd)
    if not bd and ctx.ts_flag:
        wr.write_flag(tu.coding_mode == CodingMode.TSM)
    if isinstance(wr, BitCounter):
        wr.add(tu.level_bits)
    else:
        tsr_encode(tu.levels, wr)


def read_tu(rd: BitReader, n: int, ctx: TuContext) -> TuResidual | None:
    if not rd.read_flag():
        return None
    bd = bool(rd.read_flag()) if ctx.allow_bdpcm else False
    ts = None
    if not bd and ctx.ts_flag:
        ts = bool(rd.read_flag())
    levels = tsr_decode(rd, n, n)
    if not levels.any():
        raise BitstreamError("coded block flag set on an all-zero block")
    if bd:
        cm = ctx.bdpcm_mode
    elif ctx.forced_tsm:
        cm = CodingMode.TSM
    elif ts is not None:
        cm = CodingMode.TSM if ts else CodingMode.TRANSFORM
    elif ctx.parity:
        cm = CodingMode.TSM if avs3_tsm_infer(levels) else CodingMode.TRANSFORM
    else:
        cm = CodingMode.TRANSFORM
    return TuResidual(cm, levels)


def _residual_planes(state: CodingState, cu: CodingUnit) -> tuple[int, ...]:
    if cu.mode.has_residual:
        return tuple(range(state.nplanes))
    if cu.mode == Mode.PLT and state.palette_components == 1:
        return tuple(range(1, state.nplanes))
    return ()


def write_cu(wr, state: CodingState, cu: CodingUnit) -> None:
    """CU syntax: mode code, mode payload, residual payload. Does not touch ``state``."""
    wr.write_ue(state.table.index(cu.mode))
    x, y, s = cu.x, cu.y, cu.size
    if cu.mode == Mode.IBC:
        classes = cbvp_classify(state.history, x, y, s, s)
        if cu.bv in classes:
            wr.write_flag(1)
            wr.write_bits(classes.index(cu.bv), 3)
        else:
            wr.write_flag(0)
            wr.write_se(cu.bv[0])
            wr.write_se(cu.bv[1])
    elif cu.mode == Mode.PLT:
        write_palette(wr, state, cu.palette)
    elif cu.mode == Mode.ISC:
        write_strings(cu.strings, state.history.copy(), wr, x, y, s, s)
    if cu.mode.has_residual and state.act_enabled:
        wr.write_flag(cu.act)
    planes = _residual_planes(state, cu)
    if planes:
        ctx = tu_context(state, cu.mode, forced=cu.mode == Mode.PLT)
        for p in planes:
            for tu in cu.residual[p]:
                write_tu(wr, tu, ctx)


def write_palette(wr, state: CodingState, pd: PaletteData) -> None:
    write_reuse_flags(pd.reuse_flags, wr)
    wr.write_ue(len(pd.new_entries))
    for c in pd.new_entries:
        for v in c:
            wr.write_bits(int(v), 8)
    wr.write_flag(pd.has_escape)
    index_map_encode(pd.indices, len(pd.palette), pd.has_escape, wr)
    if isinstance(wr, BitCounter) and not state.lossless:
        lv = pd.escapes.reshape(-1).astype(np.int64)
        wr.add(int((2 * np.floor(np.log2(lv + 1)) + 1).sum()))
        return
    for row in pd.escapes:
        for v in row:
            if state.lossless:
                wr.write_bits(int(v), 8)
            else:
                wr.write_ue(int(v))


def read_cu(rd: BitReader, state: CodingState, x: int, y: int, s: int) -> CodingUnit:
    code = rd.read_ue()
    if code >= len(state.table):
        raise BitstreamError(f"mode code {code} outside the enabled-mode table")
    mode = state.table[code]
    cu = CodingUnit(x, y, s, mode)
    if mode == Mode.IBC:
        if rd.read_flag():
            idx = rd.read_bits(3)
            classes = cbvp_classify(state.history, x, y, s, s)
            if idx >= len(classes) or classes[idx] is None:
                raise BitstreamError(f"block vector class {idx} is empty")
            cu.bv = classes[idx]
        else:
            cu.bv = (rd.read_se(), rd.read_se())
    elif mode == Mode.PLT:
        cu.palette = _read_palette(rd, state, s)
    elif mode == Mode.ISC:
        cu.strings = read_strings(rd, state.history.copy(), x, y, s, s)
    if mode.has_residual and state.act_enabled:
        cu.act = bool(rd.read_flag())
    planes = _residual_planes(state, cu)
    if planes:
        ctx = tu_context(state, mode, forced=mode == Mode.PLT)
        cu.residual = [[] for _ in range(state.nplanes)]
        for p in planes:
            for _, _, ts in tu_offsets(state.plane_size(p, s)):
                cu.residual[p].append(read_tu(rd, ts, ctx))
    return cu


def _read_palette(rd: BitReader, state: CodingState, s: int) -> PaletteData:
    pred = state.palette.predictor
    reuse = read_reuse_flags(rd, len(pred))
    n_new = rd.read_ue()
    if sum(reuse) + n_new > MAX_PALETTE:
        raise BitstreamError("palette larger than 31 entries")
    nc = state.palette_components
    new = [tuple(rd.read_bits(8) for _ in range(nc)) for _ in range(n_new)]
    palette = [c for c, r in zip(pred, reuse) if r] + new
    has_escape = bool(rd.read_flag())
    if not palette and not has_escape:
        raise BitstreamError("empty palette without escapes")
    indices = index_map_decode(rd, s, s, len(palette), has_escape)
    n_esc = len(escape_positions(indices, len(palette)))
    if has_escape and n_esc == 0:
        raise BitstreamError("escape flag set but no escape index used")
    if state.lossless:
        esc = [[rd.read_bits(8) for _ in range(nc)] for _ in range(n_esc)]
    else:
        esc = [[rd.read_ue() for _ in range(nc)] for _ in range(n_esc)]
    esc_arr = np.array(esc, dtype=np.int64).reshape(n_esc, nc)
    if not state.lossless and esc_arr.size and esc_arr.max() > 255:
        raise BitstreamError("escape level out of range")
    return PaletteData(reuse, new, palette, indices, esc_arr)


# ---------------------------------------------------------------- reconstruction

def tu_residual_samples(state: CodingState, tu: TuResidual | None, n: int) -> np.ndarray:
    if tu is None:
        return np.zeros((n, n), np.int64)
    cm, lv = tu.coding_mode, tu.levels
    if state.lossless:
        return lv if cm == CodingMode.TSM else bdpcm_inverse(lv, cm.bdpcm_dir)
    if cm == CodingMode.TRANSFORM:
        return transform_inverse(dequantize(lv, state.qp, 2))
    if cm == CodingMode.TSM:
        return dequantize(lv, state.qp)
    return dequantize(bdpcm_inverse(lv, cm.bdpcm_dir), state.qp)


def plane_residual(state: CodingState, tus: list[TuResidual | None], n: int) -> np.ndarray:
    out = np.empty((n, n), np.int64)
    for (ox, oy, ts), tu in zip(tu_offsets(n), tus):
        out[oy:oy + ts, ox:ox + ts] = tu_residual_samples(state, tu, ts)
    return out


def dequantize_escape(level, qp: QuantParams):
    return np.minimum(dequantize(level, qp), 255)


def palette_samples(state: CodingState, pd: PaletteData) -> list[np.ndarray]:
    nc = state.palette_components
    table = np.array(pd.palette, dtype=np.int64).reshape(-1, nc)
    ext = np.zeros((len(table) + 1, nc), np.int64)
    ext[:len(table)] = table
    flat = ext[pd.indices.reshape(-1)]
    if pd.has_escape:
        pos = escape_positions(pd.indices, len(pd.palette))
        vals = pd.escapes if state.lossless else dequantize_escape(pd.escapes, state.qp)
        flat[pos] = vals
    s = pd.indices.shape[0]
    return [flat[:, c].reshape(s, s) for c in range(nc)]


def predict_cu(state: CodingState, cu: CodingUnit) -> list[np.ndarray | None]:
    """Prediction per plane for residual-carrying planes (None elsewhere)."""
    x, y, s = cu.x, cu.y, cu.size
    if cu.mode.is_intra:
        kind = INTRA_KIND[cu.mode]
        out = []
        for p in range(state.nplanes):
            px, py = state.plane_xy(p, x, y)
            n = state.plane_size(p, s)
            out.append(intra.intra_predict(kind, state.recon[p], px, py, n, n))
        return out
    if cu.mode == Mode.IBC:
        return [a.astype(np.int64) for a in ibc_predict(cu.bv, x, y, s, s, state.rsm)]
    if cu.mode == Mode.PLT and state.palette_components == 1:
        out = [None]
        for p in range(1, state.nplanes):
            px, py = state.plane_xy(p, x, y)
            n = state.plane_size(p, s)
            out.append(intra.intra_predict(intra.DC, state.recon[p], px, py, n, n))
        return out
    return [None] * state.nplanes


def reconstruct_cu(state: CodingState, cu: CodingUnit,
                   pred: list[np.ndarray | None] | None = None,
                   res: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Reconstructed (pre-deblocking) samples of every plane of ``cu``.

    ``res`` optionally supplies the decoded residual planes (before any
    inverse colour transform) when the caller already has them.
    """
    x, y, s = cu.x, cu.y, cu.size
    if cu.mode == Mode.ISC:
        return [a.copy() for a in isc_reconstruct(cu.strings, x, y, s, s, state.rsm)]
    if pred is None:
        pred = predict_cu(state, cu)
    out: list[np.ndarray | None] = [None] * state.nplanes
    if cu.mode == Mode.PLT:
        for c, a in enumerate(palette_samples(state, cu.palette)):
            out[c] = a.astype(np.uint8)
    planes = _residual_planes(state, cu)
    if planes:
        if res is None:
            res = [plane_residual(state, cu.residual[p], state.plane_size(p, s)) for p in planes]
        if cu.act:
            res = inverse_planes(res, state.lossless)
        for p, r in zip(planes, res):
            out[p] = np.clip(pred[p] + r, 0, 255).astype(np.uint8)
    return out


def commit_cu(state: CodingState, cu: CodingUnit, recon: list[np.ndarray]) -> None:
    """Write the reconstruction to the picture and RSM and advance predictor state."""
    x, y, s = cu.x, cu.y, cu.size
    for p, a in enumerate(recon):
        px, py = state.plane_xy(p, x, y)
        n = state.plane_size(p, s)
        state.recon[p][py:py + n, px:px + n] = a
    state.rsm.write(x, y, s, s, recon)
    advance_predictors(state, cu)
    state.cus.append(cu)


def advance_predictors(state: CodingState, cu: CodingUnit) -> None:
    """History-table and palette-predictor updates that follow a coded CU."""
    x, y, s = cu.x, cu.y, cu.size
    if cu.mode == Mode.IBC:
        state.history.update(cu.bv, (x, y), s * s)
    elif cu.mode == Mode.ISC:
        for r in cu.strings:
            state.history.update(r.sv, (x + r.start % s, y + r.start // s), r.length)
    elif cu.mode == Mode.PLT:
        pd = cu.palette
        state.palette.predictor = predictor_update(pd.palette, state.palette.predictor, pd.reuse_flags)


# ---------------------------------------------------------------- frame statistics

@dataclass
class FrameStats:
    bits: int = 0
    mode_area: dict = field(default_factory=lambda: {m.name: 0 for m in Mode})
    mode_count: dict = field(default_factory=lambda: {m.name: 0 for m in Mode})
    act_area: int = 0

    @classmethod
    def from_cus(cls, cus: list[CodingUnit], bits: int) -> "FrameStats":
        st = cls(bits)
        for cu in cus:
            st.mode_area[cu.mode.name] += cu.size * cu.size
            st.mode_count[cu.mode.name] += 1
            if cu.act:
                st.act_area += cu.size * cu.size
        return st

    def mode_percent(self) -> dict:
        total = sum(self.mode_area.values()) or 1
        return {k: 100.0 * v / total for k, v in self.mode_area.items()}


def edge_rects(state: CodingState) -> list[list[tuple[int, int, int, int]]]:
    """CU and TU rectangles per plane, in plane coordinates."""
    out = []
    for p in range(state.nplanes):
        rects = []
        for cu in state.cus:
            px, py = state.plane_xy(p, cu.x, cu.y)
            n = state.plane_size(p, cu.size)
            rects.append((px, py, n, n))
            if n > MAX_TU and cu.residual is not None and cu.residual[p]:
                rects.extend((px + ox, py + oy, ts, ts) for ox, oy, ts in tu_offsets(n))
        out.append(rects)
    return out


def finish_frame(state: CodingState, t_edge: int = T_EDGE, t_flat: int = T_FLAT) -> list[np.ndarray]:
    """Picture after the in-loop filter (a copy of the pre-filter picture when DBK is off)."""
    if ToolFlags.DBK in state.tools:
        return deblock_frame(state.recon, edge_rects(state), t_edge, t_flat)
    return [p.copy() for p in state.recon]


# ---------------------------------------------------------------- decoder

def iter_ctus(width: int, height: int):
    for cy in range(0, height, CTU):
        for cx in range(0, width, CTU):
            yield cx, cy


def decode_payload(payload: bytes, header: BitstreamHeader) -> tuple[list[np.ndarray], FrameStats, CodingState]:
    """Decode one frame payload; returns filtered planes, statistics and final state."""
    state = CodingState(header)
    rd = BitReader(payload)

    def node(x: int, y: int, s: int) -> None:
        if not state.intersects(x, y):
            return
        if s == REGION:
            state.rsm.enter_region(state.rsm.region_of(x, y))
        if s > MAX_CU or not state.inside(x, y, s):
            split = True
        elif s > MIN_CU:
            split = bool(rd.read_flag())
        else:
            split = False
        if split:
            h = s // 2
            for oy in (0, h):
                for ox in (0, h):
                    node(x + ox, y + oy, h)
            return
        try:
            cu = read_cu(rd, state, x, y, s)
            commit_cu(state, cu, reconstruct_cu(state, cu))
        except BitstreamError as exc:
            raise type(exc)(f"CU ({x},{y}) size {s} at bit {rd.bits_read}: {exc}") from None

    for cx, cy in iter_ctus(state.width, state.height):
        state.begin_ctu(cx, cy)
        node(cx, cy, CTU)
    rd.finish()
    return finish_frame(state), FrameStats.from_cus(state.cus, 8 * len(payload)), state


def split_flag_bits(state: CodingState, x: int, y: int, s: int) -> int:
    return int(MIN_CU < s <= MAX_CU and state.inside(x, y, s))


def writer_bits(fn, *args) -> int:
    c = BitCounter()
    fn(c, *args)
    return c.bits_written


def cu_rate(state: CodingState, cu: CodingUnit) -> int:
    return writer_bits(write_cu, state, cu)


def sse(a: np.ndarray, b: np.ndarray) -> int:
    d = a.astype(np.int64) - b
    return int((d * d).sum())

