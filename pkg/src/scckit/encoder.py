"""Rate-distortion optimised encoder: per-CU mode decision and quadtree split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bitio import BitCounter, BitstreamHeader, BitWriter, ToolFlags, ue_bits
from .codec_core import (CTU, MAX_CU, MIN_CU, REGION, CodingState, CodingUnit, FrameStats, Mode,
                         PaletteData, RdCost, TuContext, TuResidual, advance_predictors,
                         commit_cu, cu_rate, finish_frame, iter_ctus, rd_lambda, reconstruct_cu,
                         split_flag_bits, tu_context, tu_offsets, write_cu, write_palette)
from .color_transform import forward_planes, inverse_planes
from .deblock import T_EDGE, T_FLAT
from .ibc import BlockHashTable, bv_valid, cbvp_classify, ibc_predict
from .palette import MAX_PALETTE, escape_positions
from ._kernels import block_sad, clip_sse, intra_all, tu_decide
from .residual import CodingMode, dct_matrix, quantize
from .string_copy import segment_strings

# a split needs its flag plus four CUs of at least two bits each
_SPLIT_RATE_FLOOR = 1 + 4 * 2
# escape-free palette CUs with at most this many colours are not split further
_PLT_STOP_COLORS = 3


@dataclass
class EncoderConfig:
    qp: int = 27
    tools: ToolFlags = ToolFlags(0)
    lossless: bool = False
    min_cu: int = 8  # smallest CU the search tries (picture borders may force 4)
    intra_rd: int = 2  # intra modes kept for full RD after the SAD pre-screen
    ibc_rd: int = 2  # block vectors kept for full RD
    hash_probe: int = 16  # hash hits examined per lookup
    t_edge: int = T_EDGE
    t_flat: int = T_FLAT
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp {self.qp} out of range 0..51")
        if self.min_cu not in (4, 8, 16, 32, 64):
            raise ValueError(f"min_cu must be a power of two in 4..64, got {self.min_cu}")
        if self.workers < 0:
            raise ValueError("workers must be >= 0 (0: one per CPU)")
        self.tools = ToolFlags(self.tools)

    def header_flags(self) -> ToolFlags:
        flags = ToolFlags(self.tools)
        if self.lossless:
            flags = (flags | ToolFlags.LOSSLESS) & ~ToolFlags.DBK
        return flags


@dataclass
class Candidate:
    rd: RdCost
    cu: CodingUnit
    recon: list[np.ndarray] | None  # None: rebuilt from pred/res when committed
    pred: list | None = None
    res: list | None = None


class FrameEncoder:
    def __init__(self, planes: list[np.ndarray], header: BitstreamHeader, cfg: EncoderConfig) -> None:
        self.cfg = cfg
        self.state = CodingState(header)
        self.orig = [np.asarray(p, dtype=np.int64) for p in planes]
        self.lossless = header.lossless
        self.lam = 1.0 if self.lossless else rd_lambda(header.qp)
        self.sqrt_lam = math.sqrt(self.lam)
        tools = header.tool_flags
        self.use_ibc = ToolFlags.IBC in tools
        self.use_plt = ToolFlags.PLT in tools
        self.use_isc = ToolFlags.ISC in tools
        self.use_act = ToolFlags.ACT in tools
        # every non-intra CU spends its mode code plus at least two more bits
        self.rate_floor = {m: ue_bits(i) + 2 for i, m in enumerate(self.state.table) if not m.is_intra}
        self.copy_rate_floor = min(self.rate_floor.values(), default=math.inf)
        self.plt_code = self.state.table.index(Mode.PLT) if Mode.PLT in self.state.table else -1
        self.tol = 0 if self.lossless else max(1, int(self.state.qp.step / 2))
        self.hash = {}
        self.hash_memo: dict[tuple[int, int, int, int], list[tuple[int, int]]] = {}
        if self.use_ibc:
            for b in (8, 16):
                if self.state.width >= b and self.state.height >= b:
                    self.hash[b] = BlockHashTable(planes[0], b)
        if self.use_isc:
            # string matches shorter than a block: 4x4 sub-block hits seed the search
            self.hash[4] = BlockHashTable(planes[0], 4)

    # -- top level ---------------------------------------------------------

    def encode(self) -> tuple[bytes, list[np.ndarray], FrameStats, CodingState]:
        st = self.state
        wr = BitWriter()
        for cx, cy in iter_ctus(st.width, st.height):
            st.begin_ctu(cx, cy)
            self.hash_memo.clear()
            hist0, pal0 = st.history.copy(), st.palette.copy()
            _, tree = self.node(cx, cy, CTU, math.inf)
            hist1, pal1 = st.history, st.palette
            st.history, st.palette = hist0, pal0
            self.write_tree(wr, tree)
            assert st.history == hist1 and st.palette.predictor == pal1.predictor
        payload = wr.getvalue()
        planes = finish_frame(st, self.cfg.t_edge, self.cfg.t_flat)
        return payload, planes, FrameStats.from_cus(st.cus, 8 * len(payload)), st

    def write_tree(self, wr, tree) -> None:
        if tree is None:
            return
        if tree[0] == "split":
            _, flag, children = tree
            if flag:
                wr.write_flag(1)
            for c in children:
                self.write_tree(wr, c)
        else:
            _, flag, cu = tree
            if flag:
                wr.write_flag(0)
            write_cu(wr, self.state, cu)
            advance_predictors(self.state, cu)

    # -- quadtree ----------------------------------------------------------

    def node(self, x: int, y: int, s: int, budget: float):
        """Best coding of the square at (x, y); returns (cost, tree)."""
        st = self.state
        if not st.intersects(x, y):
            return 0.0, None
        if s == REGION:
            st.rsm.enter_region(st.rsm.region_of(x, y))
        flag = split_flag_bits(st, x, y, s)
        if s > MAX_CU or not st.inside(x, y, s):
            return self.split(x, y, s, 0, budget)
        best = self.best_cu(x, y, s)
        leaf_cost = best.rd.cost + self.lam * flag
        if not self.try_split(best, s, x, y):
            self.commit(best)
            return leaf_cost, ("cu", flag, best.cu)
        snap = self.snapshot(x, y, s)
        cost, tree = self.split(x, y, s, flag, min(budget, leaf_cost))
        if cost < leaf_cost:
            return cost, tree
        self.restore(snap)
        self.commit(best)
        return leaf_cost, ("cu", flag, best.cu)

    def split(self, x: int, y: int, s: int, flag: int, budget: float):
        h = s // 2
        total = self.lam * flag
        children = []
        for oy in (0, h):
            for ox in (0, h):
                c, t = self.node(x + ox, y + oy, h, budget - total)
                total += c
                children.append(t)
                if total >= budget:
                    return math.inf, None
        return total, ("split", flag, children)

    def try_split(self, best: Candidate, s: int, x: int, y: int) -> bool:
        if s // 2 < max(self.cfg.min_cu, MIN_CU) or s <= MIN_CU:
            return False
        cu = best.cu
        if best.rd.distortion == 0 and cu.mode != Mode.PLT and not _has_levels(cu):
            return False
        if (cu.mode == Mode.PLT and not cu.palette.has_escape and len(cu.palette.palette) <= _PLT_STOP_COLORS
                and (s <= 16 or not _has_levels(cu))):
            # few-colour content is already cheap as one palette CU
            return False
        if not self.lossless and best.rd.cost < self.lam * _SPLIT_RATE_FLOOR:
            return False
        if not self.lossless and not _has_levels(cu) and (cu.mode.is_intra or cu.mode == Mode.IBC):
            # a prediction good enough to send without residual rarely improves when split
            return False
        return True

    def snapshot(self, x: int, y: int, s: int):
        st = self.state
        planes = []
        for p, rec in enumerate(st.recon):
            px, py = st.plane_xy(p, x, y)
            n = st.plane_size(p, s)
            planes.append(rec[py:py + n, px:px + n].copy())
        return (x, y, s, planes, st.rsm.snapshot(x, y, s), st.history.copy(),
                st.palette.copy(), len(st.cus))

    def restore(self, snap) -> None:
        st = self.state
        x, y, s, planes, rsm, hist, pal, ncu = snap
        for p, a in enumerate(planes):
            px, py = st.plane_xy(p, x, y)
            n = st.plane_size(p, s)
            st.recon[p][py:py + n, px:px + n] = a
        st.rsm.restore(rsm)
        st.history, st.palette = hist, pal
        del st.cus[ncu:]

    # -- mode decision -----------------------------------------------------

    def evaluate(self, cu: CodingUnit, orig: list[np.ndarray], pred=None, res=None) -> Candidate:
        """RD cost of ``cu``. Residual-mode candidates are scored without
        building their reconstruction; only the winner is rebuilt (by the
        shared :func:`reconstruct_cu`) when committed."""
        recon = None
        if res is not None and cu.mode.has_residual:
            planes = inverse_planes(res, self.lossless) if cu.act else res
            dist = sum(int(clip_sse(o, p, r)) for o, p, r in zip(orig, pred, planes))
        else:
            recon = reconstruct_cu(self.state, cu, pred, res)
            dist = sum(_sse(o, r) for o, r in zip(orig, recon))
        rate = cu_rate(self.state, cu)
        return Candidate(RdCost.of(dist, rate, self.lam, int(cu.mode)), cu, recon, pred, res)

    def commit(self, c: Candidate) -> None:
        recon = c.recon
        if recon is None:
            recon = reconstruct_cu(self.state, c.cu, c.pred, c.res)
        commit_cu(self.state, c.cu, recon)

    def block(self, x: int, y: int, s: int) -> list[np.ndarray]:
        out = []
        for p, o in enumerate(self.orig):
            px, py = self.state.plane_xy(p, x, y)
            n = self.state.plane_size(p, s)
            out.append(o[py:py + n, px:px + n])
        return out

    def best_cu(self, x: int, y: int, s: int) -> Candidate:
        """Minimum-cost CU over the enabled modes (pre-screened, then full RD)."""
        orig = self.block(x, y, s)
        cands = list(self.intra_candidates(x, y, s, orig))
        first = min(c.rd for c in cands)
        if first.distortion == 0 and first.rate <= self.copy_rate_floor:
            return min(cands, key=lambda c: c.rd)
        ibc_vecs: list[tuple[int, int]] = []
        if self.use_ibc:
            ibc_vecs = self.ibc_vectors(x, y, s)
            if self.may_win(Mode.IBC, cands):
                cands.extend(self.ibc_candidates(x, y, s, orig, ibc_vecs))
        if self.use_plt and self.may_win(Mode.PLT, cands):
            c = self.palette_candidate(x, y, s, orig, min(c.rd.cost for c in cands))
            if c is not None:
                cands.append(c)
        if self.use_isc and self.may_win(Mode.ISC, cands):
            best = min(c.rd for c in cands)
            if best.distortion > 0 or best.rate > 8 or self.lossless and best.mode != Mode.IBC:
                c = self.isc_candidate(x, y, s, orig, ibc_vecs)
                if c is not None:
                    cands.append(c)
        return min(cands, key=lambda c: c.rd)

    def may_win(self, mode: Mode, cands: list[Candidate]) -> bool:
        """False when no CU of ``mode`` can undercut the best cost so far
        (its rate alone is at least the mode's floor)."""
        return min(c.rd.cost for c in cands) > self.lam * self.rate_floor[mode]

    def residual_candidates(self, cu_proto: CodingUnit, orig, pred) -> list[Candidate]:
        st = self.state
        res = [o - p for o, p in zip(orig, pred)]
        ctx = tu_context(st, cu_proto.mode)
        out = []
        variants = [False, True] if self.use_act else [False]
        for act in variants:
            planes = forward_planes(res, self.lossless) if act else res
            coded = [self.choose_tus(np.asarray(r, dtype=np.int64), ctx) for r in planes]
            cu = CodingUnit(cu_proto.x, cu_proto.y, cu_proto.size, cu_proto.mode, act=act,
                            residual=[c[0] for c in coded], bv=cu_proto.bv)
            out.append(self.evaluate(cu, orig, pred, [c[1] for c in coded]))
        return out

    def choose_tus(self, r: np.ndarray, ctx: TuContext) -> tuple[list[TuResidual | None], np.ndarray]:
        """Per-TU residual coding of one plane, with the decoded residual plane."""
        n = r.shape[0]
        tus = []
        rec = np.empty((n, n), np.int64)
        for ox, oy, ts in tu_offsets(n):
            tu, rr = self.choose_tu(np.ascontiguousarray(r[oy:oy + ts, ox:ox + ts]), ctx)
            tus.append(tu)
            rec[oy:oy + ts, ox:ox + ts] = rr
        return tus, rec

    def choose_tu(self, blk: np.ndarray, ctx: TuContext) -> tuple[TuResidual | None, np.ndarray]:
        """Cheapest coding of one residual block: uncoded, transform, skip or BDPCM."""
        try_tsm = ctx.forced_tsm or ctx.ts_flag or ctx.parity
        bdir = 0
        if ctx.allow_bdpcm and try_tsm:
            bdir = 1 if ctx.bdpcm_mode == CodingMode.TSM_BDPCM_H else 2
        code, lv, rec, _, bits = tu_decide(
            blk, self.state.qp.divisor, self.lam, dct_matrix(blk.shape[0]), not ctx.forced_tsm,
            try_tsm, bdir, ctx.parity, self.lossless, int(ctx.ts_flag), int(ctx.allow_bdpcm))
        if code < 0:
            return None, rec
        return TuResidual(CodingMode(code), lv, _bits=int(bits)), rec

    # -- intra ---------------------------------------------------------------

    def intra_candidates(self, x: int, y: int, s: int, orig) -> list[Candidate]:
        st = self.state
        modes = [m for m in st.table if m.is_intra]
        luma = orig[0]
        preds = intra_all(st.recon[0], x, y, s)
        bdpcm = ToolFlags.BDPCM in st.tools
        scored = []
        for m in modes:
            p0 = preds[_INTRA_SLOT[m]]
            sad = int(block_sad(luma, p0))
            if bdpcm and m in (Mode.INTRA_H, Mode.INTRA_V):
                d = luma - p0
                axis = 1 if m == Mode.INTRA_H else 0
                sad = min(sad, int(np.abs(np.diff(d, axis=axis)).sum()) + sad // s)
            scored.append((sad, int(m), m))
        scored.sort()
        chroma = []
        for p in range(1, st.nplanes):
            px, py = st.plane_xy(p, x, y)
            chroma.append(intra_all(st.recon[p], px, py, st.plane_size(p, s)))
        out = []
        for _, _, m in scored[: self.cfg.intra_rd]:
            k = _INTRA_SLOT[m]
            pred = [preds[k]] + [c[k] for c in chroma]
            out.extend(self.residual_candidates(CodingUnit(x, y, s, m), orig, pred))
        return out

    # -- IBC -----------------------------------------------------------------

    def hash_vectors(self, x: int, y: int, w: int, b: int, limit: int) -> list[tuple[int, int]]:
        """Nearest ``limit`` hash hits for the b x b block at (x, y) within the
        reference window of a w x w block; memoised for the current CTU."""
        key = (x, y, w, b)
        hits = self.hash_memo.get(key)
        if hits is None:
            hits = self.hash_memo[key] = self._hash_lookup(x, y, w, b, max(limit, self.cfg.hash_probe))
        return hits[:limit]

    def _hash_lookup(self, x: int, y: int, w: int, b: int, limit: int) -> list[tuple[int, int]]:
        """Flat blocks are skipped: their buckets are huge and intra prediction
        already reproduces them."""
        table = self.hash.get(b)
        if table is None:
            return []
        blk = self.orig[0][y:y + b, x:x + b]
        if blk.min() == blk.max():
            return []
        st = self.state
        cx, cy = st.rsm.ctu_x, st.rsm.ctu_y
        pos = table.bucket_rows(int(table.keys[y, x]), cy, min(y, cy + CTU - w) + 1)
        if len(pos) == 0:
            return []
        rx, ry = pos[:, 0], pos[:, 1]
        keep = (rx >= cx - CTU) & (rx + w <= cx + CTU) & ((ry + w <= y) | (rx + w <= x))
        if not keep.any():
            return []
        bvx = rx[keep] - x
        bvy = ry[keep] - y
        order = np.lexsort((bvx, bvy, np.abs(bvx) + np.abs(bvy)))[:limit]
        return [(int(bvx[i]), int(bvy[i])) for i in order]

    def ibc_vectors(self, x: int, y: int, s: int) -> list[tuple[int, int]]:
        st = self.state
        cands = [v for v in cbvp_classify(st.history, x, y, s, s) if v is not None]
        cands += st.history.vectors()
        if s >= 8:
            b = 16 if s >= 16 else 8
            cands += self.hash_vectors(x, y, s, b, self.cfg.hash_probe)
        seen = set()
        out = []
        for v in cands:
            if v in seen:
                continue
            seen.add(v)
            if bv_valid(v, x, y, s, s, st.rsm):
                out.append(v)
        return out

    def ibc_candidates(self, x: int, y: int, s: int, orig, vecs) -> list[Candidate]:
        if not vecs:
            return []
        st = self.state
        classes = cbvp_classify(st.history, x, y, s, s)
        scored = []
        luma = orig[0]
        rec = st.recon[0]
        for v in vecs:
            ref = rec[y + v[1]:y + v[1] + s, x + v[0]:x + v[0] + s]
            sad = int(np.abs(luma - ref).sum())
            bits = 4 if v in classes else 1 + _se_bits(v[0]) + _se_bits(v[1])
            scored.append((sad + self.sqrt_lam * bits, bits, v))
        scored.sort()
        out = []
        for _, _, v in scored[: self.cfg.ibc_rd]:
            proto = CodingUnit(x, y, s, Mode.IBC, bv=v)
            pred = [a.astype(np.int64) for a in ibc_predict(v, x, y, s, s, st.rsm)]
            out.extend(self.residual_candidates(proto, orig, pred))
        return out

    # -- palette -------------------------------------------------------------

    def palette_candidate(self, x: int, y: int, s: int, orig, bound: float = math.inf) -> Candidate | None:
        """Palette CU for the block, or None when it cannot be built or cannot
        beat ``bound`` on its palette syntax alone."""
        st = self.state
        nc = st.palette_components
        px = np.stack([orig[c] for c in range(nc)], axis=-1).reshape(-1, nc)
        packed = px[:, 0] if nc == 1 else (px[:, 0] << 16) | (px[:, 1] << 8) | px[:, 2]
        colors, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
        if len(colors) > 4 * MAX_PALETTE:
            return None
        order = np.lexsort((colors, -counts))
        top = order[:MAX_PALETTE]
        if counts[top].sum() < 0.75 * len(packed):
            return None
        cols = _unpack(colors, nc)
        tol = self.tol
        chosen: list[tuple] = []
        for c in cols[top].tolist():
            if tol and any(max(abs(a - b) for a, b in zip(q, c)) <= tol for q in chosen):
                continue
            chosen.append(tuple(c))
        pred = st.palette.predictor
        pred_index = {c: i for i, c in enumerate(pred)}
        reuse = [False] * len(pred)
        new = []
        for c in chosen:
            if c in pred_index:
                reuse[pred_index[c]] = True
            else:
                new.append(c)
        palette = [c for c, r in zip(pred, reuse) if r] + new
        table = np.array(palette, dtype=np.int64).reshape(-1, nc)
        # per distinct color: nearest entry, or escape when beyond tolerance
        d = np.abs(cols[:, None, :] - table[None, :, :]).max(axis=2)
        near = d.argmin(axis=1)
        esc = d[np.arange(len(cols)), near] > self.tol
        col_index = np.where(esc, len(palette), near)
        indices = col_index[inverse].reshape(s, s)
        epos = escape_positions(indices, len(palette))
        evals = px[epos]
        if not self.lossless:
            evals = quantize(evals, st.qp)
        pd = PaletteData(reuse, new, palette, indices, np.asarray(evals, dtype=np.int64).reshape(-1, nc))
        cu = CodingUnit(x, y, s, Mode.PLT, palette=pd)
        if nc == 1 and st.nplanes == 3:
            wr = BitCounter()
            wr.write_ue(self.plt_code)
            write_palette(wr, st, pd)
            if self.lam * wr.bits_written >= bound:
                return None
            return self.palette_with_chroma(cu, orig)
        return self.evaluate(cu, orig)

    def palette_with_chroma(self, cu: CodingUnit, orig) -> Candidate:
        st = self.state
        ctx = tu_context(st, Mode.PLT, forced=True)
        pred: list = [None]
        tus: list = [[]]
        res: list = []
        for p in range(1, st.nplanes):
            px, py = st.plane_xy(p, cu.x, cu.y)
            n = st.plane_size(p, cu.size)
            pr = intra_all(st.recon[p], px, py, n)[_INTRA_SLOT[Mode.INTRA_DC]]
            pred.append(pr)
            tu, rr = self.choose_tus(orig[p] - pr, ctx)
            tus.append(tu)
            res.append(rr)
        cu.residual = tus
        return self.evaluate(cu, orig, pred, res)

    # -- string copy ---------------------------------------------------------

    def isc_candidate(self, x: int, y: int, s: int, orig, ibc_vecs) -> Candidate | None:
        st = self.state
        cands = list(st.history.vectors())
        cands += [v for v in ibc_vecs if v not in cands]
        sub = 4 if s <= 8 else 8
        if 4 in self.hash:
            for oy in range(0, s, sub):
                for ox in range(0, s, sub):
                    for v in self.hash_vectors(x + ox, y + oy, sub, sub, 2):
                        if v not in cands:
                            cands.append(v)
        if not cands:
            return None
        runs = segment_strings(orig, x, y, s, s, st.rsm, cands[:24], self.tol)
        if runs is None:
            return None
        return self.evaluate(CodingUnit(x, y, s, Mode.ISC, strings=runs), orig)


# ---------------------------------------------------------------- helpers

# plane order of _kernels.intra_all
_INTRA_SLOT = {Mode.INTRA_DC: 0, Mode.INTRA_PLANAR: 1, Mode.INTRA_H: 2, Mode.INTRA_V: 3}


def _sse(a, b) -> int:
    d = np.asarray(a, dtype=np.int64) - b
    return int((d * d).sum())


def _se_bits(v: int) -> int:
    m = 2 * v - 1 if v > 0 else -2 * v
    return 2 * (m + 1).bit_length() - 1


def _unpack(colors: np.ndarray, nc: int) -> np.ndarray:
    if nc == 1:
        return colors.reshape(-1, 1).astype(np.int64)
    return np.stack([(colors >> 16) & 255, (colors >> 8) & 255, colors & 255], axis=1).astype(np.int64)


def _has_levels(cu: CodingUnit) -> bool:
    if cu.residual is None:
        return False
    return any(t is not None for plane in cu.residual for t in plane)


def _tu_rate(t: TuResidual, ctx: TuContext) -> int:
    bits = 1 + t.level_bits
    if ctx.allow_bdpcm:
        bits += 1
    if ctx.ts_flag and t.coding_mode.bdpcm_dir is None:
        bits += 1
    return bits
