"""CSV tables and matplotlib figures for the analysis commands."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .bdrate import BdRateError, RdPoint, bd_rate
from .codec_core import FrameStats, Mode
from .media_io import format_psnr

MODE_NAMES = [m.name for m in Mode]
ANALYSIS_FIELDS = (["frame", "bits", "psnr_y", "psnr_u", "psnr_v"]
                   + [f"pct_{n.lower()}" for n in MODE_NAMES] + ["pct_act"])
CURVE_FIELDS = ["class", "sequence", "qp", "bits", "psnr"]


@dataclass
class FrameAnalysis:
    frame: int
    bits: int
    psnr: tuple[float, ...]
    stats: FrameStats

    def row(self) -> dict:
        out = {"frame": self.frame, "bits": self.bits}
        for name, v in zip(("psnr_y", "psnr_u", "psnr_v"), self.psnr):
            out[name] = format_psnr(v)
        pct = self.stats.mode_percent()
        for n in MODE_NAMES:
            out[f"pct_{n.lower()}"] = f"{pct[n]:.2f}"
        area = sum(self.stats.mode_area.values()) or 1
        out["pct_act"] = f"{100.0 * self.stats.act_area / area:.2f}"
        return out


def write_analysis(rows: Iterable[FrameAnalysis], fh: TextIO) -> None:
    w = csv.DictWriter(fh, ANALYSIS_FIELDS, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.row())


@dataclass(frozen=True)
class CurveRow:
    cls: str
    sequence: str
    qp: int
    bits: int
    psnr: float


def write_curve(rows: Iterable[CurveRow], fh: TextIO, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(CURVE_FIELDS)
    for r in rows:
        w.writerow([r.cls, r.sequence, r.qp, r.bits, format_psnr(r.psnr)])


def read_curve(fh: TextIO) -> list[CurveRow]:
    reader = csv.DictReader(fh)
    missing = set(CURVE_FIELDS) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"curve CSV lacks columns: {', '.join(sorted(missing))}")
    out = []
    for line, rec in enumerate(reader, start=2):
        try:
            psnr = float("inf") if rec["psnr"] == "lossless" else float(rec["psnr"])
            out.append(CurveRow(rec["class"], rec["sequence"], int(rec["qp"]), int(rec["bits"]), psnr))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"curve CSV line {line}: {exc}") from None
    return out


def curves_by_sequence(rows: Sequence[CurveRow]) -> dict[tuple[str, str], list[RdPoint]]:
    out: dict[tuple[str, str], list[RdPoint]] = {}
    for r in rows:
        out.setdefault((r.cls, r.sequence), []).append(RdPoint(r.psnr, r.bits))
    return out


def class_bd_rates(anchor_rows: Sequence[CurveRow], test_rows: Sequence[CurveRow]) -> dict[str, float]:
    """Mean per-sequence BD-rate per class, plus ``"all"`` over every sequence."""
    anchor = curves_by_sequence(anchor_rows)
    test = curves_by_sequence(test_rows)
    if set(anchor) != set(test):
        diff = sorted(set(anchor) ^ set(test))
        raise BdRateError(f"anchor and test cover different sequences: {diff[:4]}")
    if not anchor:
        raise BdRateError("no curves")
    per_class: dict[str, list[float]] = {}
    for key in sorted(anchor):
        per_class.setdefault(key[0], []).append(bd_rate(anchor[key], test[key]))
    out = {c: sum(v) / len(v) for c, v in per_class.items()}
    every = [x for v in per_class.values() for x in v]
    out["all"] = sum(every) / len(every)
    return out


# ---------------------------------------------------------------- figures

def _pyplot():
    # imported on demand: the codec commands never pay for matplotlib
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _finish(fig, path) -> None:
    plt = _pyplot()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_rd_curves(curves: dict[str, Sequence[RdPoint]], path, title: str = "") -> None:
    """One PSNR-vs-bits line per label (log rate axis)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for label, pts in sorted(curves.items()):
        pts = sorted(pts)
        ax.plot([p.bitrate for p in pts], [p.quality for p in pts], marker="o", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("bits")
    ax.set_ylabel("PSNR (dB)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    _finish(fig, path)


def plot_mode_usage(rows: Sequence[FrameAnalysis], path) -> None:
    """Stacked per-frame CU-area share of every mode."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(rows) + 3), 4))
    bottom = [0.0] * len(rows)
    xs = [r.frame for r in rows]
    for n in MODE_NAMES:
        vals = [r.stats.mode_percent()[n] for r in rows]
        if not any(vals):
            continue
        ax.bar(xs, vals, bottom=bottom, label=n.lower())
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_xlabel("frame")
    ax.set_ylabel("CU area (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8, loc="upper right")
    _finish(fig, path)


def plot_bdrate(results: dict[str, float], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = list(results)
    vals = [results[k] for k in labels]
    ax.bar(labels, vals, color=["tab:green" if v < 0 else "tab:red" for v in vals])
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_ylabel("BD-rate (%)")
    _finish(fig, path)
